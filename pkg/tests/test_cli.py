import json
import subprocess
import sys

import pytest
import yaml

from ffrcoord import cli
from ffrcoord.timeseries import TimeSeries


def _run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def _records(text):
    return dict(line.split("=", 1) for line in text.splitlines() if "=" in line)


@pytest.fixture(scope="module")
def wind_hydro_out(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    code = cli.main(["simulate", "n5_wind_hydro", "--out", str(out)])
    return code, out


def test_simulate_writes_trace_verdict_summary_and_figure(wind_hydro_out):
    code, out = wind_hydro_out
    assert code == cli.EXIT_OK
    for suffix in (".csv", ".verdict.txt", ".summary.txt", ".png"):
        assert (out / f"n5_wind_hydro{suffix}").stat().st_size > 0
    rec = _records((out / "n5_wind_hydro.verdict.txt").read_text())
    assert rec["nadir_ok"] == "true"
    ts = TimeSeries.from_csv(out / "n5_wind_hydro.csv")
    assert ts.names[0] == "f_coi" and "P_ideal" in ts
    assert (out / "n5_wind_hydro.png").read_bytes()[:4] == b"\x89PNG"


def test_csv_is_byte_identical_across_runs(wind_hydro_out, tmp_path):
    _, out = wind_hydro_out
    assert cli.main(["simulate", "--preset", "n5_wind_hydro", "--out", str(tmp_path), "--no-plot"]) == 0
    assert (tmp_path / "n5_wind_hydro.csv").read_bytes() == (out / "n5_wind_hydro.csv").read_bytes()
    assert not (tmp_path / "n5_wind_hydro.png").exists()


def test_verify_round_trip_matches_inline_verdict(wind_hydro_out, capsys):
    _, out = wind_hydro_out
    code, text, _ = _run(["verify-fcrd", "--csv", str(out / "n5_wind_hydro.csv"),
                          "--preset", "n5_wind_hydro"], capsys)
    assert code == cli.EXIT_OK
    assert text == (out / "n5_wind_hydro.verdict.txt").read_text()


def test_hydro_only_fails_verdict(tmp_path, capsys):
    code, text, _ = _run(["simulate", "n5_hydro_only", "--out", str(tmp_path), "--no-plot"], capsys)
    assert code == cli.EXIT_VERDICT
    assert _records(text)["nadir_ok"] == "false"


def test_no_fault_is_inconclusive(tmp_path, capsys):
    code, text, _ = _run(["simulate", "n5_no_fault", "--out", str(tmp_path), "--no-plot",
                          "--t-end", "5"], capsys)
    assert code == cli.EXIT_OK
    assert _records(text)["inconclusive"] == "true"


def test_turbine_step_preset(tmp_path, capsys):
    code, text, _ = _run(["simulate", "turbine_step", "--out", str(tmp_path), "--no-plot"], capsys)
    assert code == cli.EXIT_OK
    assert _records(text)["passed"] == "true"
    ts = TimeSeries.from_csv(tmp_path / "turbine_step.csv")
    assert any(n.startswith("x_") for n in ts.names)


def test_linearize_table(capsys, tmp_path):
    code, text, _ = _run(["linearize", "--v", "8", "--v", "10", "--k", "0.72", "--k", "1.08",
                          "--out", str(tmp_path)], capsys)
    assert code == cli.EXIT_OK
    rows = [r.split("\t") for r in text.splitlines()]
    assert rows[0] == ["v", "k", "z_bar", "p_floor", "omega_mpp", "p_mpp_mw"]
    table = {(float(r[0]), float(r[1])): [float(x) for x in r[2:]] for r in rows[1:]}
    assert table[(8.0, 0.72)][:2] == pytest.approx([0.048, 0.048], rel=0.02)
    assert table[(10.0, 0.72)][:2] == pytest.approx([0.060, 0.060], rel=0.02)
    assert table[(8.0, 1.08)][:2] == pytest.approx([0.048, 0.096], rel=0.02)
    assert (tmp_path / "linearize.tsv").read_text() == text
    code, _, err = _run(["linearize", "--v", "30"], capsys)
    assert code == cli.EXIT_INPUT and "below-rated" in err


def test_synthesize_dvpp(tmp_path, capsys):
    code, text, _ = _run(["synthesize", "--preset", "dvpp_step", "--out", str(tmp_path)], capsys)
    assert code == cli.EXIT_OK
    assert "internal_stability=true" in text
    data = json.loads((tmp_path / "dvpp_step.controllers.json").read_text())
    assert data["matching_residual"] <= 1e-9
    assert [a["controller_order"] for a in data["actuators"]] == [4, 4]


def test_schema_errors_name_the_field(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text(yaml.safe_dump({"target": {"kind": "fcrd"}, "buses": [{"id": "1", "w_kin": 10, "colour": 1}]}))
    code, _, err = _run(["simulate", "--scenario", str(path), "--out", str(tmp_path)], capsys)
    assert code == cli.EXIT_INPUT
    assert "buses/0" in err and "colour" in err
    code, _, err = _run(["simulate", "--scenario", str(tmp_path / "missing.yaml")], capsys)
    assert code == cli.EXIT_INPUT
    code, _, err = _run(["simulate", "--out", str(tmp_path)], capsys)
    assert code == cli.EXIT_INPUT


def test_json_scenario_and_numerical_failure(tmp_path, capsys):
    doc = {
        "name": "stall", "t_end": 60.0,
        "target": {"kind": "fcrd", "r_fcr": 2000.0},
        "disturbance": {"t": 1.0, "dP": 500.0},
        "buses": [
            {"id": "1", "w_kin": 0.5, "wind": {"p_nom": 100.0, "v": 8.0, "protection": False}},
            {"id": "2", "w_kin": 0.5, "hydro": {"rating": 100.0, "T_w": 1.0}},
        ],
    }
    path = tmp_path / "stall.json"
    path.write_text(json.dumps(doc))
    code, _, err = _run(["simulate", "--scenario", str(path), "--out", str(tmp_path), "--no-plot"], capsys)
    assert code == cli.EXIT_NUMERIC
    assert "at t=" in err


def test_verify_rejects_non_trace(tmp_path, capsys):
    path = tmp_path / "x.csv"
    path.write_text("a,b\n1,2\n")
    code, _, err = _run(["verify-fcrd", "--csv", str(path)], capsys)
    assert code == cli.EXIT_INPUT


def test_sweep_sorted_by_value(tmp_path, capsys):
    code, text, _ = _run(["sweep", "--preset", "fcrd_aggregate", "--param", "buses.0.w_kin",
                          "--values", "110,60,90", "--jobs", "2", "--out", str(tmp_path)], capsys)
    assert code == cli.EXIT_OK
    lines = text.splitlines()
    assert lines[0].startswith("buses.0.w_kin,")
    assert [float(ln.split(",")[0]) for ln in lines[1:]] == [60.0, 90.0, 110.0]
    header = lines[0].split(",")
    nadir_ok = [ln.split(",")[header.index("nadir_ok")] for ln in lines[1:]]
    assert nadir_ok == ["false", "false", "true"]
    assert (tmp_path / "sweep.csv").read_text() == text
    code, _, err = _run(["sweep", "--preset", "fcrd_aggregate", "--param", "buses.7.w_kin",
                         "--values", "1", "--out", str(tmp_path)], capsys)
    assert code == cli.EXIT_INPUT


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "ffrcoord", "linearize", "--v", "8"],
                         capture_output=True, text=True, check=True)
    assert res.stdout.splitlines()[1].startswith("8\t0.72\t0.04794")


def test_sweep_range_writes_plain_scalars(tmp_path, capsys):
    code, text, _ = _run(["sweep", "--preset", "fcrd_aggregate", "--param", "disturbance.dP",
                          "--range", "1000", "1600", "3", "--jobs", "1", "--out", str(tmp_path)], capsys)
    assert code == cli.EXIT_OK
    assert "np." not in text and "True" not in text and "False" not in text
    header, *rows = [ln.split(",") for ln in text.splitlines()]
    assert [r[header.index("nadir_ok")] for r in rows] == ["true", "true", "false"]
