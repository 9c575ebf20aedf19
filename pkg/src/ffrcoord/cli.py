"""Command-line front end: synthesize, simulate, linearize, verify-fcrd, sweep.

Exit codes: 0 success (or an inconclusive verdict), 1 verdict failure,
2 input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import fcrd, gridsim
from . import turbine as wt
from .lti import dc_gain
from .matching import verify_matching
from .scenario_io import (PRESETS, GridExperiment, ScenarioError, TurbineStepExperiment,
                          build, load_document, preset_document, set_path)
from .timeseries import TimeSeries

EXIT_OK, EXIT_VERDICT, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3
MATCH_TOL = 1e-9


class InputError(Exception):
    pass


def _records_text(rec: dict) -> str:
    return "".join(f"{k}={v}\n" for k, v in rec.items())


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _document(args) -> dict:
    if args.scenario and args.preset:
        raise ScenarioError("give either --scenario or --preset, not both")
    if args.scenario:
        doc = load_document(args.scenario)
    elif args.preset:
        doc = preset_document(args.preset)
    else:
        raise ScenarioError("a scenario is required (--scenario FILE or --preset NAME)")
    if getattr(args, "dt", None) is not None:
        doc["dt"] = args.dt
    if getattr(args, "t_end", None) is not None:
        doc["t_end"] = args.t_end
    return doc


# --- verdicts ---------------------------------------------------------------

def fcrd_verdict(ts: TimeSeries, sc: gridsim.Scenario) -> fcrd.Verdict:
    """FCR-D check with the fault size, damping and gain taken from the scenario."""
    spec = fcrd.FcrdSpec(f0=sc.f0, load_damping=sc.load_damping)
    return fcrd.check_fcrd(ts, ts, spec, p_channel="P_hydro_wind",
                           fault=sc.disturbance.dP, r_fcr=dc_gain(sc.target))


def grid_summary(ts: TimeSeries, sc: gridsim.Scenario) -> dict:
    """Scenario-level figures beyond the FCR-D verdict."""
    rec = {"scenario": sc.name, "mode": sc.mode}
    after = ts.time >= sc.disturbance.t + 0.5
    peak = float(np.max(np.abs(ts["P_ideal"])))
    gap = float(np.max(np.abs(ts["P_hydro_wind"] - ts["P_ideal"])[after])) if after.any() else 0.0
    rec["tracking_error_mw"] = gap
    rec["tracking_error_rel"] = gap / peak if peak > 0 else 0.0
    if sc.mode == "closed_loop":
        rec["nadir_deviation_hz"] = sc.f0 - float(ts["f_coi"].min())
    for c in ts.names:
        if c.startswith("x_"):
            rec[f"min_{c}"] = float(ts[c].min())
        elif c.startswith("Pout_"):
            rec[f"peak_{c}"] = float(ts[c].max())
        elif c.startswith("prot_"):
            rec[f"{c}_triggered"] = bool(ts[c].max() > 0)
    return {k: _fmt(v) for k, v in rec.items()}


def turbine_runs(exp: TurbineStepExperiment) -> tuple[TimeSeries, dict, bool]:
    wind = wt.load_wind_trace(exp.wind_trace) if exp.wind_trace else None
    channels: dict[str, np.ndarray] = {}
    rec: dict = {"scenario": exp.name}
    ok = True
    t = None
    for v in exp.speeds:
        p_mpp = wt.mpp(v, exp.params)["p_mpp"]
        for step in exp.steps:
            tag = f"v{v:g}_s{round(step * 100):d}"
            r = wt.simulate_step(v, step, exp.params, exp.t_end, exp.dt, exp.t_step, wind)
            t = r["t"]
            channels[f"Pe_{tag}"] = r["p_e"]
            channels[f"Pn_{tag}"] = r["p_e"] / p_mpp
            channels[f"Pref_{tag}"] = r["p_ref"]
            channels[f"x_{tag}"] = r["x"]
            channels[f"prot_{tag}"] = r["protection"]
            rec[f"min_x_{tag}"] = float(r["x"].min())
            rec[f"final_x_{tag}"] = float(r["x"][-1])
            rec[f"final_p_over_pmpp_{tag}"] = float(r["p_e"][-1] / p_mpp)
            rec[f"protection_{tag}"] = bool(r["protection"].max() > 0)
            ok &= bool(r["x"][-1] >= exp.params.x_floor - 0.01)
    if len(exp.speeds) >= 2 and wind is None:
        gaps = wt.normalized_overlay(exp.steps[0], exp.params, (exp.speeds[0], exp.speeds[1]),
                                     t_end=min(exp.t_end, 60.0), dt=exp.dt, t_step=exp.t_step)
        rec["overlay_gap_scaled"] = gaps["max_gap_scaled"]
        rec["overlay_gap_plain"] = gaps["max_gap_plain"]
    rec["passed"] = ok
    return TimeSeries(t, channels), {k: _fmt(v) for k, v in rec.items()}, ok


# --- commands ---------------------------------------------------------------

def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    if args.preset_pos:
        if args.preset and args.preset != args.preset_pos:
            raise ScenarioError("conflicting preset names")
        args.preset = args.preset_pos
    exp = build(_document(args))
    out = _out_dir(args)
    if isinstance(exp, TurbineStepExperiment):
        ts, rec, ok = turbine_runs(exp)
        ts.to_csv(out / f"{exp.name}.csv")
        text = _records_text(rec)
        (out / f"{exp.name}.verdict.txt").write_text(text)
        if args.plot:
            from .plotting import plot_turbine
            plot_turbine(ts, out / f"{exp.name}.png", exp.name)
        sys.stdout.write(text)
        return EXIT_OK if ok else EXIT_VERDICT

    sc = exp.scenario
    if exp.ideal or args.linear:
        ts = gridsim.simulate_linear(sc, ideal=exp.ideal)
    else:
        ts = gridsim.simulate(sc)
    ts.to_csv(out / f"{sc.name}.csv")
    summary = grid_summary(ts, sc)
    if sc.mode == "closed_loop":
        verdict = fcrd_verdict(ts, sc)
        text = verdict.to_text()
        failed = not verdict.passed and not verdict.inconclusive
    else:
        rep = verify_matching(sc.controllers)
        ok = rep.residual_inf_norm <= MATCH_TOL and rep.internal_stability
        text = _records_text({"passed": _fmt(ok), "matching_residual": _fmt(rep.residual_inf_norm),
                              "internal_stability": _fmt(rep.internal_stability)})
        failed = not ok
    (out / f"{sc.name}.verdict.txt").write_text(text)
    (out / f"{sc.name}.summary.txt").write_text(_records_text(summary))
    if args.plot:
        from .plotting import plot_grid
        plot_grid(ts, out / f"{sc.name}.png", sc.name)
    sys.stdout.write(text)
    return EXIT_VERDICT if failed else EXIT_OK


def cmd_synthesize(args) -> int:
    exp = build(_document(args))
    if not isinstance(exp, GridExperiment) or exp.scenario.controllers is None:
        raise ScenarioError("scenario has no actuators to synthesize controllers for")
    pset = exp.scenario.controllers
    rep = verify_matching(pset)
    data = pset.export()
    data.update(matching_residual=rep.residual_inf_norm, internal_stability=rep.internal_stability,
                problems=list(rep.problems))
    out = _out_dir(args)
    name = exp.scenario.name
    (out / f"{name}.controllers.json").write_text(json.dumps(data, indent=2) + "\n")
    lines = [f"target: {data['target']}"]
    for a in data["actuators"]:
        lines += [f"[{a['id']}] kind={a['kind']} share={a['share']!r}",
                  f"  plant: {a['plant']}",
                  f"  factor: {a['factor']}",
                  f"  controller: {a['controller']}",
                  f"  order: {a['controller_order']}"]
    lines += [f"normalized={_fmt(pset.normalized)}",
              f"matching_residual={_fmt(rep.residual_inf_norm)}",
              f"internal_stability={_fmt(rep.internal_stability)}"]
    lines += [f"diagnostic: {d}" for d in pset.diagnostics + list(rep.problems)]
    text = "\n".join(lines) + "\n"
    (out / f"{name}.controllers.txt").write_text(text)
    sys.stdout.write(text)
    ok = rep.residual_inf_norm <= MATCH_TOL and rep.internal_stability
    return EXIT_OK if ok else EXIT_VERDICT


def cmd_linearize(args) -> int:
    speeds = args.v or [8.0, 10.0]
    gains = args.k or [0.72]
    header = ["v", "k", "z_bar", "p_floor", "omega_mpp", "p_mpp_mw"]
    rows = ["\t".join(header)]
    for k in gains:
        params = wt.TurbineParams(k=k)
        for v in speeds:
            try:
                lin = wt.linearize(v, params)
            except ValueError as exc:
                raise ScenarioError(str(exc)) from exc
            vals = [v, k, lin["z_bar"], lin["p_floor"], lin["omega_mpp"], lin["p_mpp"]]
            rows.append("\t".join(f"{x:.4g}" for x in vals))
    text = "\n".join(rows) + "\n"
    if args.out:
        (_out_dir(args) / "linearize.tsv").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_verify(args) -> int:
    try:
        ts = TimeSeries.from_csv(args.csv)
    except OSError as exc:
        raise ScenarioError(f"cannot read {args.csv}: {exc.strerror}") from exc
    except (ValueError, StopIteration) as exc:
        raise ScenarioError(f"{args.csv}: not a trace file ({exc})") from exc
    for ch in ("f_coi", "P_hydro_wind"):
        if ch not in ts:
            raise ScenarioError(f"{args.csv}: missing channel {ch}")
    if args.scenario or args.preset:
        exp = build(_document(args))
        if not isinstance(exp, GridExperiment):
            raise ScenarioError("verify-fcrd needs a grid scenario")
        verdict = fcrd_verdict(ts, exp.scenario)
    else:
        spec = fcrd.FcrdSpec()
        verdict = fcrd.check_fcrd(ts, ts, spec, p_channel="P_hydro_wind", fault=args.fault, r_fcr=args.r_fcr)
    sys.stdout.write(verdict.to_text())
    return EXIT_VERDICT if not verdict.passed and not verdict.inconclusive else EXIT_OK


def _sweep_point(doc: dict) -> dict:
    exp = build(doc)
    sc = exp.scenario
    ts = gridsim.simulate_linear(sc, ideal=True) if exp.ideal else gridsim.simulate(sc)
    rec = grid_summary(ts, sc)
    if sc.mode == "closed_loop":
        rec.update(fcrd_verdict(ts, sc).as_records())
    return rec


def cmd_sweep(args) -> int:
    doc = _document(args)
    if doc.get("experiment") == "turbine_step":
        raise ScenarioError("sweep supports grid scenarios only")
    if args.values:
        try:
            values = [float(v) for v in args.values.split(",")]
        except ValueError as exc:
            raise ScenarioError(f"--values: {exc}") from exc
    elif args.range:
        start, stop, num = args.range
        values = np.linspace(float(start), float(stop), int(num)).tolist()
    else:
        raise ScenarioError("give --values or --range")
    docs = [set_path(doc, args.param, v) for v in values]
    for d in docs:
        build(d)  # fail on bad input before launching workers
    if args.jobs == 1:
        results = [_sweep_point(d) for d in docs]
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_point, docs))
    order = sorted(range(len(values)), key=lambda i: values[i])
    keys = []
    for r in results:
        keys += [k for k in r if k not in keys]
    lines = [",".join([args.param] + keys)]
    for i in order:
        lines.append(",".join([repr(float(values[i]))] + [results[i].get(k, "") for k in keys]))
    text = "\n".join(lines) + "\n"
    (_out_dir(args) / "sweep.csv").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


# --- parser -----------------------------------------------------------------

def _scenario_args(p: argparse.ArgumentParser, sim: bool = True) -> None:
    p.add_argument("--scenario", help="scenario file (YAML or JSON)")
    p.add_argument("--preset", choices=PRESETS, help="shipped scenario")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    if sim:
        p.add_argument("--dt", type=float, help="step size override, s")
        p.add_argument("--t-end", type=float, help="horizon override, s")
    p.add_argument("--seed", type=int, help="reserved; runs are deterministic")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ffrcoord", description="Coordinated hydro FCR and wind FFR design and simulation.")
    p.add_argument("-v", "--verbose", action="store_true", help="log at INFO level")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synthesize", help="design controllers and report the matching residual")
    _scenario_args(s, sim=False)
    s.set_defaults(func=cmd_synthesize)

    s = sub.add_parser("simulate", help="run a scenario, write CSV, verdict and figure")
    s.add_argument("preset_pos", nargs="?", metavar="PRESET", help="preset name (same as --preset)")
    _scenario_args(s)
    s.add_argument("--linear", action="store_true", help="use the linearized actuators")
    s.add_argument("--plot", action=argparse.BooleanOptionalAction, default=True,
                   help="render a PNG next to the CSV (default: on)")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("linearize", help="print first-order turbine models")
    s.add_argument("--v", type=float, action="append", help="wind speed, m/s (repeatable)")
    s.add_argument("--k", type=float, action="append", help="stabilizing gain (repeatable)")
    s.add_argument("--out", help="also write linearize.tsv here")
    s.set_defaults(func=cmd_linearize)

    s = sub.add_parser("verify-fcrd", help="check an existing trace CSV against FCR-D")
    s.add_argument("--csv", required=True, help="trace written by simulate")
    _scenario_args(s)
    s.add_argument("--fault", type=float, default=1400.0, help="lost generation, MW (without a scenario)")
    s.add_argument("--r-fcr", type=float, default=None, help="FCR gain, MW/Hz (without a scenario)")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("sweep", help="vary one scalar field and tabulate the outcome")
    _scenario_args(s)
    s.add_argument("--param", required=True, help="dotted field path, e.g. disturbance.dP or buses.1.wind.p_nom")
    s.add_argument("--values", help="comma-separated values")
    s.add_argument("--range", nargs=3, metavar=("START", "STOP", "NUM"), help="evenly spaced values")
    s.add_argument("--jobs", type=int, default=None, help="worker processes (default: CPU count)")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (gridsim.SimulationError, wt.TurbineInstability, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
