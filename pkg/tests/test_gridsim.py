from dataclasses import replace

import numpy as np
import pytest

from ffrcoord import fcrd
from ffrcoord import gridsim as gs
from ffrcoord import hydro as hy
from ffrcoord import scenario_io as sio
from ffrcoord import turbine as wt
from ffrcoord.lti import step_response


def test_coi_examples():
    assert gs.coi([50.0, 50.0, 50.0], [1.0, 2.0, 3.0]) == pytest.approx(50.0)
    assert gs.coi([49.0, 51.0], [1.0, 3.0]) == pytest.approx(50.5)
    # hand arithmetic: (34*49.8 + 22.5*49.9 + 7.5*50 + 33*50.1 + 13*50.2) / 110 = 5496.85 / 110
    w = list(gs.N5_W_KIN.values())
    assert gs.coi([49.8, 49.9, 50.0, 50.1, 50.2], w) == pytest.approx(49.9713636, abs=1e-7)


def test_coi_errors():
    with pytest.raises(ValueError):
        gs.coi([], [])
    with pytest.raises(ValueError):
        gs.coi([50.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        gs.coi([50.0, 50.0], [0.0, 0.0])


def test_n5_totals():
    sc = gs.n5_scenario("wind_hydro")
    assert sc.w_kin_total == pytest.approx(110.0)
    assert sc.inertia == pytest.approx(2 * 110e3 / 50)
    assert [a.id for a in sc.actuators()] == ["hydro1", "hydro2", "wind2", "hydro3", "wind4"]
    hydro1 = sc.buses[0].hydro
    assert hydro1.rating * hydro1.g0 == pytest.approx(9000.0)
    assert hydro1.z == pytest.approx(1.7857, abs=1e-4)


def test_no_disturbance_is_a_fixed_point():
    sc = gs.n5_scenario("wind_hydro", t_end=20.0, disturbance=gs.Disturbance(1.0, 0.0))
    ts = gs.simulate(sc)
    for name in ts.names:
        assert np.ptp(ts[name]) == 0.0, name
    assert np.all(ts["f_coi"] == 50.0)
    lin = gs.simulate_linear(sc)
    assert np.all(lin["f_coi"] == 50.0)


def test_ideal_aggregate_nadir():
    sc = gs.Scenario([gs.Bus("1", 110.0)], fcrd.design_target(), t_end=60.0)
    ts = gs.simulate_linear(sc, ideal=True)
    drop = 50.0 - ts["f_coi"].min()
    assert 0.8 < drop < 1.0
    # cross-check against the closed-form disturbance response
    y = step_response(fcrd.disturbance_response(fcrd.design_target(), 110.0, 400.0), 59.0, 0.01)
    assert drop == pytest.approx(-1400.0 * y["y"].min(), abs=1e-6)


def test_first_order_target_nearly_reaches_limit_from_band_edge():
    sc = gs.Scenario([gs.Bus("1", 110.0)], fcrd.derive_first_order_target()["f_temp"],
                     f_ref=49.9, t_end=60.0)
    ts = gs.simulate_linear(sc, ideal=True)
    assert 49.0 <= ts["f_coi"].min() < 49.02


def test_power_balance_holds_and_shrinks_with_step(n5_runs):
    sc, ts = n5_runs["wind_hydro"]
    res = gs.power_balance_residual(ts, sc)
    assert np.max(np.abs(res)) <= 1e-3 * sc.disturbance.dP
    # the residual is a truncation effect: halving dt roughly halves it
    short = replace(sc, t_end=30.0)
    half = replace(short, dt=0.005)
    res_full = gs.power_balance_residual(gs.simulate(short), short)
    res_half = gs.power_balance_residual(gs.simulate(half), half)
    assert np.max(np.abs(res_half)) < 0.6 * np.max(np.abs(res_full))


def test_steady_state_deviation():
    sc = gs.n5_scenario("wind_hydro", t_end=300.0)
    ts = gs.simulate(sc)
    expected = sc.disturbance.dP / (3100.0 + sc.load_damping)
    assert 50.0 - ts["f_coi"][-1] == pytest.approx(expected, rel=0.005)


def test_step_size_robustness():
    sc = gs.n5_scenario("wind_hydro", t_end=40.0)
    a = gs.simulate(sc)["f_coi"].min()
    b = gs.simulate(replace(sc, dt=0.005))["f_coi"].min()
    assert abs(a - b) < 1e-3


def test_wind_ffr_raises_the_nadir(n5_runs):
    nadirs = {k: ts["f_coi"].min() for k, (_, ts) in n5_runs.items()}
    assert nadirs["wind_hydro"] > nadirs["hydro_only"]
    assert nadirs["sensitivity_50pct"] > nadirs["hydro_only"]


def test_linear_and_nonlinear_nadirs_agree(n5_runs):
    for variant in ("hydro_only", "wind_hydro"):
        sc, ts = n5_runs[variant]
        lin = gs.simulate_linear(sc)
        assert abs(lin["f_coi"].min() - ts["f_coi"].min()) < 0.05


def test_hydro_only_run(n5_runs):
    sc, ts = n5_runs["hydro_only"]
    assert 50.0 - ts["f_coi"].min() > 1.0
    pre = int(sc.disturbance.t / sc.dt)
    window = slice(pre, pre + int(1.0 / sc.dt) + 1)
    for name in ("P_hydro1", "P_hydro2", "P_hydro3"):
        assert ts[name][window].min() < ts[name][pre] - 1.0
    # [DERIVED] frozen nadir of the reference run
    assert 50.0 - ts["f_coi"].min() == pytest.approx(1.1257, abs=1e-3)


def test_wind_hydro_run(n5_runs):
    sc, ts = n5_runs["wind_hydro"]
    assert 50.0 - ts["f_coi"].min() <= 1.0
    after = ts.time >= sc.disturbance.t + 0.5
    gap = np.abs(ts["P_hydro_wind"] - ts["P_ideal"])[after].max()
    assert gap <= 0.05 * ts["P_ideal"].max()
    for b in ("2", "4"):
        assert 0.85 <= ts[f"x_wind{b}"].min() <= 0.95
        assert not ts[f"prot_wind{b}"].any()
    assert 450.0 <= ts["Pout_wind2"].max() <= 500.0


def test_sensitivity_run(n5_runs):
    sc, ts = n5_runs["sensitivity_50pct"]
    assert ts["f_coi"].min() >= 49.0
    assert ts["Pout_wind2"].max() == pytest.approx(250.0, abs=1e-6)
    assert ts["prot_wind4"].any()
    # the bus-4 reference peaks near twice P_MPP, beyond the +-50 % class with the 0.78 floor
    assert 0.75 <= ts["x_wind4"].min() < 0.8


def test_open_loop_dvpp_tracks_target():
    sc = sio.build(sio.preset_document("dvpp_step")).scenario
    ts = gs.simulate(sc)
    ideal = ts["P_ideal"]
    assert ideal[-1] == pytest.approx(0.5 * 20.0 * (1 - np.exp(-59 / 17)), rel=0.1)
    assert np.max(np.abs(ts["P_hydro_wind"] - ideal)) < 0.1 * 0.5 * 20.0
    lin = gs.simulate_linear(sc)
    assert np.max(np.abs(lin["P_hydro_wind"] - lin["P_ideal"])) < 1e-9


def test_scenario_validation():
    target = fcrd.design_target()
    with pytest.raises(ValueError, match="w_kin"):
        gs.Scenario([gs.Bus("1", 0.0)], target).validate()
    with pytest.raises(ValueError, match="no controllers"):
        gs.Scenario([gs.Bus("1", 10.0, hydro=hy.HydroParams(100.0), fcr_share=1.0)], target).validate()
    with pytest.raises(ValueError, match="mode"):
        gs.Scenario([gs.Bus("1", 10.0)], target, mode="island").validate()
    with pytest.raises(ValueError, match="positive"):
        gs.Scenario([gs.Bus("1", 10.0)], target, dt=0.0).validate()
    with pytest.raises(ValueError, match="wind speed"):
        gs.Bus("2", 1.0, wind=wt.TurbineParams.farm(100.0), wind_speed=15.0)
    with pytest.raises(ValueError, match="w_kin"):
        gs.Bus("2", -1.0)
    with pytest.raises(ValueError, match="unknown"):
        gs.n5_scenario("offshore")
    sc = gs.n5_scenario("wind_hydro")
    other = gs.n5_scenario("hydro_only")
    with pytest.raises(ValueError, match="do not match"):
        replace(sc, controllers=other.controllers).validate()


def test_divergence_is_reported_with_time():
    # tiny inertia and a large loss stall the unprotected turbine
    bus = gs.Bus("1", 0.5, wind=wt.TurbineParams.farm(100.0, protection=False), wind_speed=8.0, ffr_share=1.0)
    hydro = gs.Bus("2", 0.5, hydro=hy.HydroParams(100.0), fcr_share=1.0)
    sc = gs.Scenario([bus, hydro], fcrd.design_target(fcrd.FcrdSpec(r_fcr=2000.0)),
                     disturbance=gs.Disturbance(1.0, 500.0), t_end=60.0).with_synthesis()
    with pytest.raises(gs.SimulationError) as exc:
        gs.simulate(sc)
    assert exc.value.t > 1.0


@pytest.mark.parametrize("variant", ["hydro_only", "wind_hydro", "sensitivity_50pct"])
def test_presets_match_builder(variant):
    built = sio.build(sio.preset_document(f"n5_{variant}")).scenario
    ref = gs.n5_scenario(variant)
    assert built.buses == ref.buses
    assert built.target.equals(ref.target)
    assert built.disturbance == ref.disturbance
    for a, b in zip(built.controllers.controllers, ref.controllers.controllers):
        assert a.equals(b)


def test_simulation_is_bit_reproducible():
    sc = gs.n5_scenario("wind_hydro", t_end=10.0)
    a, b = gs.simulate(sc), gs.simulate(sc)
    for name in a.names:
        assert np.array_equal(a[name], b[name])
    assert a.to_csv() == b.to_csv()
