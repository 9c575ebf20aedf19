"""Uniform-frequency power system with hydro FCR and wind FFR in closed loop.

All machines share one centre-of-inertia frequency f.  With the deviation
df = f - f_ref,

    (2 sum(W_kin) / f0) d(df)/dt = sum(P_i) - D df - P_dist

where P_i is the reserve power (MW above pre-fault output) of actuator i and
W_kin is in MWs.  Each actuator's controller K_i sees e = f_ref - f.  Hydro
controllers command a gate offset (pu), wind controllers a change of the
power reference in per unit of the farm's MPP output.

In open-loop mode there is no swing equation: e is a reference step and the
result is the power the actuators deliver, as in a DVPP test.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import hydro as hy
from . import turbine as wt
from .lti import RationalTF, StateSpace
from .matching import ActuatorSpec, ParticipationSet, synthesize
from .timeseries import TimeSeries


class SimulationError(RuntimeError):
    """Numerical failure during a run; carries the time it happened."""

    def __init__(self, msg: str, t: float):
        super().__init__(f"{msg} at t={t:.6g} s")
        self.t = t


@dataclass(frozen=True)
class Bus:
    id: str
    w_kin: float = 0.0  # GWs
    hydro: hy.HydroParams | None = None
    fcr_share: float = 0.0
    wind: wt.TurbineParams | None = None
    wind_speed: float = 0.0  # m/s
    ffr_share: float = 0.0

    def __post_init__(self):
        if self.w_kin < 0:
            raise ValueError(f"bus {self.id}: w_kin must be nonnegative")
        if self.wind is not None and not 0 < self.wind_speed <= self.wind.v_max:
            raise ValueError(f"bus {self.id}: wind speed {self.wind_speed} outside (0, {self.wind.v_max:.3g}]")


@dataclass(frozen=True)
class Disturbance:
    t: float = 1.0
    dP: float = 1400.0  # MW of generation lost


@dataclass
class Scenario:
    buses: list[Bus]
    target: RationalTF
    controllers: ParticipationSet | None = None
    f0: float = 50.0
    f_ref: float | None = None  # pre-fault frequency and controller reference, defaults to f0
    load_damping: float = 400.0
    disturbance: Disturbance = field(default_factory=Disturbance)
    t_end: float = 120.0
    dt: float = 0.01
    mode: str = "closed_loop"
    name: str = ""

    @property
    def reference(self) -> float:
        return self.f0 if self.f_ref is None else self.f_ref

    @property
    def w_kin_total(self) -> float:
        return sum(b.w_kin for b in self.buses)

    @property
    def inertia(self) -> float:
        """2 sum(W_kin) / f0 in MW s/Hz."""
        return 2.0 * self.w_kin_total * 1e3 / self.f0

    def actuators(self) -> list[ActuatorSpec]:
        out = []
        for b in self.buses:
            if b.hydro is not None:
                out.append(ActuatorSpec(f"hydro{b.id}", hy.linearize(b.hydro), b.fcr_share, "hydro"))
            if b.wind is not None:
                h = wt.linearize(b.wind_speed, b.wind)["h_wind_mw"]
                out.append(ActuatorSpec(f"wind{b.id}", h, b.ffr_share, "wind"))
        return out

    def with_synthesis(self) -> "Scenario":
        return replace(self, controllers=synthesize(self.actuators(), self.target))

    def validate(self) -> None:
        if self.mode not in ("closed_loop", "open_loop"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "closed_loop" and self.w_kin_total <= 0:
            raise ValueError("sum of w_kin must be positive")
        if self.dt <= 0 or self.t_end <= 0:
            raise ValueError("dt and t_end must be positive")
        if self.load_damping < 0:
            raise ValueError("load_damping must be nonnegative")
        acts = self.actuators()
        if self.controllers is None:
            if acts:
                raise ValueError("scenario has actuators but no controllers")
            return
        ids = [a.id for a in self.controllers.actuators]
        if len(self.controllers.controllers) != len(acts) or ids != [a.id for a in acts]:
            raise ValueError(f"controllers {ids} do not match actuators {[a.id for a in acts]}")

    def n_steps(self) -> int:
        n = int(round(self.t_end / self.dt))
        if n < 1:
            raise ValueError("t_end shorter than one step")
        return n


def coi(frequencies: Sequence[float], w_kins: Sequence[float]) -> float:
    """Kinetic-energy-weighted mean frequency."""
    if len(frequencies) == 0:
        raise ValueError("empty input")
    if len(frequencies) != len(w_kins):
        raise ValueError("frequencies and w_kins differ in length")
    w = np.asarray(w_kins, dtype=float)
    if w.sum() <= 0:
        raise ValueError("sum of w_kin must be positive")
    return float(np.dot(w, np.asarray(frequencies, dtype=float)) / w.sum())


class _Bank:
    """Block-diagonal realization of several SISO systems sharing one input."""

    def __init__(self, tfs: Sequence[RationalTF]):
        blocks = [StateSpace.from_tf(h) for h in tfs]
        n = sum(b.n for b in blocks)
        self.A = np.zeros((n, n))
        self.B = np.zeros(n)
        self.C = np.zeros((len(blocks), n))
        self.D = np.array([b.D for b in blocks])
        i = 0
        for r, b in enumerate(blocks):
            self.A[i:i + b.n, i:i + b.n] = b.A
            self.B[i:i + b.n] = b.B
            self.C[r, i:i + b.n] = b.C
            i += b.n
        self.n = n


def _held_inputs(sc: Scenario, t: float) -> tuple[float, float]:
    """Disturbance (MW) and open-loop reference offset (Hz) held over the step at ``t``."""
    on = t >= sc.disturbance.t - 1e-9 * max(1.0, sc.dt)
    if sc.mode == "open_loop":
        return 0.0, sc.disturbance.dP if on else 0.0
    return (sc.disturbance.dP if on else 0.0), 0.0


def simulate(scenario: Scenario) -> TimeSeries:
    """Fixed-step RK4 run of the nonlinear actuators under their controllers.

    Turbine wind filters, set-point laws, protection and torque rate limits
    are discrete and update once per step; the hydro servo rate limit acts
    on the continuous gate dynamics.
    """
    sc = scenario
    sc.validate()
    dt, n = sc.dt, sc.n_steps()
    acts = sc.controllers.actuators if sc.controllers else []
    ctrls = sc.controllers.controllers if sc.controllers else []
    bank = _Bank(list(ctrls) + [sc.target])
    n_ctrl = len(ctrls)

    hydros, winds = [], []  # (index into acts, params, ...)
    for b in sc.buses:
        if b.hydro is not None:
            hydros.append((len(hydros) + len(winds), b.hydro, b.hydro.rating * b.hydro.g0))
        if b.wind is not None:
            farm = wt.Turbine(b.wind, wt.TurbineState.at_mpp(b.wind_speed, b.wind))
            p0 = farm.power_mw()
            winds.append((len(hydros) + len(winds), b, farm, p0, wt.mpp(b.wind_speed, b.wind)["p_mpp"]))

    nh, nw = len(hydros), len(winds)
    i_xc = 1
    i_h = i_xc + bank.n
    i_w = i_h + 2 * nh
    y = np.zeros(i_w + nw)
    for k, (_, prm, _) in enumerate(hydros):
        y[i_h + 2 * k] = y[i_h + 2 * k + 1] = prm.g0
    for k, (_, _, farm, _, _) in enumerate(winds):
        y[i_w + k] = farm.omega

    M = sc.inertia
    D = sc.load_damping
    closed = sc.mode == "closed_loop"
    state = {"p_dist": 0.0, "r": 0.0}

    def outputs(y, e):
        return bank.C @ y[i_xc:i_h] + bank.D * e

    def powers(y, u):
        p = np.zeros(nh + nw)
        for k, (j, prm, p0) in enumerate(hydros):
            p[j] = hy.mech_power(y[i_h + 2 * k], y[i_h + 2 * k + 1], prm) - p0
        for k, (j, b, farm, p0, _) in enumerate(winds):
            p[j] = farm.power_mw(y[i_w + k]) - p0
        return p

    def rhs(_t, y):
        df = y[0]
        e = -df + state["r"] if closed else state["r"]
        u = outputs(y, e)
        dy = np.empty_like(y)
        dy[i_xc:i_h] = bank.A @ y[i_xc:i_h] + bank.B * e
        p_sum = 0.0
        for k, (j, prm, p0) in enumerate(hydros):
            g, q = y[i_h + 2 * k], y[i_h + 2 * k + 1]
            dg, dq = hy.derivatives(g, q, prm.g0 + u[j], prm)
            dy[i_h + 2 * k], dy[i_h + 2 * k + 1] = dg, dq
            p_sum += hy.mech_power(g, q, prm) - p0
        for k, (j, b, farm, p0, _) in enumerate(winds):
            om = y[i_w + k]
            dy[i_w + k] = farm.domega(om, b.wind_speed)
            p_sum += farm.power_mw(om) - p0
        dy[0] = (p_sum - D * df - state["p_dist"]) / M if closed else 0.0
        return dy

    names = [a.id for a in acts]
    t = np.arange(n + 1) * dt
    rec = {k: np.empty(n + 1) for k in (["f_coi"] + [f"P_{i}" for i in names]
                                         + ["P_hydro", "P_wind", "P_hydro_wind", "P_ideal"])}
    for _, b, _, _, _ in winds:
        for key in (f"Pout_wind{b.id}", f"x_wind{b.id}", f"prot_wind{b.id}"):
            rec[key] = np.empty(n + 1)
    is_hydro = np.array([a.kind == "hydro" for a in acts], dtype=bool)

    for step in range(n + 1):
        tk = t[step]
        state["p_dist"], state["r"] = _held_inputs(sc, tk)
        e = -y[0] + state["r"] if closed else state["r"]
        u = outputs(y, e)
        for k, (j, b, farm, p0, p_mpp) in enumerate(winds):
            farm.command(p_mpp * (1.0 + u[j]), b.wind_speed, dt)
        p = powers(y, u)
        rec["f_coi"][step] = sc.reference + y[0]
        for j, name in enumerate(names):
            rec[f"P_{name}"][step] = p[j]
        rec["P_hydro"][step] = p[is_hydro].sum()
        rec["P_wind"][step] = p[~is_hydro].sum()
        rec["P_hydro_wind"][step] = p.sum()
        rec["P_ideal"][step] = u[n_ctrl]
        for k, (j, b, farm, p0, _) in enumerate(winds):
            rec[f"Pout_wind{b.id}"][step] = farm.power_mw(y[i_w + k])
            rec[f"x_wind{b.id}"][step] = farm.x()
            rec[f"prot_wind{b.id}"][step] = 1.0 if farm.protection else 0.0
        if step == n:
            break
        y_prev = y
        y = _rk4(rhs, tk, y, dt)
        if not np.all(np.isfinite(y)):
            raise SimulationError("state became non-finite", tk + dt)
        for k in range(nh):
            y[i_h + 2 * k] = hy.clamp_gate(y[i_h + 2 * k], y_prev[i_h + 2 * k])
        for k, (_, _, farm, _, _) in enumerate(winds):
            try:
                farm.set_omega(float(y[i_w + k]), tk + dt)
            except wt.TurbineInstability as exc:
                raise SimulationError(str(exc), tk + dt) from exc
    return TimeSeries(t, rec)


def _rk4(f, t, y, dt):
    k1 = f(t, y)
    k2 = f(t + dt / 2, y + dt / 2 * k1)
    k3 = f(t + dt / 2, y + dt / 2 * k2)
    k4 = f(t + dt, y + dt * k3)
    return y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def simulate_linear(scenario: Scenario, ideal: bool = False) -> TimeSeries:
    """Same loop with every actuator replaced by H_i K_i.

    With ``ideal`` the actuators are ignored and the reserve is exactly the
    target F driven by the frequency error.
    """
    sc = scenario
    if not ideal:
        sc.validate()
    elif sc.mode == "closed_loop" and sc.w_kin_total <= 0:
        raise ValueError("sum of w_kin must be positive")
    dt, n = sc.dt, sc.n_steps()
    if ideal or sc.controllers is None:
        names, loops, kinds = [], [], []
    else:
        names = [a.id for a in sc.controllers.actuators]
        kinds = [a.kind for a in sc.controllers.actuators]
        loops = [a.plant * k for a, k in zip(sc.controllers.actuators, sc.controllers.controllers)]
    bank = _Bank(loops + [sc.target])
    closed = sc.mode == "closed_loop"
    m = len(loops)

    # augmented state [df, bank]; inputs w = [p_dist, r]
    nx = 1 + bank.n
    A = np.zeros((nx, nx))
    Bw = np.zeros((nx, 2))
    sel = np.zeros(bank.C.shape[0])
    sel[:m] = 1.0
    if ideal:
        sel[m] = 1.0
    if closed:
        M = sc.inertia
        # e = -df + r
        A[1:, 0] = -bank.B
        A[1:, 1:] = bank.A
        Bw[1:, 1] = bank.B
        A[0, 0] = (-sel @ bank.D - sc.load_damping) / M
        A[0, 1:] = sel @ bank.C / M
        Bw[0, 0] = -1.0 / M
        Bw[0, 1] = (sel @ bank.D) / M
    else:
        A[1:, 1:] = bank.A
        Bw[1:, 1] = bank.B
    phi, gamma = _rk4_map(A, Bw, dt)

    t = np.arange(n + 1) * dt
    x = np.zeros(nx)
    rec = {k: np.empty(n + 1) for k in (["f_coi"] + [f"P_{i}" for i in names]
                                         + ["P_hydro", "P_wind", "P_hydro_wind", "P_ideal"])}
    is_hydro = np.array([k == "hydro" for k in kinds], dtype=bool)
    for step in range(n + 1):
        w = np.array(_held_inputs(sc, t[step]))
        e = (-x[0] if closed else 0.0) + w[1]
        u = bank.C @ x[1:] + bank.D * e
        rec["f_coi"][step] = sc.reference + x[0]
        for j, name in enumerate(names):
            rec[f"P_{name}"][step] = u[j]
        rec["P_hydro"][step] = u[:m][is_hydro].sum()
        rec["P_wind"][step] = u[:m][~is_hydro].sum()
        rec["P_hydro_wind"][step] = u[:m].sum() if not ideal else u[m]
        rec["P_ideal"][step] = u[m]
        if step == n:
            break
        x = phi @ x + gamma @ w
        if not np.all(np.isfinite(x)):
            raise SimulationError("state became non-finite", t[step] + dt)
    return TimeSeries(t, rec)


def _rk4_map(A: np.ndarray, B: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    n = A.shape[0]
    hA = dt * A
    term = np.eye(n)
    phi = np.eye(n)
    gamma_op = np.zeros((n, n))
    for k in range(1, 5):
        gamma_op = gamma_op + term * dt / k
        term = term @ hA / k
        phi = phi + term
    return phi, gamma_op @ B


def power_balance_residual(ts: TimeSeries, scenario: Scenario) -> np.ndarray:
    """Swing-equation residual at every interior sample, by central differences."""
    sc = scenario
    df = ts["f_coi"] - sc.reference
    ddf = np.gradient(df, ts.time)
    p_dist = np.array([_held_inputs(sc, tk)[0] for tk in ts.time])
    res = sc.inertia * ddf + sc.load_damping * df + p_dist - ts["P_hydro_wind"]
    # the held disturbance jumps at one sample, where a central difference is meaningless
    jump = np.nonzero(np.diff(p_dist))[0]
    mask = np.ones(len(res), dtype=bool)
    mask[[0, -1]] = False
    for j in jump:
        mask[max(j - 1, 0):j + 3] = False
    return res[mask]


# --- N5 test system -------------------------------------------------------

N5_W_KIN = {"1": 34.0, "2": 22.5, "3": 7.5, "4": 33.0, "5": 13.0}
N5_HYDRO = {  # P_gen MW, FCR share, T_w s
    "1": (9000.0, 0.6, 0.7),
    "2": (6000.0, 0.3, 1.4),
    "3": (2000.0, 0.1, 1.4),
}
N5_WIND = {  # P_nom MW, v m/s, FFR share
    "2": (500.0, 10.0, 0.33),
    "4": (1500.0, 8.0, 0.67),
}
HYDRO_T_Y = 0.2
HYDRO_G0 = 0.8


def n5_buses(wind_scale: float | None = 1.0, turbine_kw: dict | None = None) -> list[Bus]:
    """Buses of the five-machine Nordic model; ``wind_scale=None`` omits the wind farms.

    Hydro ratings are P_gen / g0 so that the pre-fault output equals P_gen.
    """
    buses = []
    for bid, w in N5_W_KIN.items():
        kw = {}
        if bid in N5_HYDRO:
            p_gen, share, t_w = N5_HYDRO[bid]
            kw.update(hydro=hy.HydroParams(p_gen / HYDRO_G0, HYDRO_T_Y, t_w, HYDRO_G0), fcr_share=share)
        if wind_scale is not None and bid in N5_WIND:
            p_nom, v, share = N5_WIND[bid]
            params = wt.TurbineParams.farm(p_nom * wind_scale, **(turbine_kw or {}))
            kw.update(wind=params, wind_speed=v, ffr_share=share)
        buses.append(Bus(bid, w, **kw))
    return buses


def n5_scenario(variant: str = "wind_hydro", **kw) -> Scenario:
    """``hydro_only``, ``wind_hydro`` (2000 MW wind) or ``sensitivity_50pct`` (1000 MW)."""
    from .fcrd import design_target

    scale = {"hydro_only": None, "wind_hydro": 1.0, "sensitivity_50pct": 0.5}
    if variant not in scale:
        raise ValueError(f"unknown N5 variant {variant!r}")
    sc = Scenario(buses=n5_buses(scale[variant]), target=design_target(), name=f"n5_{variant}", **kw)
    return sc.with_synthesis()
