"""Variable-speed wind turbine (NREL 5 MW class) for fast frequency reserves.

The rotor is a single lumped inertia driven by aerodynamic power and braked
by the generator.  Instead of the MPP lookup table, the electric power
set-point is

    P' = P_ref + P_wind_hat * k * (x_hat - 1)

where x = Omega / Omega_MPP is the normalized speed ratio.  The proportional
term stabilizes operation below the MPP speed; a low-speed protection caps
the set-point once x_hat drops under ``x_floor``.

Units inside this module are SI (W, rad/s, kg m^2).  The public inputs and
outputs are in MW for the whole farm, i.e. a single representative turbine
multiplied by ``scale``.
"""

from __future__ import annotations

import bisect
import logging
import math
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path

import numpy as np

from .integrate import rk4_step
from .lti import RationalTF

log = logging.getLogger(__name__)

RPM = 2 * np.pi / 60


class TurbineInstability(RuntimeError):
    """Rotor speed collapsed to zero."""


class CpCurve:
    """Power coefficient c_p(x) at zero pitch as a function of x = lambda/lambda_opt.

    Cubic Hermite spline through a knot table shaped after the NREL 5 MW
    curve.  Between the 0.8 and 1.2 knots the data come from
    ``c_opt - 0.9 (1 - x)^2``, so that stretch is exactly that parabola: peak
    ``c_opt`` at x = 1 and slope 0.36 at x = 0.8.  Below 0.8 the slope grows
    quickly.  Outside the table the end slopes are continued linearly and the
    value is floored at zero.
    """

    # x, c_opt - c_p, dc_p/dx
    KNOTS = np.array([
        [0.5, 0.382, 1.6],
        [0.6, 0.242, 1.7],
        [0.7, 0.107, 1.0],
        [0.8, 0.036, 0.36],
        [1.0, 0.0, 0.0],
        [1.2, 0.036, -0.36],
        [1.3, 0.072, -0.42],
        [1.4, 0.122, -0.6],
        [1.6, 0.262, -0.8],
    ])

    def __init__(self, c_opt: float = 0.482):
        self.c_opt = c_opt
        xs, drop, ds = self.KNOTS.T
        self._x = xs.tolist()
        self._y = (c_opt - drop).tolist()
        self._d = ds.tolist()

    def _segment(self, x: float) -> tuple[float, float, float, float, float, float]:
        xs = self._x
        i = min(max(bisect.bisect_right(xs, x) - 1, 0), len(xs) - 2)
        return xs[i], xs[i + 1] - xs[i], self._y[i], self._y[i + 1], self._d[i], self._d[i + 1]

    def value(self, x: float) -> float:
        x0, h, y0, y1, d0, d1 = self._segment(x)
        if x < self._x[0] or x > self._x[-1]:
            end = 0 if x < self._x[0] else -1
            return max(self._y[end] + self._d[end] * (x - self._x[end]), 0.0)
        t = (x - x0) / h
        t2, t3 = t * t, t * t * t
        val = ((2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + t) * h * d0
               + (-2 * t3 + 3 * t2) * y1 + (t3 - t2) * h * d1)
        return max(val, 0.0)

    def slope(self, x: float) -> float:
        """d c_p / d x (zero where the extrapolated curve is floored)."""
        if self.value(x) <= 0.0:
            return 0.0
        if x < self._x[0] or x > self._x[-1]:
            return self._d[0] if x < self._x[0] else self._d[-1]
        x0, h, y0, y1, d0, d1 = self._segment(x)
        t = (x - x0) / h
        t2 = t * t
        return ((6 * t2 - 6 * t) * y0 / h + (3 * t2 - 4 * t + 1) * d0
                + (-6 * t2 + 6 * t) * y1 / h + (3 * t2 - 2 * t) * d1)

    def __call__(self, x):
        if np.ndim(x) == 0:
            return self.value(float(x))
        return np.array([self.value(float(v)) for v in np.ravel(x)]).reshape(np.shape(x))


@dataclass(frozen=True)
class TurbineParams:
    p_nom: float = 5e6  # W, per turbine
    torque_rate_limit: float = 15e3  # Nm/s on the generator (high-speed) shaft
    eta: float = 0.944
    omega_nom: float = 12.1 * RPM  # rad/s, low-speed shaft
    gear_ratio: float = 97.0
    J_e: float = 534.116  # kg m^2, high-speed shaft
    J_m: float = 35444067.0  # kg m^2, low-speed shaft
    rho: float = 1.225
    r: float = 63.0
    lambda_opt: float = 7.5
    c_opt: float = 0.482
    x_floor: float = 0.8
    k: float = 0.72
    scale: float = 1.0
    v_filter_T: float = 4.0  # s, wind speed measurement lag
    protection: bool = True

    def __post_init__(self):
        if not 0 < self.x_floor < 1:
            raise ValueError("x_floor must lie in (0, 1)")
        if self.scale < 1:
            raise ValueError("scale must be >= 1")

    @property
    def J(self) -> float:
        return self.J_m + self.gear_ratio**2 * self.J_e

    @property
    def C(self) -> float:
        """Size/aerodynamic constant of the open-loop pole, 1/m."""
        return np.pi * self.r**2 / self.J * self.r**2 / self.lambda_opt**2 * self.rho / 2

    @property
    def rotor_torque_rate(self) -> float:
        """Torque rate limit referred to the rotor shaft, Nm/s."""
        return self.torque_rate_limit * self.gear_ratio

    @property
    def v_max(self) -> float:
        """Highest wind speed whose MPP speed is at or below rated speed."""
        return self.omega_nom * self.r / self.lambda_opt

    @cached_property
    def cp(self) -> CpCurve:
        return CpCurve(self.c_opt)

    @classmethod
    def farm(cls, p_nom_mw: float, **kw) -> "TurbineParams":
        """Lumped farm of 5 MW turbines with the given total rating."""
        return cls(scale=p_nom_mw * 1e6 / cls.p_nom, **kw)

    def with_(self, **kw) -> "TurbineParams":
        return replace(self, **kw)


def p_wind(v: float, params: TurbineParams) -> float:
    """Kinetic power through the rotor disc of one turbine, W."""
    return 0.5 * params.rho * np.pi * params.r**2 * v**3


def omega_mpp(v: float, params: TurbineParams) -> float:
    return params.lambda_opt * v / params.r


def mpp(v: float, params: TurbineParams) -> dict:
    """MPP speed (rad/s), electric MPP power and wind power (MW, farm total)."""
    if v < 0 or v > params.v_max:
        raise ValueError(f"wind speed {v} m/s outside the below-rated region [0, {params.v_max:.2f}]")
    pw = p_wind(v, params)
    return {
        "omega_mpp": omega_mpp(v, params),
        "p_mpp": params.eta * params.c_opt * pw * params.scale / 1e6,
        "p_wind": pw * params.scale / 1e6,
    }


def open_loop_pole(v: float, x0: float, params: TurbineParams) -> float:
    """Pole of the speed dynamics linearized at x0; positive (unstable) below the MPP."""
    if not 0.7 < x0 < 1.3:
        raise ValueError("x0 must lie in (0.7, 1.3)")
    return params.C * v / x0 * params.cp.slope(x0)


def closed_loop_tf(v: float, x0: float, params: TurbineParams, dimensional: bool = False) -> RationalTF:
    """P_ref -> P_e of the stabilized turbine linearized at x0 (exact estimates).

    The zero equals the open-loop pole for every gain k.
    """
    z = open_loop_pole(v, x0, params)
    p = params.C * v / x0 * params.k - z
    gain = mpp(v, params)["p_mpp"] if dimensional else 1.0
    return RationalTF(gain, (z,), (-p,))


def linearize(v: float, params: TurbineParams) -> dict:
    """Worst-case first-order model with zero and pole at their bounds for x >= x_floor."""
    xf = params.x_floor
    slope = params.cp.slope(xf)
    z_bar = params.C * v / xf * slope
    p_floor = params.C * v / xf * (params.k - slope)
    p_mpp = mpp(v, params)["p_mpp"]
    return {
        "h_wind": RationalTF(1.0, (z_bar,), (-p_floor,)),
        "h_wind_mw": RationalTF(p_mpp, (z_bar,), (-p_floor,)),
        "z_bar": z_bar,
        "p_floor": p_floor,
        "C": params.C,
        "p_mpp": p_mpp,
        "omega_mpp": omega_mpp(v, params),
    }


@dataclass(frozen=True)
class TurbineState:
    omega: float  # rad/s
    tau_set: float  # Nm, rotor shaft
    v_hat: float  # m/s
    protection: bool = False

    @classmethod
    def at_mpp(cls, v: float, params: TurbineParams) -> "TurbineState":
        w = omega_mpp(v, params)
        p_e = params.eta * params.c_opt * p_wind(v, params)
        return cls(omega=w, tau_set=p_e / w, v_hat=v)


class Turbine:
    """One lumped turbine (or farm) advancing with fixed steps.

    ``command`` runs the discrete part once per step (wind filter, set-point
    law, torque rate limiter); ``domega`` is the continuous rotor equation used
    inside integrator stages with the torque held.
    """

    def __init__(self, params: TurbineParams, state: TurbineState):
        self.params = params
        self.omega = state.omega
        self.tau_set = state.tau_set
        self.v_hat = state.v_hat
        self.protection = state.protection
        self._v = None
        self._pw = 0.0
        self._wr = 0.0

    @property
    def state(self) -> TurbineState:
        return TurbineState(self.omega, self.tau_set, self.v_hat, self.protection)

    def set_point(self, p_ref_unit: float, omega: float, v_hat: float) -> tuple[float, bool]:
        """Electric power set-point (W, per turbine) and whether protection binds."""
        prm = self.params
        pw_hat = p_wind(v_hat, prm)
        x_hat = omega / omega_mpp(v_hat, prm)
        p_set = p_ref_unit + pw_hat * prm.k * (x_hat - 1)
        binding = False
        if prm.protection and x_hat < prm.x_floor:
            p_floor = prm.eta * pw_hat * prm.cp.value(prm.x_floor)
            p_prot = p_floor * (1 - 100 * (x_hat - prm.x_floor) ** 2)
            if p_prot < p_set:
                p_set, binding = p_prot, True
        return min(max(p_set, 0.0), prm.p_nom), binding

    def command(self, p_ref_mw: float, v: float, dt: float) -> None:
        prm = self.params
        self.v_hat += (v - self.v_hat) * (1 - math.exp(-dt / prm.v_filter_T))
        p_set, self.protection = self.set_point(p_ref_mw * 1e6 / prm.scale, self.omega, self.v_hat)
        tau_cmd = p_set / self.omega
        step = prm.rotor_torque_rate * dt
        tau = self.tau_set + min(max(tau_cmd - self.tau_set, -step), step)
        self.tau_set = min(max(tau, 0.0), prm.p_nom / self.omega)

    def domega(self, omega: float, v: float) -> float:
        prm = self.params
        if v != self._v:
            self._v, self._pw = v, p_wind(v, prm)
            self._wr = prm.r / (prm.lambda_opt * v) if v > 0 else 0.0
        p_m = self._pw * prm.cp.value(omega * self._wr)
        return (p_m - self.tau_set * omega / prm.eta) / (prm.J * omega)

    def power_mw(self, omega: float | None = None) -> float:
        omega = self.omega if omega is None else omega
        return self.tau_set * omega * self.params.scale / 1e6

    def x(self, v_hat: float | None = None) -> float:
        v_hat = self.v_hat if v_hat is None else v_hat
        return self.omega / omega_mpp(v_hat, self.params)

    def set_omega(self, omega: float, t: float = float("nan")) -> None:
        if not math.isfinite(omega) or omega <= 0:
            raise TurbineInstability(f"rotor speed collapsed (omega={omega}) at t={t}")
        self.omega = omega


def step_nonlinear(state: TurbineState, p_ref: float, v: float, dt: float,
                   params: TurbineParams) -> tuple[TurbineState, dict]:
    """Advance one turbine (farm) by ``dt`` with reference ``p_ref`` (MW) and wind ``v``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    wt = Turbine(params, state)
    wt.command(p_ref, v, dt)
    omega = rk4_step(lambda _t, w: wt.domega(w, v), 0.0, wt.omega, dt)
    wt.set_omega(float(omega))
    return wt.state, {"p_e": wt.power_mw(), "x": wt.x()}


def load_wind_trace(path: str | Path):
    """Two-column time (s) / speed (m/s) text file -> interpolating callable."""
    data = np.loadtxt(path, delimiter=None if str(path).endswith(".txt") else ",", ndmin=2)
    if data.shape[1] != 2:
        raise ValueError(f"{path}: expected two columns (time, wind speed)")
    t, v = data[:, 0], data[:, 1]
    if np.any(np.diff(t) <= 0):
        raise ValueError(f"{path}: time column must be strictly increasing")
    return lambda tq: float(np.interp(tq, t, v))


def simulate_step(v: float, step: float, params: TurbineParams, t_end: float = 150.0,
                  dt: float = 0.01, t_step: float = 1.0, wind=None) -> dict[str, np.ndarray]:
    """Reference step of ``step`` (fraction of P_MPP) from MPP at constant or traced wind."""
    wind = wind or (lambda _t: v)
    st = TurbineState.at_mpp(wind(0.0), params)
    base = mpp(v, params)["p_mpp"]
    n = int(round(t_end / dt))
    t = np.arange(n + 1) * dt
    out = {k: np.empty(n + 1) for k in ("p_e", "x", "omega", "protection", "p_ref")}
    wt = Turbine(params, st)
    for i, ti in enumerate(t):
        p_ref = base * (1 + (step if ti >= t_step else 0.0))
        out["p_e"][i] = wt.power_mw()
        out["x"][i] = wt.omega / omega_mpp(v, params)
        out["omega"][i] = wt.omega
        out["protection"][i] = float(wt.protection)
        out["p_ref"][i] = p_ref
        if i == n:
            break
        vi = wind(ti)
        wt.command(p_ref, vi, dt)
        wt.set_omega(rk4_step(lambda _t, w: wt.domega(w, vi), ti, wt.omega, dt), ti)
    out["t"] = t
    return out


def normalized_overlay(step: float, params: TurbineParams, speeds: tuple[float, float] = (8.0, 10.0),
                       t_end: float = 60.0, dt: float = 0.01, t_step: float = 1.0,
                       skip: float = 2.0) -> dict:
    """Largest gap between step responses at two wind speeds, in units of P_MPP.

    Pole and zero scale with v, so responses are compared on the time axis
    tau = (t - t_step) v / speeds[0].  The first ``skip`` seconds (the torque
    rate-limited ramp, which does not scale with v) are excluded.  The gap on
    the plain time axis is returned as well.
    """
    runs = []
    for v in speeds:
        r = simulate_step(v, step, params, t_end=t_end, dt=dt, t_step=t_step)
        p_mpp = mpp(v, params)["p_mpp"]
        runs.append(((r["t"] - t_step), (r["p_e"] - p_mpp) / p_mpp))
    (ta, ya), (tb, yb) = runs
    tau_a = ta
    tau_b = tb * speeds[1] / speeds[0]
    keep = (tau_a >= skip) & (tau_a <= min(tau_a[-1], tau_b[-1]))
    scaled = float(np.max(np.abs(ya[keep] - np.interp(tau_a[keep], tau_b, yb))))
    plain_keep = ta >= 0
    plain = float(np.max(np.abs(ya[plain_keep] - yb[plain_keep])))
    return {"max_gap_scaled": scaled, "max_gap_plain": plain}
