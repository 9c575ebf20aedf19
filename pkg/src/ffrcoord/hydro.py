"""Hydro turbine with gate servo and an inelastic, lossless penstock.

State is the gate opening ``g`` and the per-unit water flow ``q``:

    dg/dt = clamp((g_cmd - g) / T_y, -rate, rate)
    dq/dt = (1 - h) / T_w,      h = (q / g)^2
    p_m   = rating * q * h

Around the equilibrium q = g = g0 this linearizes to

    2 (z - s)/(s + 2 z) * 1/(s T_y + 1),   z = 1/(g0 T_w)
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .integrate import rk4_step
from .lti import RationalTF

log = logging.getLogger(__name__)

G_MIN = 1e-4
MAX_SUBSTEPS = 50


@dataclass(frozen=True)
class HydroParams:
    rating: float  # MW
    T_y: float = 0.2
    T_w: float = 1.0
    g0: float = 0.8
    servo_rate_limit: float = 0.1  # pu/s

    def __post_init__(self):
        if self.T_y <= 0 or self.T_w <= 0:
            raise ValueError("T_y and T_w must be positive")
        if not 0 < self.g0 <= 1:
            raise ValueError("g0 must lie in (0, 1]")

    @property
    def z(self) -> float:
        """Right-half-plane zero of the penstock, rad/s."""
        return 1.0 / (self.g0 * self.T_w)


@dataclass(frozen=True)
class HydroState:
    g: float
    q: float

    @classmethod
    def equilibrium(cls, params: HydroParams) -> "HydroState":
        return cls(params.g0, params.g0)


def servo_rate(g: float, g_cmd: float, params: HydroParams) -> float:
    rate = (g_cmd - g) / params.T_y
    lim = params.servo_rate_limit
    return min(max(rate, -lim), lim)


def derivatives(g: float, q: float, g_cmd: float, params: HydroParams) -> tuple[float, float]:
    dg = servo_rate(g, g_cmd, params)
    if g <= 0.0 and dg < 0.0 or g >= 1.0 and dg > 0.0:
        dg = 0.0
    gg = max(g, G_MIN)
    h = (q / gg) ** 2
    return dg, (1.0 - h) / params.T_w


def mech_power(g: float, q: float, params: HydroParams) -> float:
    gg = max(g, G_MIN)
    return params.rating * q * (q / gg) ** 2


def clamp_gate(g: float, previous: float = 1.0) -> float:
    """Keep g in [G_MIN, 1]; the floor event is logged when ``previous`` was above it."""
    if g < G_MIN:
        if previous > G_MIN:
            log.warning("gate opening %.3g floored at %.0e", g, G_MIN)
        return G_MIN
    return min(g, 1.0)


def _held_gate_flow(q0: float, g: float, dt: float, T_w: float) -> float:
    """Exact flow after ``dt`` of dq/dt = (1 - (q/g)^2)/T_w with the gate held at g."""
    tau = dt / (g * T_w)
    r = q0 / g
    if abs(r - 1.0) < 1e-12:
        return g
    if abs(r) < 1.0:
        return g * math.tanh(tau + math.atanh(r))
    c = 0.5 * math.log((r + 1) / (r - 1)) + tau
    return g / math.tanh(c)


def step_nonlinear(state: HydroState, g_cmd: float, dt: float,
                   params: HydroParams) -> tuple[HydroState, dict]:
    """Advance the gate/penstock by ``dt`` with the gate command held."""
    if dt <= 0:
        raise ValueError("dt must be positive")

    def f(_t, y):
        return np.array(derivatives(y[0], y[1], g_cmd, params))

    # Near a closed gate the flow relaxes with rate 2 q / (g^2 T_w); sub-step
    # so that explicit RK4 stays inside its stability region.
    g_low = max(state.g - abs(servo_rate(state.g, g_cmd, params)) * dt, G_MIN)
    stiff = 2 * abs(state.q) / (g_low**2 * params.T_w) * dt
    if stiff > MAX_SUBSTEPS:
        # Gate (nearly) closed: move the gate, then relax the flow exactly with it held.
        g = clamp_gate(state.g + servo_rate(state.g, g_cmd, params) * dt, state.g)
        new = HydroState(g, _held_gate_flow(state.q, g, dt, params.T_w))
        return new, {"p_m": mech_power(new.g, new.q, params)}
    n = max(1, int(np.ceil(stiff)))
    y = np.array([state.g, state.q])
    for _ in range(n):
        prev = y[0]
        y = rk4_step(f, 0.0, y, dt / n)
        y[0] = clamp_gate(float(y[0]), prev)
    g, q = y
    new = HydroState(float(g), float(q))
    return new, {"p_m": mech_power(new.g, new.q, params)}


def linearize(params: HydroParams) -> RationalTF:
    """Gate command (pu) -> mechanical power (MW) around the equilibrium at g0."""
    z = params.z
    servo = RationalTF.lag(params.T_y)
    penstock = RationalTF(-2.0, (z,), (-2 * z,))
    return params.rating * servo * penstock
