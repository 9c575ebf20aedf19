"""FCR-D design target and compliance checks for Nordic disturbance reserves."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lti import RationalTF
from .timeseries import TimeSeries

FULL_ACTIVATION_FRACTION = 0.95


@dataclass(frozen=True)
class FcrdSpec:
    f0: float = 50.0
    activation_50pct: float = 5.0
    full_activation: float = 30.0
    nadir_limit: float = 1.0
    band: tuple[float, float] = (49.9, 49.5)
    dimensioning_fault: float = 1400.0
    load_damping: float = 400.0
    # lead and lag time constants of the second-order target
    lead: float = 6.5
    lag1: float = 2.0
    lag2: float = 17.0
    r_fcr: float | None = None  # overrides the derived gain when set

    def __post_init__(self):
        if self.band[0] <= self.band[1]:
            raise ValueError("band must be (upper, lower) with upper > lower")
        for name in ("f0", "activation_50pct", "full_activation", "nadir_limit",
                     "dimensioning_fault", "load_damping"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def band_width(self) -> float:
        # rounded so that 49.9 - 49.5 is exactly 0.4
        return round(self.band[0] - self.band[1], 9)

    @property
    def normal_band_drop(self) -> float:
        """Deviation from the nominal frequency at which FCR-D starts (0.1 Hz)."""
        return round(self.f0 - self.band[0], 9)


def derive_first_order_target(spec: FcrdSpec = FcrdSpec()) -> dict:
    """First-order target whose unit step is 50 % activated after ``activation_50pct``."""
    T_temp = -spec.activation_50pct / math.log(0.5)
    r_fcr = spec.dimensioning_fault / spec.band_width - spec.load_damping
    return {"f_temp": r_fcr * RationalTF.lag(T_temp), "T_temp": T_temp, "R_fcr": r_fcr}


def design_target(spec: FcrdSpec = FcrdSpec()) -> RationalTF:
    """R_FCR (lead s + 1) / ((lag1 s + 1)(lag2 s + 1))."""
    r = spec.r_fcr if spec.r_fcr is not None else derive_first_order_target(spec)["R_fcr"]
    return r * RationalTF.lead(spec.lead) * RationalTF.lag(spec.lag1) * RationalTF.lag(spec.lag2)


def disturbance_response(target: RationalTF, w_kin_gws: float, damping: float, f0: float = 50.0) -> RationalTF:
    """Frequency deviation (Hz) per MW of lost generation in the aggregate system."""
    swing = RationalTF(2 * w_kin_gws * 1e3 / f0, (0.0,), ())
    return -(swing + damping + target).inv()


@dataclass
class Verdict:
    nadir_ok: bool | None
    steady_state_ok: bool | None
    activation_ok: bool | None
    inconclusive: bool = False
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.inconclusive and bool(self.nadir_ok and self.steady_state_ok and self.activation_ok)

    def as_records(self) -> dict[str, str]:
        def fmt(v):
            if v is None:
                return "na"
            if isinstance(v, (bool, np.bool_)):
                return str(bool(v)).lower()
            if isinstance(v, (float, np.floating)):
                return repr(float(v))
            return str(v)

        rec = {
            "passed": fmt(self.passed),
            "inconclusive": fmt(self.inconclusive),
            "nadir_ok": fmt(self.nadir_ok),
            "steady_state_ok": fmt(self.steady_state_ok),
            "activation_ok": fmt(self.activation_ok),
        }
        rec.update({k: fmt(v) for k, v in sorted(self.details.items())})
        return rec

    def to_text(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in self.as_records().items())


def check_fcrd(freq: TimeSeries, power: TimeSeries, spec: FcrdSpec = FcrdSpec(),
               f_channel: str = "f_coi", p_channel: str = "P_total",
               t_fault: float | None = None, fault: float | None = None,
               r_fcr: float | None = None) -> Verdict:
    """Compare a simulated disturbance against the FCR-D requirements.

    Frequencies are absolute (Hz).  The nadir limit is absolute, measured
    from the nominal ``spec.f0``, so a trace may start anywhere in the normal
    band (the dimensioning case starts at its lower edge).  The steady-state
    deviation is measured from the pre-fault frequency.  Activation is timed
    from the moment the frequency leaves the normal band.  ``power`` carries
    the total reserve power (MW) on the same time grid.
    """
    t = freq.time
    f = freq[f_channel]
    p = power[p_channel]
    if not np.array_equal(t, power.time):
        raise ValueError("frequency and power traces must share the time base")
    f_start = float(f[0])
    dev = f_start - f
    if t_fault is None:
        moved = np.nonzero(np.abs(dev) > 1e-9)[0]
        t_fault = float(t[moved[0] - 1]) if moved.size else None
    fault = spec.dimensioning_fault if fault is None else fault
    if r_fcr is None:
        r_fcr = spec.r_fcr if spec.r_fcr is not None else derive_first_order_target(spec)["R_fcr"]
    nadir_dev = spec.f0 - float(f.min())
    details: dict = {"f_start": f_start, "nadir_hz": float(f.min()),
                     "nadir_deviation_hz": nadir_dev,
                     "max_drop_from_start_hz": float(dev.max())}

    crossing = np.nonzero((f <= spec.band[0]) & (dev > 1e-9))[0]
    if t_fault is None or not crossing.size:
        details["reason"] = "frequency never left the normal band"
        return Verdict(None, None, None, inconclusive=True, details=details)
    if t[-1] - t_fault < 60.0:
        details["reason"] = "trace shorter than 60 s after the fault"
        return Verdict(None, None, None, inconclusive=True, details=details)

    nadir_ok = bool(nadir_dev <= spec.nadir_limit + 1e-12)

    expected = fault / (r_fcr + spec.load_damping)
    tail = t >= t[-1] - 1.0
    final_dev = float(dev[tail].mean())
    steady_state_ok = bool(abs(final_dev - expected) <= 0.05)
    details.update(expected_deviation_hz=float(expected), final_deviation_hz=final_dev)

    t_cross = float(t[crossing[0]])
    p0 = float(p[0])
    activation = p - p0
    p_ss = float(activation[tail].mean())
    def first_reach(frac):
        hit = np.nonzero(activation >= frac * p_ss)[0]
        hit = hit[t[hit] >= t_fault]
        return float(t[hit[0]]) if hit.size else math.inf

    t50 = first_reach(0.5) - t_cross
    t_full = first_reach(FULL_ACTIVATION_FRACTION) - t_cross
    activation_ok = bool(p_ss > 0 and t50 <= spec.activation_50pct and t_full <= spec.full_activation)
    details.update(t_cross_band=t_cross, steady_activation_mw=p_ss,
                   t_50pct_s=t50, t_full_s=t_full)
    return Verdict(nadir_ok, steady_state_ok, activation_ok, details=details)
