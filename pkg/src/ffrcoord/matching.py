"""Coordinated FCR/FFR controller synthesis by dynamic participation factors.

Each actuator i delivers P_i = H_i(s) K_i(s) (w_ref - w).  Choosing
K_i = c_i F / H_i with sum(c_i) = 1 makes the ensemble match the target F
exactly.  Internal stability forbids cancelling right-half-plane zeros of
H_i, so each c_i must carry the NMP zeros of its own plant.

Construction, for actuators split into a sustained tier (hydro) and a
transient tier (wind):

1. every sustained actuator gets ``share * A_i(s)``, where A_i is the
   all-pass built on its NMP zeros, normalized to unit DC gain;
2. the residual ``1 - sum`` (zero at DC) is handed to the transient tier,
   each actuator multiplying it by ``share`` and by its own all-pass with
   unit high-frequency gain;
3. if the sum of these preliminary factors is stable and minimum phase,
   every factor is divided by it, which gives sum(c_i) = 1 exactly.

With two actuators this is exactly the wind/hydro example; with several
sustained or transient actuators it is our extension and the tier split
is by actuator kind.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .lti import RationalTF, classify, format_factored

KINDS = ("hydro", "wind")


@dataclass(frozen=True)
class ActuatorSpec:
    id: str
    plant: RationalTF
    share: float = 1.0
    kind: str = "hydro"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"actuator {self.id}: kind must be one of {KINDS}")
        if not self.plant.is_proper:
            raise ValueError(f"actuator {self.id}: plant must be proper")
        if self.share < 0:
            raise ValueError(f"actuator {self.id}: share must be nonnegative")

    @property
    def nmp_zeros(self) -> list[complex]:
        return classify(self.plant).nmp_zeros


@dataclass
class ParticipationSet:
    target: RationalTF
    actuators: list[ActuatorSpec]
    factors: list[RationalTF]
    controllers: list[RationalTF]
    preliminary: list[RationalTF] = field(default_factory=list)
    normalized: bool = True
    diagnostics: list[str] = field(default_factory=list)

    def factor_sum(self) -> RationalTF:
        total = RationalTF(0.0)
        for c in self.factors:
            total = total + c
        return total

    def export(self) -> dict:
        """Factored text and expanded coefficient lists for every controller."""
        out = {"target": format_factored(self.target), "normalized": self.normalized,
               "diagnostics": list(self.diagnostics), "actuators": []}
        for a, c, k in zip(self.actuators, self.factors, self.controllers):
            num, den = k.coeffs()
            out["actuators"].append({
                "id": a.id, "kind": a.kind, "share": a.share,
                "plant": format_factored(a.plant),
                "factor": format_factored(c),
                "controller": format_factored(k),
                "controller_num": [float(v) for v in num],
                "controller_den": [float(v) for v in den],
                "controller_order": k.order,
            })
        return out


def _allpass(zeros: Sequence[complex], poles: Sequence[complex] | None, unit_dc: bool) -> RationalTF:
    """All-pass-like factor on ``zeros``, by default with poles mirrored into the LHP."""
    if not zeros:
        return RationalTF(1.0)
    poles = [-z.conjugate() for z in zeros] if poles is None else list(poles)
    f = RationalTF(1.0, zeros, poles)
    if unit_dc:
        dc = f(0.0).real
        return RationalTF(1.0 / dc, f.zeros, f.poles)
    return f


def synthesize(actuators: Sequence[ActuatorSpec], target: RationalTF,
               pole_override: Mapping[str, Sequence[complex]] | None = None) -> ParticipationSet:
    """Participation factors and controllers K_i = c_i F / H_i for ``actuators``.

    ``pole_override`` maps an actuator id to the poles that make its first
    factor proper, replacing the mirrored NMP zeros.
    """
    if not actuators:
        raise ValueError("no actuators")
    pole_override = pole_override or {}
    sustained = [a for a in actuators if a.kind == "hydro"]
    transient = [a for a in actuators if a.kind == "wind"]
    diagnostics: list[str] = []

    fast_z = [abs(z) for a in sustained for z in a.nmp_zeros]
    slow_z = [abs(z) for a in transient for z in a.nmp_zeros]
    if fast_z and slow_z and min(fast_z) <= max(slow_z):
        msg = (f"slowest hydro NMP zero {min(fast_z):.3g} rad/s is not faster than "
               f"fastest wind NMP zero {max(slow_z):.3g} rad/s")
        warnings.warn(msg)
        diagnostics.append(msg)

    prelim: dict[str, RationalTF] = {}
    for a in sustained:
        prelim[a.id] = a.share * _allpass(a.nmp_zeros, pole_override.get(a.id), unit_dc=True)
    residual = RationalTF(1.0)
    for a in sustained:
        residual = residual - prelim[a.id]
    for a in transient:
        prelim[a.id] = a.share * residual * _allpass(a.nmp_zeros, pole_override.get(a.id), unit_dc=False)

    raw = [prelim[a.id] for a in actuators]
    total = RationalTF(0.0)
    for c in raw:
        total = total + c
    if total.is_zero:
        raise ValueError("participation factors sum to zero")

    cls = classify(total)
    if total.equals(RationalTF(1.0)):
        factors, normalized = raw, True
    elif cls.stable and cls.minimum_phase:
        factors, normalized = [c / total for c in raw], True
    else:
        factors, normalized = raw, False
        diagnostics.append(
            "sum of preliminary factors is not stable and minimum phase "
            f"(NMP zeros {[complex(z) for z in cls.nmp_zeros]}, unstable poles "
            f"{[complex(p) for p in cls.unstable_poles]}); normalization refused")

    controllers = [c * target / a.plant for a, c in zip(actuators, factors)]
    return ParticipationSet(target, list(actuators), factors, controllers, raw, normalized, diagnostics)


@dataclass(frozen=True)
class MatchReport:
    residual_inf_norm: float
    internal_stability: bool
    problems: tuple[str, ...] = ()


def verify_matching(pset: ParticipationSet, actuators: Sequence[ActuatorSpec] | None = None,
                    w: np.ndarray | None = None) -> MatchReport:
    """Relative matching residual over a log grid and an internal-stability audit."""
    actuators = pset.actuators if actuators is None else list(actuators)
    w = np.logspace(-4, 3, 2001) if w is None else np.asarray(w, dtype=float)
    s = 1j * w
    f = pset.target(s)
    total = np.zeros_like(f)
    for a, k in zip(actuators, pset.controllers):
        total = total + a.plant(s) * k(s)
    residual = float(np.max(np.abs(total - f) / np.abs(f)))

    problems = []
    for a, c, k in zip(actuators, pset.factors, pset.controllers):
        kc = classify(k)
        if not kc.stable:
            problems.append(f"{a.id}: controller has unstable or marginal poles "
                            f"{[complex(p) for p in kc.unstable_poles + kc.marginal_poles]}")
        if not k.is_proper:
            problems.append(f"{a.id}: controller is improper")
        if not classify(c).stable:
            problems.append(f"{a.id}: participation factor is unstable")
        for z in a.nmp_zeros:
            if not any(abs(z - cz) <= 1e-9 * max(1.0, abs(z)) for cz in c.zeros):
                problems.append(f"{a.id}: NMP zero {complex(z)} cancelled by the controller")
    return MatchReport(residual, not problems, tuple(problems))


def allocate_shares(actuators: Sequence[ActuatorSpec], fcr_shares: Mapping[str, float],
                    ffr_shares: Mapping[str, float]) -> list[ActuatorSpec]:
    """Set each actuator's share from the FCR (hydro) or FFR (wind) split.

    Shares are fractions; each class must sum to one.
    """
    for name, shares, kind in (("FCR", fcr_shares, "hydro"), ("FFR", ffr_shares, "wind")):
        ids = [a.id for a in actuators if a.kind == kind]
        if not ids:
            continue
        missing = [i for i in ids if i not in shares]
        if missing:
            raise ValueError(f"{name} shares missing for {missing}")
        vals = [shares[i] for i in ids]
        if any(v < 0 for v in vals):
            raise ValueError(f"{name} shares must be nonnegative")
        if not math.isclose(sum(vals), 1.0, rel_tol=0.0, abs_tol=1e-9):
            raise ValueError(f"{name} shares sum to {sum(vals)!r}, not 1")
    return [replace(a, share=(fcr_shares if a.kind == "hydro" else ffr_shares)[a.id]) for a in actuators]
