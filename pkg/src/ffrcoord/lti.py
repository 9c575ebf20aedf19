"""Rational transfer functions in factored (gain, zeros, poles) form.

Transfer functions are stored as

    H(s) = gain * prod(s - z_i) / prod(s - p_j)

and only expanded into polynomial coefficients when a state-space
realization or a common-denominator sum is needed.  Keeping the factors
lets right-half-plane zeros introduced on purpose cancel exactly against
the matching plant factors.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .timeseries import TimeSeries

CANCEL_TOL = 1e-9
MARGINAL_TOL = 1e-12
# Leading coefficients below this fraction of the summed terms are round-off.
COEF_TOL = 1e-9


class PoleAtOriginError(ValueError):
    pass


class ImproperError(ValueError):
    pass


def _close(a: complex, b: complex) -> bool:
    return abs(a - b) <= CANCEL_TOL * max(1.0, abs(a))


def _clean_root(r: complex) -> complex:
    r = complex(r)
    scale = max(1.0, abs(r))
    re, im = r.real, r.imag
    if abs(im) <= CANCEL_TOL * scale:
        im = 0.0
    if abs(re) <= 1e-15 * scale:
        re = 0.0
    return complex(re, im)


def _pair_conjugates(roots: list[complex], what: str) -> list[complex]:
    """Snap complex roots to exact conjugate pairs; unpaired complex roots are an error."""
    out = [r for r in roots if r.imag == 0]
    upper = [r for r in roots if r.imag > 0]
    lower = [r for r in roots if r.imag < 0]
    for r in upper:
        for j, q in enumerate(lower):
            if _close(r.conjugate(), q):
                del lower[j]
                break
        else:
            raise ValueError(f"complex {what} {r} has no conjugate partner")
        out += [r, r.conjugate()]
    if lower:
        raise ValueError(f"complex {what} {lower[0]} has no conjugate partner")
    return out


def _sort_key(r: complex):
    return (r.real, r.imag)


def _cancel(zeros: list[complex], poles: list[complex]) -> tuple[list[complex], list[complex]]:
    poles = list(poles)
    kept = []
    for z in zeros:
        for j, p in enumerate(poles):
            if _close(z, p):
                del poles[j]
                break
        else:
            kept.append(z)
    return kept, poles


def _split_common(a: Sequence[complex], b: Sequence[complex]):
    """Multiset intersection of two root lists under the cancellation tolerance."""
    b_rest = list(b)
    common, a_rest = [], []
    for r in a:
        for j, q in enumerate(b_rest):
            if _close(r, q):
                common.append(r)
                del b_rest[j]
                break
        else:
            a_rest.append(r)
    return common, a_rest, b_rest


def _poly(roots: Sequence[complex]) -> np.ndarray:
    c = np.poly(np.asarray(roots, dtype=complex)) if len(roots) else np.array([1.0])
    return np.real_if_close(c, tol=1e6).real if np.iscomplexobj(c) else c


@dataclass(frozen=True, init=False)
class RationalTF:
    gain: float
    zeros: tuple[complex, ...]
    poles: tuple[complex, ...]

    def __init__(self, gain: float, zeros: Iterable[complex] = (), poles: Iterable[complex] = ()):
        gain = float(gain)
        zeros = [_clean_root(z) for z in zeros]
        poles = [_clean_root(p) for p in poles]
        zeros = _pair_conjugates(zeros, "zero")
        poles = _pair_conjugates(poles, "pole")
        if gain == 0.0:
            zeros, poles = [], []
        zeros, poles = _cancel(zeros, poles)
        object.__setattr__(self, "gain", gain)
        object.__setattr__(self, "zeros", tuple(sorted(zeros, key=_sort_key)))
        object.__setattr__(self, "poles", tuple(sorted(poles, key=_sort_key)))

    # construction helpers

    @classmethod
    def constant(cls, k: float) -> "RationalTF":
        return cls(k)

    @classmethod
    def from_coeffs(cls, num: Sequence[float], den: Sequence[float]) -> "RationalTF":
        """Build from coefficient lists, highest power first."""
        num = np.trim_zeros(np.atleast_1d(np.asarray(num, dtype=float)), "f")
        den = np.trim_zeros(np.atleast_1d(np.asarray(den, dtype=float)), "f")
        if den.size == 0:
            raise ZeroDivisionError("zero denominator")
        if num.size == 0:
            return cls(0.0)
        return cls(num[0] / den[0], np.roots(num), np.roots(den))

    @classmethod
    def lag(cls, T: float) -> "RationalTF":
        """1/(sT + 1); T = 0 gives unity."""
        if T == 0:
            return cls(1.0)
        return cls(1.0 / T, (), (-1.0 / T,))

    @classmethod
    def lead(cls, T: float) -> "RationalTF":
        """sT + 1; T = 0 gives unity."""
        if T == 0:
            return cls(1.0)
        return cls(T, (-1.0 / T,), ())

    @classmethod
    def allpass(cls, z: float, dc_positive: bool = True) -> "RationalTF":
        """(z - s)/(s + z) if ``dc_positive`` else (s - z)/(s + z), for real z > 0."""
        return cls(-1.0 if dc_positive else 1.0, (z,), (-z,))

    # properties

    @property
    def is_zero(self) -> bool:
        return self.gain == 0.0

    @property
    def order(self) -> int:
        return len(self.poles)

    @property
    def relative_degree(self) -> int:
        return len(self.poles) - len(self.zeros)

    @property
    def is_proper(self) -> bool:
        return self.is_zero or len(self.zeros) <= len(self.poles)

    def coeffs(self) -> tuple[np.ndarray, np.ndarray]:
        """Expanded numerator and (monic) denominator, highest power first."""
        return self.gain * _poly(self.zeros), _poly(self.poles)

    def __call__(self, s):
        s = np.asarray(s, dtype=complex)
        out = np.full(s.shape, self.gain, dtype=complex)
        for z in self.zeros:
            out = out * (s - z)
        for p in self.poles:
            out = out / (s - p)
        return out

    # algebra

    def __mul__(self, other):
        return tf_series(self, _as_tf(other))

    __rmul__ = __mul__

    def __add__(self, other):
        return tf_parallel(self, _as_tf(other))

    __radd__ = __add__

    def __neg__(self):
        return RationalTF(-self.gain, self.zeros, self.poles)

    def __sub__(self, other):
        return tf_parallel(self, -_as_tf(other))

    def __rsub__(self, other):
        return tf_parallel(_as_tf(other), -self)

    def inv(self) -> "RationalTF":
        if self.is_zero:
            raise ZeroDivisionError("inverse of the zero transfer function")
        return RationalTF(1.0 / self.gain, self.poles, self.zeros)

    def __truediv__(self, other):
        return tf_series(self, _as_tf(other).inv())

    def __rtruediv__(self, other):
        return tf_series(_as_tf(other), self.inv())

    def equals(self, other: "RationalTF", rtol: float = 1e-9) -> bool:
        """Structural equality of canonical forms within ``rtol``."""
        if len(self.zeros) != len(other.zeros) or len(self.poles) != len(other.poles):
            return False
        if not np.isclose(self.gain, other.gain, rtol=rtol, atol=0.0):
            return False
        _, za, zb = _split_common(self.zeros, other.zeros)
        _, pa, pb = _split_common(self.poles, other.poles)
        return not (za or zb or pa or pb)

    def __repr__(self):
        return f"RationalTF({format_factored(self)})"


def _as_tf(x) -> RationalTF:
    return x if isinstance(x, RationalTF) else RationalTF(float(x))


def tf_series(a: RationalTF, b: RationalTF) -> RationalTF:
    return RationalTF(a.gain * b.gain, a.zeros + b.zeros, a.poles + b.poles)


def tf_parallel(a: RationalTF, b: RationalTF) -> RationalTF:
    """a + b over the least common denominator of the two pole sets."""
    if a.is_zero:
        return b
    if b.is_zero:
        return a
    common, a_rest, b_rest = _split_common(a.poles, b.poles)
    term_a = a.gain * np.polymul(_poly(a.zeros), _poly(b_rest))
    term_b = b.gain * np.polymul(_poly(b.zeros), _poly(a_rest))
    num = np.polyadd(term_a, term_b)
    scale = max(np.max(np.abs(term_a)), np.max(np.abs(term_b)))
    small = np.abs(num) <= COEF_TOL * scale
    if small.all():
        return RationalTF(0.0)
    num = num[np.argmax(~small):]
    # Keep exact zeros at the origin, which np.roots reports exactly only
    # when the trailing coefficients are exactly zero.
    tail = 0
    while tail < num.size - 1 and small[::-1][tail]:
        tail += 1
    head = num[: num.size - tail] if tail else num
    zeros = list(np.roots(head)) + [0.0] * tail
    return RationalTF(head[0], zeros, common + a_rest + b_rest)


def dc_gain(h: RationalTF) -> float:
    if h.is_zero:
        return 0.0
    if any(abs(p) <= MARGINAL_TOL for p in h.poles):
        raise PoleAtOriginError("transfer function has a pole at s = 0")
    val = complex(h.gain)
    for z in h.zeros:
        val *= -z
    for p in h.poles:
        val /= -p
    return float(val.real)


def high_frequency_gain(h: RationalTF) -> float:
    """Limit of h(s) as s -> infinity (the feedthrough term); proper h only."""
    if not h.is_proper:
        raise ImproperError("improper transfer function")
    return h.gain if len(h.zeros) == len(h.poles) else 0.0


@dataclass(frozen=True)
class Classification:
    stable: bool
    nmp_zeros: list[complex]
    unstable_poles: list[complex]
    marginal_zeros: list[complex]
    marginal_poles: list[complex]

    @property
    def minimum_phase(self) -> bool:
        return not self.nmp_zeros and not self.marginal_zeros


def classify(h: RationalTF) -> Classification:
    def split(roots):
        rhp = [r for r in roots if r.real > MARGINAL_TOL]
        axis = [r for r in roots if abs(r.real) <= MARGINAL_TOL]
        return rhp, axis

    nmp, mz = split(h.zeros)
    unstable, mp = split(h.poles)
    return Classification(not unstable and not mp, nmp, unstable, mz, mp)


def freq_response(h: RationalTF, w: Sequence[float]) -> np.ndarray:
    """h(jw); samples that land on a pole are returned as NaN with a warning."""
    w = np.asarray(w, dtype=float)
    s = 1j * w
    on_pole = np.zeros(w.shape, dtype=bool)
    for p in h.poles:
        on_pole |= np.abs(s - p) <= MARGINAL_TOL * np.maximum(1.0, np.abs(s))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = h(s)
    if on_pole.any():
        warnings.warn(f"{int(on_pole.sum())} frequency sample(s) evaluated at a pole", RuntimeWarning)
        out[on_pole] = complex(np.nan, np.nan)
    return out


@dataclass(frozen=True)
class StateSpace:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: float

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @classmethod
    def from_tf(cls, h: RationalTF) -> "StateSpace":
        """Controllable canonical realization of a proper transfer function."""
        if not h.is_proper:
            raise ImproperError(f"cannot realize improper {h!r}")
        num, den = h.coeffs()
        n = len(den) - 1
        num = np.concatenate([np.zeros(n + 1 - len(num)), num])
        d = num[0]
        A = np.zeros((n, n))
        if n:
            A[:-1, 1:] = np.eye(n - 1)
            A[-1, :] = -den[1:][::-1]
        B = np.zeros(n)
        if n:
            B[-1] = 1.0
        C = (num[1:] - den[1:] * d)[::-1].copy()
        return cls(A, B, C, float(d))

    def eval(self, s: complex) -> complex:
        if self.n == 0:
            return complex(self.D)
        x = np.linalg.solve(s * np.eye(self.n) - self.A, self.B.astype(complex))
        return complex(self.C @ x + self.D)

    def rk4_map(self, dt: float) -> tuple[np.ndarray, np.ndarray]:
        """One classical RK4 step for x' = Ax + Bu with u held, as x+ = Phi x + Gamma u."""
        n = self.n
        hA = dt * self.A
        term = np.eye(n)
        phi = np.eye(n)
        gamma_op = np.zeros((n, n))
        for k in range(1, 5):
            gamma_op = gamma_op + term * dt / k
            term = term @ hA / k
            phi = phi + term
        # gamma_op accumulates sum_k h^k A^(k-1)/k!
        return phi, gamma_op @ self.B


def step_response(h: RationalTF, t_end: float, dt: float) -> TimeSeries:
    """Unit-step output of ``h`` sampled on [0, t_end] with fixed-step RK4."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    ss = StateSpace.from_tf(h)
    n_steps = int(round(t_end / dt))
    t = np.arange(n_steps + 1) * dt
    y = np.empty(n_steps + 1)
    x = np.zeros(ss.n)
    phi, gamma = ss.rk4_map(dt)
    for i in range(n_steps + 1):
        y[i] = ss.C @ x + ss.D
        x = phi @ x + gamma
    return TimeSeries(t, {"y": y})


def step_value(h: RationalTF, t: float) -> float:
    """Exact unit-step response at time ``t`` by partial fractions (simple poles only)."""
    if not h.is_proper:
        raise ImproperError("improper transfer function")
    # residues of h(s)/s: at s = 0 and at each pole
    if any(abs(p) <= MARGINAL_TOL for p in h.poles):
        raise PoleAtOriginError("step_value needs no pole at the origin")
    total = complex(dc_gain(h))
    for i, p in enumerate(h.poles):
        others = h.poles[:i] + h.poles[i + 1:]
        if any(_close(p, q) for q in others):
            raise ValueError("repeated poles are not supported")
        res = complex(h.gain)
        for z in h.zeros:
            res *= p - z
        for q in others:
            res /= p - q
        total += res / p * np.exp(p * t)
    return float(total.real)


def _fmt_root_factor(r: complex) -> str:
    if r.imag == 0.0:
        a = -r.real
        if a == 0.0:
            return "s"
        return f"(s {'+' if a > 0 else '-'} {abs(a):.6g})"
    return f"(s - ({r.real:.6g}{r.imag:+.6g}j))"


def format_factored(h: RationalTF) -> str:
    if h.is_zero:
        return "0"
    num = "".join(_fmt_root_factor(z) for z in h.zeros) or "1"
    den = "".join(_fmt_root_factor(p) for p in h.poles)
    return f"{h.gain:.6g} * {num}" + (f" / {den}" if den else "")


def _fmt_poly(c: np.ndarray) -> str:
    n = len(c) - 1
    terms = []
    for i, a in enumerate(c):
        p = n - i
        if a == 0:
            continue
        mono = "" if p == 0 else ("s" if p == 1 else f"s^{p}")
        terms.append(f"{a:.6g}{'*' if mono else ''}{mono}")
    return " + ".join(terms).replace("+ -", "- ") or "0"


def format_expanded(h: RationalTF) -> str:
    num, den = h.coeffs()
    return f"({_fmt_poly(num)}) / ({_fmt_poly(den)})"
