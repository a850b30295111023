"""
Time value of money phi(t), construction-progress uplift kappa(t) and their
product zeta(t) = phi(t) * kappa(t), the generalized time value.

Functions of time are small descriptors evaluated on floats or numpy arrays.
"""
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from src.utils.numerics import QUAD_RTOL, integrate


@dataclass(frozen=True)
class ConstantFn:
    value: float = 1.0

    def __call__(self, t):
        if np.ndim(t):
            return np.full(np.shape(t), self.value, dtype=float)
        return self.value

    def exponential_form(self) -> tuple[float, float]:
        return self.value, 0.0


@dataclass(frozen=True)
class ExponentialFn:
    """initial * exp(rate * t)"""

    rate: float
    initial: float = 1.0

    def __call__(self, t):
        if np.ndim(t):
            return self.initial * np.exp(self.rate * np.asarray(t, dtype=float))
        return self.initial * math.exp(self.rate * t)

    def exponential_form(self) -> tuple[float, float]:
        return self.initial, self.rate


@dataclass(frozen=True)
class TableFn:
    """Piecewise-linear interpolation of (times, values), flat outside the table."""

    times: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.times) < 1 or len(self.times) != len(self.values):
            raise ValueError("table needs matching, non-empty times and values")
        if any(t1 <= t0 for t0, t1 in zip(self.times, self.times[1:])):
            raise ValueError("table times must be strictly increasing")

    def __call__(self, t):
        out = np.interp(t, self.times, self.values)
        return out if np.ndim(t) else float(out)

    def exponential_form(self) -> None:
        return None


TimeFn = Union[ConstantFn, ExponentialFn, TableFn]


def _is_monotone(fn: TimeFn, increasing: bool) -> bool:
    if isinstance(fn, ConstantFn):
        return True
    if isinstance(fn, ExponentialFn):
        return fn.rate >= 0 if increasing else fn.rate <= 0
    steps = np.diff(fn.values)
    return bool(np.all(steps >= 0) if increasing else np.all(steps <= 0))


@dataclass(frozen=True)
class TimeValueSpec:
    phi: TimeFn = field(default_factory=ConstantFn)
    kappa: TimeFn = field(default_factory=ConstantFn)

    def __post_init__(self):
        if not self.phi(0.0) > 0:
            raise ValueError("phi(0) must be positive")
        if not _is_monotone(self.phi, increasing=False):
            raise ValueError("phi must be non-increasing")
        if not math.isclose(self.kappa(0.0), 1.0, rel_tol=1e-12):
            raise ValueError("kappa(0) must equal 1")
        if not _is_monotone(self.kappa, increasing=True):
            raise ValueError("kappa must be non-decreasing")
        values = np.concatenate([np.atleast_1d(getattr(fn, "values", 1.0)) for fn in (self.phi, self.kappa)])
        if np.any(values <= 0):
            raise ValueError("time value functions must stay positive")

    def zeta(self, t):
        return self.phi(t) * self.kappa(t)

    @property
    def is_trivial(self) -> bool:
        """phi and kappa both identically 1 (no discounting, no uplift)."""
        return self.exponential_form() == (1.0, 0.0)

    def exponential_form(self) -> Optional[tuple[float, float]]:
        """(c, r) with zeta(t) = c * exp(r * t), or None when zeta has no such form."""
        forms = [self.phi.exponential_form(), self.kappa.exponential_form()]
        if None in forms:
            return None
        (c1, r1), (c2, r2) = forms
        return c1 * c2, r1 + r2


def inv_phi_integral(spec: TimeValueSpec, t1: float, t2: float, rtol: float = QUAD_RTOL) -> float:
    """I(t1, t2) = integral of dt / zeta(t) over [t1, t2]."""
    if t2 < t1:
        raise ValueError(f"integration bounds out of order: [{t1}, {t2}]")
    if t1 == t2:
        return 0.0
    form = spec.exponential_form()
    if form is None:
        return integrate(lambda t: 1.0 / spec.zeta(t), t1, t2, rtol=rtol)
    c, r = form
    if r == 0:
        return (t2 - t1) / c
    return (math.exp(-r * t1) - math.exp(-r * t2)) / (c * r)


def zeta_integral(spec: TimeValueSpec, t1: float, t2: float, rtol: float = QUAD_RTOL) -> float:
    """Z(t1, t2) = integral of zeta(t) over [t1, t2]."""
    if t2 < t1:
        raise ValueError(f"integration bounds out of order: [{t1}, {t2}]")
    if t1 == t2:
        return 0.0
    form = spec.exponential_form()
    if form is None:
        return integrate(spec.zeta, t1, t2, rtol=rtol)
    c, r = form
    if r == 0:
        return c * (t2 - t1)
    return c * (math.exp(r * t2) - math.exp(r * t1)) / r
