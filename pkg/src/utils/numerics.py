"""Thin wrappers over scipy quadrature and bracketed root finding."""
from collections.abc import Callable

from scipy.integrate import quad
from scipy.optimize import brentq

QUAD_RTOL = 1e-9
ROOT_XTOL = 1e-10
ROOT_MAXITER = 200


def integrate(f: Callable[[float], float], a: float, b: float, rtol: float = QUAD_RTOL) -> float:
    """Adaptive quadrature of f over [a, b]; zero-width intervals return 0."""
    if a == b:
        return 0.0
    value, _ = quad(f, a, b, epsabs=0.0, epsrel=rtol, limit=200)
    return float(value)


def bracketed_root(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    xtol: float = ROOT_XTOL,
    maxiter: int = ROOT_MAXITER,
) -> float:
    """
    Root of f inside [lo, hi] (order-insensitive).

    An endpoint that is already a root is returned as is, so callers can pass
    brackets whose ends coincide with the solution.
    """
    lo, hi = min(lo, hi), max(lo, hi)
    f_lo, f_hi = f(lo), f(hi)
    if f_lo == 0.0 or lo == hi:
        return lo
    if f_hi == 0.0:
        return hi
    if f_lo * f_hi > 0:
        raise ValueError(f"root not bracketed on [{lo}, {hi}]")
    return float(brentq(f, lo, hi, xtol=xtol, maxiter=maxiter))


def rounded(values, digits: int = 6) -> list[float]:
    """Plain rounded floats for log lines (numpy scalars print their type otherwise)."""
    return [round(float(v), digits) for v in values]
