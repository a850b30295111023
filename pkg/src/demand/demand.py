"""
Demand laws: how many units of a pricing group sell per unit of time at a price.

The family used throughout is the clipped linear law
    v(p) = clamp(scale * (a - b * p), 0, cap)
possibly switching to a different law at given times (a `DemandModel` is a
step function of time over [0, T]).
"""
import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import TypeAlias

import numpy as np

from src.utils.errors import DemandDomainError, InfeasibleRateError, InfeasibleTargetError
from src.utils.logger import logger
from src.utils.numerics import rounded

log = logger.bind(step="demand")

# Units sold per unit of time, never negative.
Rate: TypeAlias = float

_REL_EPS = 1e-12


@dataclass(frozen=True)
class LinearDemandParams:
    a: float
    b: float
    scale: float = 1.0
    cap: float = math.inf
    price_lo: float = 0.0
    price_hi: float = math.inf

    def __post_init__(self):
        if not self.b > 0:
            raise ValueError(f"demand slope b must be positive, got {self.b}")
        if self.scale < 0:
            raise ValueError(f"demand scale must be nonnegative, got {self.scale}")
        if not self.cap > 0:
            raise ValueError(f"demand cap must be positive, got {self.cap}")
        if not self.price_lo < self.price_hi:
            raise ValueError(f"price bounds must satisfy lo < hi, got [{self.price_lo}, {self.price_hi}]")

    def rate(self, p: float) -> Rate:
        return min(self.cap, max(0.0, self.scale * (self.a - self.b * p)))

    @property
    def choke_price(self) -> float:
        return self.a / self.b

    @property
    def cap_price(self) -> float:
        """Price below which the law sits on its cap (-inf when the cap is never reached)."""
        if self.scale == 0 or math.isinf(self.cap):
            return -math.inf
        return (self.a - self.cap / self.scale) / self.b

    @property
    def max_branch_rate(self) -> Rate:
        """Largest rate reachable on the strictly decreasing branch."""
        return min(self.cap, self.scale * self.a) if self.scale > 0 else 0.0

    def clip_price(self, p: float) -> float:
        return min(self.price_hi, max(self.price_lo, p))

    def with_scale(self, scale: float) -> "LinearDemandParams":
        return LinearDemandParams(self.a, self.b, scale, self.cap, self.price_lo, self.price_hi)


@dataclass(frozen=True)
class DemandModel:
    """Horizon-covering sequence of (start_time, law); each law holds until the next start."""

    segments: tuple[tuple[float, LinearDemandParams], ...]
    horizon: float

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if not self.segments:
            raise ValueError("demand model needs at least one segment")
        starts = [s for s, _ in self.segments]
        if starts[0] != 0:
            raise ValueError(f"first demand segment must start at 0, got {starts[0]}")
        if any(t1 <= t0 for t0, t1 in zip(starts, starts[1:])):
            raise ValueError(f"demand segment starts must be strictly increasing: {starts}")
        if starts[-1] >= self.horizon:
            raise ValueError(f"demand segment starts beyond the horizon: {starts[-1]} >= {self.horizon}")

    @classmethod
    def constant(cls, params: LinearDemandParams, horizon: float) -> "DemandModel":
        return cls(((0.0, params),), horizon)

    @property
    def starts(self) -> list[float]:
        return [s for s, _ in self.segments]

    def params_at(self, t: float) -> LinearDemandParams:
        """Law active at t (the segment with the greatest start <= t)."""
        slack = _REL_EPS * self.horizon
        if not (-slack <= t <= self.horizon + slack):
            raise DemandDomainError(f"time {t} outside horizon [0, {self.horizon}]")
        idx = max(bisect_right(self.starts, t) - 1, 0)
        return self.segments[idx][1]

    def frozen_at(self, t: float) -> "DemandModel":
        """Single-law model carrying the law observed at t over the whole horizon."""
        return DemandModel.constant(self.params_at(t), self.horizon)

    def with_change(self, t: float, params: LinearDemandParams) -> "DemandModel":
        """New model whose law switches to `params` from t on."""
        kept = tuple((s, p) for s, p in self.segments if s < t)
        return DemandModel(kept + ((float(t), params),) if kept else ((0.0, params),), self.horizon)

    def pieces(self, t0: float, t1: float) -> list[tuple[float, float, LinearDemandParams]]:
        """Split [t0, t1] at law changes: [(start, end, law), ...]."""
        cuts = [t0] + [s for s in self.starts if t0 < s < t1] + [t1]
        return [(lo, hi, self.params_at(lo)) for lo, hi in zip(cuts, cuts[1:]) if hi > lo]


def eval_rate(model: DemandModel, t: float, p: float) -> Rate:
    """Sales rate at time t and price p."""
    if not math.isfinite(p):
        raise ValueError(f"price must be finite, got {p}")
    return model.params_at(t).rate(p)


def eval_rates(params: LinearDemandParams, prices: np.ndarray) -> np.ndarray:
    """Vectorised `LinearDemandParams.rate` over an array of prices."""
    return np.clip(params.scale * (params.a - params.b * np.asarray(prices, dtype=float)), 0.0, params.cap)


def rate_slope(model: DemandModel, t: float, p: float) -> float:
    """dv/dp: -scale*b on the unclamped branch, 0 where the law is clamped."""
    params = model.params_at(t)
    raw = params.scale * (params.a - params.b * p)
    return -params.scale * params.b if 0.0 <= raw <= params.cap else 0.0


def invert_rate(model: DemandModel, t: float, r: Rate) -> float:
    """
    Price selling exactly `r` units per unit of time, taken on the strictly
    decreasing branch. Price bounds are not applied here; planners check them.
    """
    params = model.params_at(t)
    max_rate = params.max_branch_rate
    if r < 0 or r > max_rate * (1 + _REL_EPS) + _REL_EPS:
        raise InfeasibleRateError(r, max_rate)
    if params.scale == 0:
        return params.choke_price
    return (params.a - min(r, max_rate) / params.scale) / params.b


def revenue_max_price(model: DemandModel, t: float) -> float:
    """Maximiser of p * v(p), clamped into the admissible price bounds."""
    params = model.params_at(t)
    interior = params.a / (2 * params.b)
    # Below cap_price revenue is p * cap, still increasing in p
    interior = max(interior, params.cap_price)
    return params.clip_price(interior)


def max_revenue_rate(model: DemandModel, t: float) -> float:
    p_star = revenue_max_price(model, t)
    return p_star * model.params_at(t).rate(p_star)


def solve_price_for_revenue_rate(model: DemandModel, t: float, c: float, p_ref: float) -> float:
    """
    Price p within the admissible bounds with p * v(p) = c.

    The revenue curve is unimodal, so there are at most two roots; the one
    closest to `p_ref` wins and an exact tie goes to the lower price.

    Raises:
        InfeasibleTargetError: c exceeds the maximum revenue rate (shortfall
            attached), or no admissible price reaches c.
    """
    if c < 0:
        raise ValueError(f"revenue rate target must be nonnegative, got {c}")
    params = model.params_at(t)
    p_star = revenue_max_price(model, t)
    capacity = p_star * params.rate(p_star)
    if c > capacity * (1 + 1e-12) + 1e-12:
        raise InfeasibleTargetError("revenue rate target above capacity", shortfall=c - capacity)
    if params.scale == 0:
        return params.clip_price(p_ref)
    if c >= capacity:
        return p_star

    slack = 1e-9 * max(1.0, abs(params.price_lo), abs(p_star))
    candidates = [
        p for p in _revenue_roots(params, c)
        if params.price_lo - slack <= p <= params.price_hi + slack
    ]
    if not candidates:
        raise InfeasibleTargetError(
            "revenue rate target unreachable inside the price bounds",
            shortfall=c - capacity,
        )
    best = min(candidates, key=lambda p: (abs(p - p_ref), p))
    log.debug(f"revenue rate {c:.6g}: candidates {rounded(candidates)}, picked {best:.6g} (ref {p_ref:.6g})")
    return params.clip_price(best)


def _revenue_roots(params: LinearDemandParams, c: float) -> list[float]:
    """All prices with p * v(p) = c on the linear and capped branches."""
    a, b, s = params.a, params.b, params.scale
    roots = []
    disc = a * a - 4.0 * b * c / s
    if disc >= 0:
        sq = math.sqrt(disc)
        for p in ((a - sq) / (2 * b), (a + sq) / (2 * b)):
            if params.cap_price <= p <= params.choke_price:
                roots.append(p)
    if math.isfinite(params.cap):
        p = c / params.cap
        if 0.0 <= p <= params.cap_price:
            roots.append(p)
    return sorted(set(roots))
