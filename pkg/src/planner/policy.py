"""
Pricing policies (per-group price trajectories) and their integration into
cumulative sales and revenue trajectories.
"""
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence, Union

import numpy as np
import polars as pl
from numpy.polynomial.legendre import leggauss

from src.constraints.constraints import Trajectory
from src.demand.demand import DemandModel, eval_rates
from src.planner.time_value import TimeValueSpec

_GL_NODES, _GL_WEIGHTS = leggauss(16)
_TIME_EPS = 1e-12


@dataclass(frozen=True)
class PriceSegment:
    """Constant price on [start, end)."""

    start: float
    end: float
    price: float

    def prices(self, t):
        return np.full(np.shape(t), self.price) if np.ndim(t) else self.price

    def posted_prices(self, t):
        return self.prices(t)

    def restricted(self, start: float, end: float) -> "PriceSegment":
        return replace(self, start=start, end=end)


@dataclass(frozen=True)
class CurveSegment:
    """Closed-form curve p(t) = (a/b - q/zeta(t)) / 2 on [start, end); posted price is kappa(t) * p(t)."""

    start: float
    end: float
    q: float
    a: float
    b: float
    time_value: TimeValueSpec

    def prices(self, t):
        return 0.5 * (self.a / self.b - self.q / self.time_value.zeta(t))

    def posted_prices(self, t):
        return self.time_value.kappa(t) * self.prices(t)

    def restricted(self, start: float, end: float) -> "CurveSegment":
        return replace(self, start=start, end=end)


Segment = Union[PriceSegment, CurveSegment]


@dataclass(frozen=True)
class PricingPolicy:
    segments: tuple[tuple[Segment, ...], ...]

    def __post_init__(self):
        if not self.segments or any(not group for group in self.segments):
            raise ValueError("policy needs at least one segment per group")
        spans = {(group[0].start, group[-1].end) for group in self.segments}
        if len(spans) != 1:
            raise ValueError(f"groups cover different spans: {sorted(spans)}")
        for i, group in enumerate(self.segments):
            for seg in group:
                if not seg.end > seg.start:
                    raise ValueError(f"group {i}: empty segment [{seg.start}, {seg.end})")
            for left, right in zip(group, group[1:]):
                if abs(left.end - right.start) > _TIME_EPS * max(1.0, abs(left.end)):
                    raise ValueError(f"group {i}: gap or overlap at {left.end} / {right.start}")

    @classmethod
    def constant(cls, prices: Sequence[float], start: float, end: float) -> "PricingPolicy":
        return cls(tuple((PriceSegment(start, end, float(p)),) for p in prices))

    @property
    def n_groups(self) -> int:
        return len(self.segments)

    @property
    def start(self) -> float:
        return self.segments[0][0].start

    @property
    def end(self) -> float:
        return self.segments[0][-1].end

    def segment_at(self, group: int, t: float) -> Segment:
        segments = self.segments[group]
        starts = [seg.start for seg in segments]
        idx = int(np.searchsorted(starts, t, side="right")) - 1
        return segments[min(max(idx, 0), len(segments) - 1)]

    def price_at(self, group: int, t: float) -> float:
        return float(self.segment_at(group, t).prices(t))

    def posted_price_at(self, group: int, t: float) -> float:
        return float(self.segment_at(group, t).posted_prices(t))

    def breakpoints(self, group: int) -> list[float]:
        """Interior segment boundaries of a group."""
        return [seg.start for seg in self.segments[group][1:]]

    def all_breakpoints(self) -> list[float]:
        return sorted({t for i in range(self.n_groups) for t in self.breakpoints(i)})

    def restricted(self, start: float, end: float) -> "PricingPolicy":
        """The policy cut to [start, end)."""
        cut = []
        for group in self.segments:
            kept = [
                seg.restricted(max(seg.start, start), min(seg.end, end))
                for seg in group if seg.end > start and seg.start < end
            ]
            cut.append(tuple(kept))
        return PricingPolicy(tuple(cut))

    def then(self, other: "PricingPolicy") -> "PricingPolicy":
        """This policy up to `other.start`, followed by `other`."""
        if other.start <= self.start:
            return other
        head = self.restricted(self.start, other.start)
        return PricingPolicy(tuple(h + o for h, o in zip(head.segments, other.segments)))

    def to_frame(self, grid: Optional[Iterable[float]] = None) -> pl.DataFrame:
        """
        Rows (t, group, price, posted_price): one per constant segment at its
        start, curve segments sampled at the grid points they contain.
        """
        grid = np.asarray(list(grid) if grid is not None else [], dtype=float)
        rows = []
        for i, group in enumerate(self.segments):
            for seg in group:
                if isinstance(seg, PriceSegment):
                    times = np.array([seg.start])
                else:
                    inside = grid[(grid >= seg.start) & (grid < seg.end)]
                    times = np.unique(np.concatenate([[seg.start], inside]))
                for t, p, posted in zip(times, seg.prices(times), seg.posted_prices(times)):
                    rows.append((float(t), i + 1, float(p), float(posted)))
        return pl.DataFrame(
            rows,
            schema={"t": pl.Float64, "group": pl.Int64, "price": pl.Float64, "posted_price": pl.Float64},
            orient="row",
        ).sort(["t", "group"])


def output_grid(start: float, end: float, n_points: int, extra: Iterable[float] = ()) -> np.ndarray:
    """Uniform grid on [start, end] merged with extra points (breakpoints, schedule times) inside it."""
    uniform = np.linspace(start, end, max(int(n_points), 2))
    extra = np.asarray([t for t in extra if start <= t <= end], dtype=float)
    return np.unique(np.concatenate([uniform, extra]))


def _increments(
    segments: Sequence[Segment],
    model: DemandModel,
    cuts: np.ndarray,
    time_value: Optional[TimeValueSpec],
) -> tuple[np.ndarray, np.ndarray]:
    """Sales and revenue earned on each [cuts[n], cuts[n+1]] by Gauss-Legendre quadrature."""
    lo, hi = cuts[:-1], cuts[1:]
    mid, half = (lo + hi) / 2, (hi - lo) / 2
    x = mid[:, None] + half[:, None] * _GL_NODES

    prices = np.empty_like(x)
    seg_idx = np.clip(np.searchsorted([s.start for s in segments], mid, side="right") - 1, 0, len(segments) - 1)
    for k, seg in enumerate(segments):
        rows = seg_idx == k
        if rows.any():
            prices[rows] = seg.prices(x[rows])

    rates = np.empty_like(x)
    law_idx = np.clip(np.searchsorted(model.starts, mid, side="right") - 1, 0, len(model.segments) - 1)
    for k, (_, params) in enumerate(model.segments):
        rows = law_idx == k
        if rows.any():
            rates[rows] = eval_rates(params, prices[rows])

    weight = time_value.zeta(x) if time_value is not None else 1.0
    sales = half * (rates @ _GL_WEIGHTS)
    revenue = half * ((weight * prices * rates) @ _GL_WEIGHTS)
    return sales, revenue


def integrate_policy(
    policy: PricingPolicy,
    models: Sequence[DemandModel],
    grid: np.ndarray,
    time_value: Optional[TimeValueSpec] = None,
    sales0: Optional[Sequence[float]] = None,
    revenue0: Optional[Sequence[float]] = None,
) -> Trajectory:
    """
    Cumulative sales and revenue of every group on `grid` when `policy` is
    executed against the demand `models`, starting from the given totals.

    Revenue is weighted by zeta(t) when a time value spec is passed (discounted
    revenue), nominal otherwise.
    """
    grid = np.asarray(grid, dtype=float)
    if grid[0] < policy.start - _TIME_EPS or grid[-1] > policy.end + _TIME_EPS:
        raise ValueError(f"grid [{grid[0]}, {grid[-1]}] outside the policy span [{policy.start}, {policy.end}]")
    k = policy.n_groups
    sales0 = np.zeros(k) if sales0 is None else np.asarray(sales0, dtype=float)
    revenue0 = np.zeros(k) if revenue0 is None else np.asarray(revenue0, dtype=float)

    sales = np.empty((k, grid.size))
    revenue = np.empty((k, grid.size))
    for i in range(k):
        inner = [t for t in policy.breakpoints(i) + models[i].starts if grid[0] < t < grid[-1]]
        cuts = np.unique(np.concatenate([grid, inner]))
        d_sales, d_revenue = _increments(policy.segments[i], models[i], cuts, time_value)
        at = np.searchsorted(cuts, grid)
        sales[i] = sales0[i] + np.concatenate([[0.0], np.cumsum(d_sales)])[at]
        revenue[i] = revenue0[i] + np.concatenate([[0.0], np.cumsum(d_revenue)])[at]
    return Trajectory(grid, sales, revenue)
