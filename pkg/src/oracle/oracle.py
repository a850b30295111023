"""
Brute-force reference optimizer for small instances.

Enumerates every piecewise-constant policy whose prices come from a per-group
grid and change only at schedule times, and keeps the feasible one with the
largest (discounted) aggregate revenue. Final sales are matched within a band
of one grid step's worth of sales; revenue floors at the default relative
tolerance.
"""
import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from src.constraints.constraints import FEASIBILITY_RTOL, ConstraintSchedule
from src.demand.demand import DemandModel, eval_rates
from src.planner.policy import PriceSegment, PricingPolicy
from src.planner.time_value import TimeValueSpec, zeta_integral
from src.utils.errors import BudgetExceededError
from src.utils.logger import logger

log = logger.bind(step="oracle")

DEFAULT_BUDGET = 1_000_000
_CHUNK_CELLS = 1_000_000


@dataclass(frozen=True)
class PriceGrid:
    lo: float
    hi: float
    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"price grid needs at least 2 points, got {self.n}")
        if not self.lo < self.hi:
            raise ValueError(f"price grid needs lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def step(self) -> float:
        return (self.hi - self.lo) / (self.n - 1)

    @property
    def points(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n)


@dataclass(frozen=True)
class GridSpec:
    """One price grid per group, shared by all of that group's segments."""

    grids: tuple[PriceGrid, ...]
    budget: int = DEFAULT_BUDGET

    def combinations(self, n_segments: int) -> int:
        return math.prod(g.n ** n_segments for g in self.grids)


@dataclass(frozen=True)
class OracleResult:
    policy: Optional[PricingPolicy]
    revenue: Optional[float]
    delta_s: tuple[float, ...]
    evaluated: int
    feasible_count: int

    @property
    def feasible(self) -> bool:
        return self.policy is not None


def sales_band(schedule: ConstraintSchedule, models: Sequence[DemandModel], grid: GridSpec) -> tuple[float, ...]:
    """Per group: the most sales one grid step can move over the horizon."""
    return tuple(
        max(p.scale * p.b for _, p in model.segments) * g.step * schedule.horizon
        for model, g in zip(models, grid.grids)
    )


def _group_table(
    schedule: ConstraintSchedule,
    model: DemandModel,
    grid: PriceGrid,
    time_value: Optional[TimeValueSpec],
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    All grid policies of one group in lexicographic order: price index
    vectors (N, l), cumulative sales and cumulative revenue at tau_1..tau_l.
    """
    n_seg = schedule.last
    points = grid.points
    # per segment and grid price: sales and revenue earned on that segment
    seg_sales = np.zeros((n_seg, grid.n))
    seg_revenue = np.zeros((n_seg, grid.n))
    for j in range(n_seg):
        for lo, hi, params in model.pieces(schedule.times[j], schedule.times[j + 1]):
            rates = eval_rates(params, points)
            weight = zeta_integral(time_value, lo, hi) if time_value is not None else hi - lo
            seg_sales[j] += rates * (hi - lo)
            seg_revenue[j] += points * rates * weight
    index = np.array(list(itertools.product(range(grid.n), repeat=n_seg)), dtype=np.int64)
    segs = np.arange(n_seg)
    sales = np.cumsum(seg_sales[segs, index], axis=1)
    revenue = np.cumsum(seg_revenue[segs, index], axis=1)
    return index, sales, revenue


def _sales_ok(schedule: ConstraintSchedule, group: int, sales: np.ndarray, band: float) -> np.ndarray:
    ok = np.abs(sales[:, -1] - schedule.final_sales[group]) <= band
    for j in range(1, schedule.last):
        floor = schedule.sales_floors[group][j]
        if floor is not None:
            ok &= sales[:, j - 1] >= floor - band
    return ok


def best(
    schedule: ConstraintSchedule,
    models: Sequence[DemandModel],
    grid: GridSpec,
    time_value: Optional[TimeValueSpec] = None,
    rtol: float = FEASIBILITY_RTOL,
) -> OracleResult:
    """
    Highest-revenue feasible grid policy; ties go to the lexicographically
    smallest price vector (group by group, segment by segment).

    Raises:
        BudgetExceededError: the enumeration is larger than the grid budget.
    """
    required = grid.combinations(schedule.last)
    if required > grid.budget:
        raise BudgetExceededError(required, grid.budget)
    bands = sales_band(schedule, models, grid)
    log.info(f"Enumerating {required} grid policies (sales bands {[round(b, 6) for b in bands]})")

    tables = []
    for i, (model, g) in enumerate(zip(models, grid.grids)):
        index, sales, revenue = _group_table(schedule, model, g, time_value)
        ok = _sales_ok(schedule, i, sales, bands[i])
        tables.append((index[ok], revenue[ok]))
        log.debug(f"group {i}: {int(ok.sum())} of {len(ok)} grid policies meet the sales constraints")

    floors = np.array([f if f is not None else -np.inf for f in schedule.revenue_floors[1:]])
    floor_tol = np.where(np.isfinite(floors), rtol * np.maximum(1.0, np.abs(floors)), 0.0)

    # all other groups' feasible policies combined in lexicographic order
    rest_index = np.zeros((1, 0), dtype=np.int64)
    rest_revenue = np.zeros((1, schedule.last))
    for index, revenue in tables[1:]:
        rest_index = np.concatenate(
            [np.repeat(rest_index, len(index), axis=0), np.tile(index, (len(rest_index), 1))], axis=1
        )
        rest_revenue = (rest_revenue[:, None, :] + revenue[None, :, :]).reshape(-1, schedule.last)

    best_value, best_combo, feasible_count = -np.inf, None, 0
    first_index, first_revenue = tables[0]
    chunk_rows = max(1, _CHUNK_CELLS // max(1, len(rest_revenue)))
    for lo in range(0, len(first_index), chunk_rows):
        chunk = first_revenue[lo:lo + chunk_rows]
        total = chunk[:, None, :] + rest_revenue[None, :, :]
        ok = np.all(total >= floors - floor_tol, axis=2)
        feasible_count += int(ok.sum())
        if not ok.any():
            continue
        final = np.where(ok, total[:, :, -1], -np.inf)
        flat = int(np.argmax(final))
        if final.flat[flat] > best_value:
            best_value = float(final.flat[flat])
            row, col = divmod(flat, final.shape[1])
            best_combo = (lo + row, col)

    if best_combo is None:
        log.warning("No grid policy meets every constraint")
        return OracleResult(None, None, bands, required, 0)

    row, col = best_combo
    choice = [first_index[row]] + (np.split(rest_index[col], len(tables) - 1) if len(tables) > 1 else [])
    policy = PricingPolicy(tuple(
        tuple(
            PriceSegment(schedule.times[j], schedule.times[j + 1], float(g.points[idx]))
            for j, idx in enumerate(indices)
        )
        for g, indices in zip(grid.grids, choice)
    ))
    log.success(f"Oracle revenue {best_value:.6g} from {feasible_count} feasible grid policies")
    return OracleResult(policy, best_value, bands, required, feasible_count)


def oracle_gap(plan_revenue: float, oracle_revenue: float) -> float:
    """Relative optimality gap of a planner against the oracle."""
    return (oracle_revenue - plan_revenue) / max(1.0, abs(oracle_revenue))


def refinement_bound(
    schedule: ConstraintSchedule,
    models: Sequence[DemandModel],
    coarse: GridSpec,
    fine: GridSpec,
    time_value: Optional[TimeValueSpec] = None,
) -> float:
    """
    Most revenue the oracle optimum may lose when `coarse` is refined to the
    nested grid `fine`: per group, the revenue Lipschitz constant over the fine
    points times the sum of both grid steps.
    """
    total = 0.0
    for model, g_coarse, g_fine in zip(models, coarse.grids, fine.grids):
        points = g_fine.points
        lipschitz = 0.0
        for j in range(schedule.last):
            for lo, hi, params in model.pieces(schedule.times[j], schedule.times[j + 1]):
                weight = zeta_integral(time_value, lo, hi) if time_value is not None else hi - lo
                slopes = np.abs(np.diff(points * eval_rates(params, points))) / g_fine.step
                lipschitz += weight * float(slopes.max())
        total += lipschitz * (g_coarse.step + g_fine.step)
    return total
