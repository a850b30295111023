"""
Constraint schedule (sales floors, final sales, aggregate revenue floors) and
the cumulative sales/revenue trajectories checked against it.

All per-time arrays are aligned with `times` (index 0..l); floors at index 0
are always absent.
"""
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
import polars as pl

from src.utils.logger import logger

log = logger.bind(step="constraints")

FEASIBILITY_RTOL = 1e-6


def floor_tolerance(value: float, rtol: float = FEASIBILITY_RTOL) -> float:
    """Default check tolerance: relative to the floor magnitude, at least rtol."""
    return rtol * max(1.0, abs(value))


@dataclass(frozen=True)
class ConstraintSchedule:
    times: tuple[float, ...]
    final_sales: tuple[float, ...]
    sales_floors: tuple[tuple[Optional[float], ...], ...] = ()
    revenue_floors: tuple[Optional[float], ...] = ()

    def __post_init__(self):
        n_times = len(self.times)
        if n_times < 2:
            raise ValueError("schedule needs at least the times 0 and T")
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))
        object.__setattr__(self, "final_sales", tuple(float(s) for s in self.final_sales))
        if not self.sales_floors:
            object.__setattr__(self, "sales_floors", tuple((None,) * n_times for _ in self.final_sales))
        if not self.revenue_floors:
            object.__setattr__(self, "revenue_floors", (None,) * n_times)
        if len(self.sales_floors) != len(self.final_sales):
            raise ValueError("one row of sales floors per group is required")
        if any(len(row) != n_times for row in self.sales_floors) or len(self.revenue_floors) != n_times:
            raise ValueError("floor arrays must be aligned with times")

    @property
    def horizon(self) -> float:
        return self.times[-1]

    @property
    def n_groups(self) -> int:
        return len(self.final_sales)

    @property
    def last(self) -> int:
        """Index l of the final time."""
        return len(self.times) - 1

    def sales_targets(self, group: int, after: float) -> list[tuple[int, float]]:
        """Pending (index, target) pairs for a group: intermediate floors then the final sales."""
        targets = [
            (j, floor) for j, floor in enumerate(self.sales_floors[group])
            if floor is not None and 0 < j < self.last and self.times[j] > after
        ]
        return targets + [(self.last, self.final_sales[group])]

    def revenue_targets(self, after: float) -> list[tuple[int, float]]:
        """Pending (index, floor) pairs of aggregate revenue floors strictly after `after`."""
        return [
            (j, floor) for j, floor in enumerate(self.revenue_floors)
            if floor is not None and j > 0 and self.times[j] > after
        ]


@dataclass(frozen=True)
class Violation:
    index: int
    field: str
    message: str


def validate(schedule: ConstraintSchedule) -> list[Violation]:
    """Every invariant violation of the schedule; an empty list means ok."""
    violations = []
    times = schedule.times
    if times[0] != 0:
        violations.append(Violation(0, "times", f"first time must be 0, got {times[0]}"))
    for j in range(1, len(times)):
        if times[j] <= times[j - 1]:
            violations.append(Violation(j, "times", f"non-increasing times at j={j}"))

    for i, row in enumerate(schedule.sales_floors):
        final = schedule.final_sales[i]
        if final < 0:
            violations.append(Violation(schedule.last, f"final_sales[{i}]", "negative final sales"))
        previous = None
        for j, floor in enumerate(row):
            if floor is None:
                continue
            name = f"sales_floors[{i}][{j}]"
            if j == 0 or j == schedule.last:
                violations.append(Violation(j, name, "sales floors are only allowed at intermediate times"))
            if floor < 0:
                violations.append(Violation(j, name, "negative floor"))
            if floor > final:
                violations.append(Violation(j, name, "intermediate exceeds final"))
            if previous is not None and floor < previous:
                violations.append(Violation(j, name, "sales floors decrease over time"))
            previous = floor

    for j, floor in enumerate(schedule.revenue_floors):
        if floor is None:
            continue
        if j == 0:
            violations.append(Violation(0, "revenue_floors[0]", "revenue floor at the start time"))
        if floor < 0:
            violations.append(Violation(j, f"revenue_floors[{j}]", "negative floor"))

    for v in violations:
        log.warning(f"Schedule violation at j={v.index} ({v.field}): {v.message}")
    return violations


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Cumulative sales and revenue per group on a time grid (revenue possibly discounted)."""

    grid: np.ndarray
    sales: np.ndarray
    revenue: np.ndarray

    @property
    def n_groups(self) -> int:
        return self.sales.shape[0]

    @property
    def aggregate(self) -> np.ndarray:
        return self.revenue.sum(axis=0)

    def sales_at(self, group: int, t: float) -> float:
        return float(np.interp(t, self.grid, self.sales[group]))

    def group_revenue_at(self, group: int, t: float) -> float:
        return float(np.interp(t, self.grid, self.revenue[group]))

    def revenue_at(self, t: float) -> float:
        return float(np.interp(t, self.grid, self.aggregate))

    @property
    def final_revenue(self) -> float:
        return float(self.aggregate[-1])

    def to_frame(self) -> pl.DataFrame:
        columns = {"t": self.grid}
        columns.update({f"sales_{i + 1}": self.sales[i] for i in range(self.n_groups)})
        columns.update({f"revenue_{i + 1}": self.revenue[i] for i in range(self.n_groups)})
        columns["revenue"] = self.aggregate
        return pl.DataFrame(columns)


@dataclass(frozen=True)
class FeasibilityViolation:
    kind: Literal["sales", "final_sales", "revenue"]
    group: Optional[int]
    index: int
    gap: float


def check_feasibility_against(
    schedule: ConstraintSchedule,
    traj: Trajectory,
    tol: Optional[float] = None,
    rtol: float = FEASIBILITY_RTOL,
) -> Optional[FeasibilityViolation]:
    """
    First violated constraint in time order, or None when the trajectory is feasible.

    With `tol` given the tolerance is absolute; otherwise each floor gets
    `rtol * max(1, |floor|)`. `gap` is target minus achieved value.
    """
    if traj.grid[0] > 0 or traj.grid[-1] < schedule.horizon * (1 - 1e-12):
        raise ValueError("trajectory does not cover the schedule horizon")

    def _tol(value: float) -> float:
        return tol if tol is not None else floor_tolerance(value, rtol)

    for j in range(1, schedule.last + 1):
        tau = schedule.times[j]
        for i in range(schedule.n_groups):
            sold = traj.sales_at(i, tau)
            if j == schedule.last:
                target = schedule.final_sales[i]
                if abs(sold - target) > _tol(target):
                    return FeasibilityViolation("final_sales", i, j, target - sold)
                continue
            floor = schedule.sales_floors[i][j]
            if floor is not None and sold < floor - _tol(floor):
                return FeasibilityViolation("sales", i, j, floor - sold)
        floor = schedule.revenue_floors[j]
        if floor is not None:
            earned = traj.revenue_at(tau)
            if earned < floor - _tol(floor):
                return FeasibilityViolation("revenue", None, j, floor - earned)
    return None


def constraint_report(schedule: ConstraintSchedule, traj: Trajectory) -> pl.DataFrame:
    """One row per constraint: kind, group (1-based, null for revenue), index, time, floor, value, slack."""
    rows = []
    for j in range(1, schedule.last + 1):
        tau = schedule.times[j]
        for i in range(schedule.n_groups):
            floor = schedule.final_sales[i] if j == schedule.last else schedule.sales_floors[i][j]
            if floor is None:
                continue
            kind = "final_sales" if j == schedule.last else "sales"
            sold = traj.sales_at(i, tau)
            rows.append((kind, i + 1, j, tau, floor, sold, sold - floor))
        floor = schedule.revenue_floors[j]
        if floor is not None:
            earned = traj.revenue_at(tau)
            rows.append(("revenue", None, j, tau, floor, earned, earned - floor))
    return pl.DataFrame(
        rows,
        schema={
            "kind": pl.String, "group": pl.Int64, "index": pl.Int64, "time": pl.Float64,
            "floor": pl.Float64, "value": pl.Float64, "slack": pl.Float64,
        },
        orient="row",
    )
