"""Scenario definition: groups, constraints, time value, demand-change events and run options."""
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

from src.constraints.constraints import ConstraintSchedule
from src.demand.demand import DemandModel, LinearDemandParams
from src.distribution.distribution import DistributionMethod
from src.planner.time_value import TimeValueSpec


class PlannerKind(str, Enum):
    BASE = "base"
    TVM = "tvm"


@dataclass(frozen=True)
class GroupSpec:
    model: DemandModel
    initial_price: float
    name: str = ""


@dataclass(frozen=True)
class Event:
    """Step change of one group's demand law at `time`."""

    time: float
    group: int
    params: LinearDemandParams


@dataclass(frozen=True)
class Scenario:
    horizon: float
    groups: tuple[GroupSpec, ...]
    schedule: ConstraintSchedule
    time_value: TimeValueSpec = field(default_factory=TimeValueSpec)
    events: tuple[Event, ...] = ()
    planner: PlannerKind = PlannerKind.BASE
    distribution: DistributionMethod = DistributionMethod.HEADROOM
    output_step: Optional[float] = None
    warmup_until: float = 0.0
    replan_at_constraints: bool = False
    name: str = ""

    def __post_init__(self):
        if len(self.groups) != self.schedule.n_groups:
            raise ValueError(f"{len(self.groups)} groups but the schedule has {self.schedule.n_groups}")
        if abs(self.schedule.horizon - self.horizon) > 1e-12 * max(1.0, self.horizon):
            raise ValueError(f"schedule ends at {self.schedule.horizon}, horizon is {self.horizon}")
        times = [e.time for e in self.events]
        if any(not 0 < t < self.horizon for t in times):
            raise ValueError(f"event times must lie inside (0, {self.horizon}): {times}")
        if any(t1 <= t0 for t0, t1 in zip(times, times[1:])):
            raise ValueError(f"event times must be strictly increasing: {times}")
        for e in self.events:
            if not 0 <= e.group < len(self.groups):
                raise ValueError(f"event at t={e.time} names unknown group {e.group}")
        for i, g in enumerate(self.groups):
            params = g.model.params_at(0.0)
            if not params.price_lo <= g.initial_price <= params.price_hi:
                raise ValueError(f"group {i}: initial price {g.initial_price} outside its price bounds")
        if not 0 <= self.warmup_until < self.horizon:
            raise ValueError(f"warmup_until must lie in [0, {self.horizon}), got {self.warmup_until}")
        if self.output_step is not None and not 0 < self.output_step <= self.horizon:
            raise ValueError(f"output_step must lie in (0, {self.horizon}], got {self.output_step}")

    @property
    def models(self) -> list[DemandModel]:
        return [g.model for g in self.groups]

    @property
    def initial_prices(self) -> list[float]:
        return [g.initial_price for g in self.groups]

    def output_points(self, default_points: int = 1000) -> int:
        if self.output_step is None:
            return default_points + 1
        return int(round(self.horizon / self.output_step)) + 1

    def with_method(self, method: DistributionMethod) -> "Scenario":
        return replace(self, distribution=DistributionMethod(method))

    def with_planner(self, planner: PlannerKind) -> "Scenario":
        return replace(self, planner=PlannerKind(planner))
