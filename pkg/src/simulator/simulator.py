"""
Forward simulation of a scenario: execute the current policy against the
true demand, apply demand-change events as they happen and replan from the
realized state.
"""
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import polars as pl

from src.constraints.constraints import (
    FeasibilityViolation,
    Trajectory,
    check_feasibility_against,
    constraint_report,
)
from src.demand.demand import DemandModel
from src.distribution.distribution import Allocation, DistributionMethod
from src.planner.base import PlannerState, PlanResult, plan
from src.planner.policy import PricingPolicy, integrate_policy, output_grid
from src.planner.tvm import plan_tvm
from src.simulator.scenario import PlannerKind, Scenario
from src.utils.errors import PricingError
from src.utils.logger import logger

log = logger.bind(step="simulator")

# Triggers sharing a decision time: the first one listed names the replan
_TRIGGER_ORDER = ("event", "plan", "constraint")


@dataclass(frozen=True)
class ReplanRecord:
    t: float
    trigger: str
    group: int
    old_price: Optional[float]
    new_price: float


@dataclass(frozen=True, eq=False)
class SimulationResult:
    trajectory: Trajectory
    policy: PricingPolicy
    replans: tuple[ReplanRecord, ...]
    allocations: tuple[tuple[float, Allocation], ...]
    violation: Optional[FeasibilityViolation]
    report: pl.DataFrame
    infeasible: tuple[str, ...] = ()

    @property
    def final_revenue(self) -> float:
        return self.trajectory.final_revenue

    @property
    def feasible(self) -> bool:
        return not self.infeasible and self.violation is None

    def replans_frame(self) -> pl.DataFrame:
        return pl.DataFrame(
            [(r.t, r.trigger, r.group + 1, r.old_price, r.new_price) for r in self.replans],
            schema={"t": pl.Float64, "trigger": pl.String, "group": pl.Int64,
                    "old_price": pl.Float64, "new_price": pl.Float64},
            orient="row",
        )


def replan(scenario: Scenario, models: Sequence[DemandModel], state: PlannerState, n_points: int = 1000) -> PlanResult:
    """Plan the rest of the horizon from `state` with the scenario's planner and distribution method."""
    if scenario.planner is PlannerKind.TVM:
        return plan_tvm(scenario.schedule, models, scenario.time_value, scenario.distribution, state, n_points)
    return plan(scenario.schedule, models, scenario.distribution, state, n_points)


def _decision_times(scenario: Scenario) -> dict[float, list]:
    decisions: dict[float, list] = {}
    if scenario.warmup_until > 0:
        decisions.setdefault(scenario.warmup_until, []).append("plan")
    for event in scenario.events:
        decisions.setdefault(event.time, []).append(event)
    if scenario.replan_at_constraints:
        for tau in scenario.schedule.times[1:-1]:
            decisions.setdefault(tau, []).append("constraint")
    return dict(sorted(decisions.items()))


def _advance(
    policy: PricingPolicy,
    models: Sequence[DemandModel],
    state: PlannerState,
    t: float,
    time_value,
) -> PlannerState:
    if t <= state.t:
        return state
    traj = integrate_policy(
        policy.restricted(state.t, t), models, np.array([state.t, t]), time_value, state.sold, state.revenue
    )
    return PlannerState(t, tuple(traj.sales[:, -1]), tuple(traj.revenue[:, -1]))


def run(scenario: Scenario, n_points: int = 1000) -> SimulationResult:
    """
    Simulate the scenario to its horizon.

    A replan that fails leaves the current policy in force; the result then
    carries every failure, in time order, in `infeasible` instead of raising.
    """
    schedule = scenario.schedule
    horizon = scenario.horizon
    models = list(scenario.models)
    time_value = scenario.time_value if scenario.planner is PlannerKind.TVM else None
    state = PlannerState.initial(len(models))
    replans: list[ReplanRecord] = []
    committed: list[tuple[float, Allocation]] = []
    pending: list[tuple[float, Allocation]] = []
    infeasible: list[str] = []

    log.info(f"Simulating '{scenario.name or 'scenario'}' ({scenario.planner.value}, {scenario.distribution.value})")
    if scenario.warmup_until > 0:
        executed = PricingPolicy.constant(scenario.initial_prices, 0.0, horizon)
        replans += [ReplanRecord(0.0, "warmup", i, None, p) for i, p in enumerate(scenario.initial_prices)]
    else:
        try:
            result = replan(scenario, models, state, n_points)
        except PricingError as err:
            log.warning(f"Initial plan infeasible: {err}")
            raise
        executed, pending = result.policy, list(result.allocations)
        replans += [ReplanRecord(0.0, "plan", i, None, executed.price_at(i, 0.0)) for i in range(len(models))]

    for t, actions in _decision_times(scenario).items():
        state = _advance(executed, models, state, t, time_value)
        triggers = []
        for action in actions:
            if isinstance(action, str):
                triggers.append(action)
                continue
            current = models[action.group].params_at(t)
            if current == action.params:
                price = executed.price_at(action.group, t)
                replans.append(ReplanRecord(t, "event-unchanged", action.group, price, price))
                log.info(f"t={t:g}: demand of group {action.group} unchanged, keeping the policy")
                continue
            models[action.group] = models[action.group].with_change(t, action.params)
            log.info(f"t={t:g}: demand change for group {action.group}: {current} -> {action.params}")
            triggers.append("event")
        if not triggers:
            continue
        trigger = min(triggers, key=_TRIGGER_ORDER.index)
        try:
            result = replan(scenario, models, state, n_points)
        except PricingError as err:
            infeasible.append(f"t={t:g}: {err}")
            log.warning(f"Replan after {trigger} infeasible, keeping the current policy: {err}")
            continue
        committed += [(at, alloc) for at, alloc in pending if at < t]
        pending = list(result.allocations)
        replans += [
            ReplanRecord(t, trigger, i, executed.price_at(i, t), result.policy.price_at(i, t))
            for i in range(len(models))
        ]
        executed = executed.then(result.policy)
    committed += pending

    extra = list(schedule.times) + executed.all_breakpoints() + [e.time for e in scenario.events]
    grid = output_grid(0.0, horizon, scenario.output_points(n_points), extra)
    trajectory = integrate_policy(executed, models, grid, time_value)
    violation = check_feasibility_against(schedule, trajectory)
    if violation is not None:
        log.warning(f"Simulated trajectory violates a constraint: {violation}")
    log.success(f"Simulation done, final revenue {trajectory.final_revenue:.6g}")
    return SimulationResult(
        trajectory, executed, tuple(replans), tuple(committed), violation,
        constraint_report(schedule, trajectory), tuple(infeasible),
    )


@dataclass(frozen=True, eq=False)
class Comparison:
    results: dict[DistributionMethod, SimulationResult]
    methods: tuple[DistributionMethod, DistributionMethod]

    @property
    def revenues(self) -> tuple[float, float]:
        first, second = self.methods
        return self.results[first].final_revenue, self.results[second].final_revenue

    @property
    def delta(self) -> float:
        first, second = self.revenues
        return first - second

    @property
    def delta_pct(self) -> float:
        return 100.0 * self.delta / max(1.0, abs(self.revenues[1]))


def compare(
    scenario: Scenario,
    methods: tuple[DistributionMethod, DistributionMethod] = (DistributionMethod.HEADROOM, DistributionMethod.REVSHARE),
    n_points: int = 1000,
) -> Comparison:
    """The same scenario simulated under two distribution methods."""
    results = {DistributionMethod(m): run(scenario.with_method(m), n_points) for m in methods}
    comparison = Comparison(results, tuple(DistributionMethod(m) for m in methods))
    log.info(f"Compared {[m.value for m in comparison.methods]}: revenues {comparison.revenues}, "
             f"delta {comparison.delta:.6g} ({comparison.delta_pct:.4g}%)")
    return comparison


def distribution_report(simulation: SimulationResult) -> pl.DataFrame:
    """One row per executed distribution and group: (t, group, weight, share)."""
    rows = [
        (t, i + 1, weight, share)
        for t, allocation in simulation.allocations
        for i, (weight, share) in enumerate(zip(allocation.weights, allocation.shares))
    ]
    return pl.DataFrame(
        rows,
        schema={"t": pl.Float64, "group": pl.Int64, "weight": pl.Float64, "share": pl.Float64},
        orient="row",
    )
