"""
Base constrained planner.

At each step the planner computes even-absorption prices (constant rates that
meet the remaining sales floors and the final sales exactly), looks for
revenue floors those prices would miss, and if there are any, raises revenue
up to the most stringent one by distributing the shortfall across groups.
Prices only change at schedule times.
"""
from dataclasses import dataclass, replace
from typing import Optional, Protocol, Sequence

import numpy as np

from src.constraints.constraints import ConstraintSchedule, Trajectory
from src.demand.demand import (
    DemandModel,
    LinearDemandParams,
    invert_rate,
    max_revenue_rate,
    solve_price_for_revenue_rate,
)
from src.distribution.distribution import Allocation, AllocationInput, DistributionMethod, allocate
from src.planner.policy import PriceSegment, PricingPolicy, integrate_policy, output_grid
from src.utils.errors import InfeasibleRateError, InfeasibleScenarioError, PricingError
from src.utils.logger import logger
from src.utils.numerics import rounded

log = logger.bind(step="planner-base")

# Floors within this relative distance of the projection count as met
DETECT_RTOL = 1e-9
_TIME_EPS = 1e-12


@dataclass(frozen=True)
class PlannerState:
    """Realized totals at time t, where planning (re)starts."""

    t: float
    sold: tuple[float, ...]
    revenue: tuple[float, ...]

    @classmethod
    def initial(cls, n_groups: int) -> "PlannerState":
        return cls(0.0, (0.0,) * n_groups, (0.0,) * n_groups)

    @property
    def total_revenue(self) -> float:
        return float(sum(self.revenue))

    def index(self, schedule: ConstraintSchedule) -> int:
        """Largest schedule index j with tau_j <= t."""
        return int(np.searchsorted(schedule.times, self.t + _TIME_EPS, side="right")) - 1

    def remaining(self, schedule: ConstraintSchedule) -> tuple[float, ...]:
        return tuple(final - sold for final, sold in zip(schedule.final_sales, self.sold))

    def advanced(self, t: float, d_sales: Sequence[float], d_revenue: Sequence[float]) -> "PlannerState":
        return PlannerState(
            t,
            tuple(s + d for s, d in zip(self.sold, d_sales)),
            tuple(r + d for r, d in zip(self.revenue, d_revenue)),
        )


class Profile(Protocol):
    """Per-group planned trajectory to T used for floor detection."""

    def revenue(self, group: int, t0: float, t1: float) -> float: ...

    def pinned(self, group: int) -> Optional[int]: ...


@dataclass(frozen=True)
class EvenPiece:
    start: float
    end: float
    price: float
    rate: float
    target_index: int


@dataclass(frozen=True)
class EvenAbsorption:
    """Even-absorption profile of every group from the state time to T."""

    pieces: tuple[tuple[EvenPiece, ...], ...]
    last: int

    @property
    def prices(self) -> tuple[float, ...]:
        return tuple(group[0].price for group in self.pieces)

    @property
    def rates(self) -> tuple[float, ...]:
        return tuple(group[0].rate for group in self.pieces)

    def pinned(self, group: int) -> Optional[int]:
        """Index of the intermediate sales floor setting the group's current rate, if any."""
        first = self.pieces[group][0]
        return first.target_index if first.target_index != self.last else None

    def revenue(self, group: int, t0: float, t1: float) -> float:
        return sum(
            p.price * p.rate * max(0.0, min(p.end, t1) - max(p.start, t0))
            for p in self.pieces[group]
        )


@dataclass(frozen=True)
class PlanStep:
    m: int
    start: float
    end: float
    selected: Optional[int]
    burdensome: tuple[int, ...] = ()


@dataclass(frozen=True)
class PlanResult:
    policy: PricingPolicy
    trajectory: Trajectory
    steps: tuple[PlanStep, ...]
    allocations: tuple[tuple[float, Allocation], ...]
    final_state: PlannerState
    stationarity: tuple[float, ...] = ()

    @property
    def final_revenue(self) -> float:
        return self.final_state.total_revenue


def pending_targets(schedule: ConstraintSchedule, group: int, t: float, sold: float) -> list[tuple[int, float]]:
    """Sales still owed per pending target: [(index, units to sell by tau_index)]."""
    return [(j, target - sold) for j, target in schedule.sales_targets(group, after=t)]


def check_remaining(schedule: ConstraintSchedule, group: int, sold: float) -> None:
    final = schedule.final_sales[group]
    if sold > final + 1e-9 * max(1.0, final):
        raise InfeasibleScenarioError(
            f"group {group}: already sold {sold:.6g} of final {final:.6g}", group=group, index=schedule.last
        )


def _price_for_rate(params: LinearDemandParams, model: DemandModel, t: float, rate: float, group: int, index: int) -> float:
    try:
        price = invert_rate(model, t, rate)
    except InfeasibleRateError as err:
        raise InfeasibleScenarioError(
            f"group {group}: sales rate {rate:.6g} needed for target j={index} exceeds {err.max_rate:.6g}",
            group=group,
            index=index,
        ) from err
    slack = 1e-9 * max(1.0, abs(price))
    if price < params.price_lo - slack or price > params.price_hi + slack:
        raise InfeasibleScenarioError(
            f"group {group}: price {price:.6g} for target j={index} outside [{params.price_lo}, {params.price_hi}]",
            group=group,
            index=index,
        )
    return params.clip_price(price)


def even_absorption_prices(
    state: PlannerState,
    schedule: ConstraintSchedule,
    models: Sequence[DemandModel],
) -> EvenAbsorption:
    """
    Constant-rate profile per group from the state time to T.

    The rate of each piece is the largest rate demanded by a pending target
    (intermediate sales floor or final sales); the piece lasts until that
    target's time.
    """
    pieces = []
    for i, model in enumerate(models):
        check_remaining(schedule, i, state.sold[i])
        params = model.params_at(state.t)
        t, sold, group = state.t, state.sold[i], []
        while t < schedule.horizon - _TIME_EPS:
            best_index, best_rate = None, -np.inf
            for j, owed in pending_targets(schedule, i, t, sold):
                rate = owed / (schedule.times[j] - t)
                if rate > best_rate:
                    best_index, best_rate = j, rate
            rate = max(best_rate, 0.0)
            price = _price_for_rate(params, model, state.t, rate, i, best_index)
            # the piece sells at the law's rate for the chosen price
            rate = params.rate(price)
            end = schedule.times[best_index]
            group.append(EvenPiece(t, end, price, rate, best_index))
            sold += rate * (end - t)
            t = end
        pieces.append(tuple(group))
    return EvenAbsorption(tuple(pieces), schedule.last)


def projected_revenue(state: PlannerState, profile: Profile, n_groups: int, tau: float) -> float:
    return state.total_revenue + sum(profile.revenue(i, state.t, tau) for i in range(n_groups))


def detect_burdensome(
    state: PlannerState,
    schedule: ConstraintSchedule,
    profile: Profile,
    rtol: float = DETECT_RTOL,
) -> list[int]:
    """Indices of pending revenue floors the profile would miss."""
    burdensome = []
    for j, floor in schedule.revenue_targets(after=state.t + _TIME_EPS):
        reached = projected_revenue(state, profile, schedule.n_groups, schedule.times[j])
        if reached < floor - rtol * max(1.0, abs(floor)):
            burdensome.append(j)
    return burdensome


def most_stringent(
    state: PlannerState,
    schedule: ConstraintSchedule,
    profile: Profile,
    burdensome: Sequence[int],
) -> tuple[int, float]:
    """
    The burdensome floor needing the highest extra revenue rate (earliest on
    ties) and the aggregate revenue rate required to meet it.
    """
    if not burdensome:
        raise ValueError("no burdensome floor to choose from")
    best, best_gap = None, -np.inf
    for j in burdensome:
        tau, floor = schedule.times[j], schedule.revenue_floors[j]
        gap = (floor - projected_revenue(state, profile, schedule.n_groups, tau)) / (tau - state.t)
        if gap > best_gap:
            best, best_gap = j, gap
    tau = schedule.times[best]
    required = (schedule.revenue_floors[best] - state.total_revenue) / (tau - state.t)
    return best, required


def step_end(schedule: ConstraintSchedule, profile: Profile, j_star: int) -> float:
    pins = [profile.pinned(i) for i in range(schedule.n_groups)]
    return min([schedule.times[j_star]] + [schedule.times[j] for j in pins if j is not None])


def infeasible_final_floor(schedule: ConstraintSchedule, j_star: int) -> InfeasibleScenarioError:
    return InfeasibleScenarioError(
        f"revenue floor at the final time (j={j_star}) exceeds the revenue of even absorption, "
        "which is the most any policy selling exactly the final sales can earn",
        index=j_star,
    )


def plan(
    schedule: ConstraintSchedule,
    models: Sequence[DemandModel],
    method: DistributionMethod = DistributionMethod.HEADROOM,
    state: Optional[PlannerState] = None,
    n_points: int = 1000,
) -> PlanResult:
    """
    Piecewise-constant policy from `state` (default: time 0, nothing sold) to T.

    Demand is planned with the laws observed at the start time.

    Raises:
        InfeasibleScenarioError, InfeasibleTargetError: with the step index attached.
    """
    state = state or PlannerState.initial(schedule.n_groups)
    start = state
    models = [model.frozen_at(state.t) for model in models]
    laws = [model.params_at(state.t) for model in models]
    segments = [[] for _ in models]
    steps, allocations = [], []
    m = 0
    log.info(f"Planning from t={state.t:g} with {len(models)} groups ({DistributionMethod(method).value})")

    while state.t < schedule.horizon - _TIME_EPS:
        try:
            even = even_absorption_prices(state, schedule, models)
            burdensome = detect_burdensome(state, schedule, even)
            if not burdensome:
                for i, group in enumerate(even.pieces):
                    segments[i].extend(PriceSegment(p.start, p.end, p.price) for p in group)
                steps.append(PlanStep(m, state.t, schedule.horizon, None))
                log.info(f"Step {m}: no burdensome floor from t={state.t:g}, even prices {rounded(even.prices)} to T")
                state = state.advanced(
                    schedule.horizon,
                    [sum(p.rate * (p.end - p.start) for p in group) for group in even.pieces],
                    [even.revenue(i, state.t, schedule.horizon) for i in range(len(models))],
                )
                break

            j_star, required = most_stringent(state, schedule, even, burdensome)
            if j_star == schedule.last:
                raise infeasible_final_floor(schedule, j_star)
            tau = schedule.times[j_star]
            dt = tau - state.t
            end = step_end(schedule, even, j_star)
            pinned = [even.pinned(i) is not None for i in range(len(models))]
            expected = [even.revenue(i, state.t, tau) for i in range(len(models))]
            shortfall = schedule.revenue_floors[j_star] - state.total_revenue - sum(expected)
            if all(pinned):
                raise InfeasibleScenarioError(
                    f"every group is held by a sales floor; revenue floor j={j_star} short by {shortfall:.6g}",
                    index=j_star,
                )
            data = AllocationInput(
                expected=tuple(expected),
                max_possible=tuple(
                    exp if pin else max(exp, max_revenue_rate(model, state.t) * dt)
                    for exp, pin, model in zip(expected, pinned, models)
                ),
                current_revenue=state.revenue,
                shortfall=max(shortfall, 0.0),
                interval=dt,
            )
            allocation = allocate(method, data)
            prices = [
                even.prices[i] if pinned[i] or allocation.shares[i] <= 0
                else solve_price_for_revenue_rate(models[i], state.t, allocation.target_rates[i], even.prices[i])
                for i in range(len(models))
            ]
            log.info(
                f"Step {m}: burdensome {burdensome}, most stringent j={j_star} "
                f"(rate {required:.6g}), prices {rounded(prices)} on [{state.t:g}, {end:g})"
            )
            for i, price in enumerate(prices):
                segments[i].append(PriceSegment(state.t, end, price))
            rates = [law.rate(p) for law, p in zip(laws, prices)]
            steps.append(PlanStep(m, state.t, end, j_star, tuple(burdensome)))
            allocations.append((state.t, allocation))
            state = state.advanced(
                end,
                [r * (end - state.t) for r in rates],
                [p * r * (end - state.t) for p, r in zip(prices, rates)],
            )
        except PricingError as err:
            log.error(f"Planning failed at step {m}: {err}")
            raise err.at_step(m)
        m += 1

    policy = PricingPolicy(tuple(tuple(_merge(group)) for group in segments))
    grid = output_grid(start.t, schedule.horizon, n_points, list(schedule.times) + policy.all_breakpoints())
    trajectory = integrate_policy(policy, models, grid, sales0=start.sold, revenue0=start.revenue)
    log.success(f"Planned {len(steps)} steps, predicted revenue {state.total_revenue:.6g}")
    return PlanResult(policy, trajectory, tuple(steps), tuple(allocations), state)


def _merge(segments: list[PriceSegment]) -> list[PriceSegment]:
    """Join neighbouring segments holding the same price."""
    merged = []
    for seg in segments:
        if merged and isinstance(seg, PriceSegment) and isinstance(merged[-1], PriceSegment) \
                and merged[-1].price == seg.price:
            merged[-1] = replace(merged[-1], end=seg.end)
        else:
            merged.append(seg)
    return merged
