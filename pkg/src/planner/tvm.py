"""
Planner with a generalized time value zeta(t) = phi(t) * kappa(t).

For linear demand v = s * (a - b * p) the optimal price curve of a group on
an interval with a fixed constant q is

    p(t) = (a / b - q / zeta(t)) / 2

and, writing I = integral of dt / zeta and Z = integral of zeta dt,

    sales    = s / 2 * (a * dt + b * q * I)
    revenue  = s / 4 * (a^2 * Z / b - b * q^2 * I)     (discounted)

The planner follows the base planner's loop with constants in place of
constant prices. With zeta identically 1 both planners coincide.
"""
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from src.constraints.constraints import ConstraintSchedule
from src.demand.demand import DemandModel, LinearDemandParams, eval_rates
from src.distribution.distribution import Allocation, AllocationInput, DistributionMethod, allocate
from src.planner.base import (
    DETECT_RTOL,
    PlannerState,
    PlanResult,
    PlanStep,
    check_remaining,
    infeasible_final_floor,
    step_end,
    detect_burdensome,
    pending_targets,
)
from src.planner.policy import CurveSegment, PricingPolicy, integrate_policy, output_grid
from src.planner.time_value import TimeValueSpec, inv_phi_integral, zeta_integral
from src.utils.errors import (
    BranchViolationError,
    InfeasibleScenarioError,
    InfeasibleTargetError,
    NonConvergenceError,
    PricingError,
)
from src.utils.logger import logger
from src.utils.numerics import QUAD_RTOL, ROOT_MAXITER, ROOT_XTOL, bracketed_root, rounded

log = logger.bind(step="planner-tvm")

STATIONARITY_TOL = 1e-8
_TIME_EPS = 1e-12


@dataclass(frozen=True)
class TvmConstants:
    q: tuple[float, ...]
    start: float
    end: float


def _require_demand(params: LinearDemandParams) -> None:
    if params.scale <= 0:
        raise BranchViolationError("closed-form curve needs a positive demand scale")


def curve_sales(params: LinearDemandParams, q: float, dt: float, inv_integral: float) -> float:
    return params.scale / 2 * (params.a * dt + params.b * q * inv_integral)


def curve_revenue(params: LinearDemandParams, q: float, zeta_int: float, inv_integral: float) -> float:
    """Discounted revenue of the curve with constant q."""
    a, b, s = params.a, params.b, params.scale
    return s / 4 * (a * a * zeta_int / b - b * q * q * inv_integral)


def constant_for_sales(params: LinearDemandParams, owed: float, dt: float, inv_integral: float) -> float:
    """q selling exactly `owed` units over an interval of length dt."""
    _require_demand(params)
    return (2 * owed / params.scale - params.a * dt) / (params.b * inv_integral)


def check_branch(segment: CurveSegment, params: LinearDemandParams, n_points: int = 1000) -> None:
    """
    Raises:
        BranchViolationError: the curve leaves the price bounds or the unclamped demand branch.
    """
    t = np.linspace(segment.start, segment.end, n_points)
    prices = segment.prices(t)
    lo = max(params.price_lo, params.cap_price)
    hi = min(params.price_hi, params.choke_price)
    slack = 1e-9 * max(1.0, float(np.max(np.abs(prices))))
    if np.any(prices < lo - slack) or np.any(prices > hi + slack):
        raise BranchViolationError(
            f"price curve on [{segment.start:g}, {segment.end:g}) spans "
            f"[{prices.min():.6g}, {prices.max():.6g}], admissible [{lo:.6g}, {hi:.6g}]"
        )


def closed_form_policy(
    spec: TimeValueSpec,
    params: LinearDemandParams,
    owed: float,
    t_a: float,
    t_b: float,
    n_points: int = 1000,
    rtol: float = QUAD_RTOL,
) -> tuple[float, CurveSegment]:
    """Constant q and price curve selling `owed` units over [t_a, t_b]."""
    inv_integral = inv_phi_integral(spec, t_a, t_b, rtol=rtol)
    q = constant_for_sales(params, owed, t_b - t_a, inv_integral)
    segment = CurveSegment(t_a, t_b, q, params.a, params.b, spec)
    check_branch(segment, params, n_points)
    return q, segment


def verify_stationarity(
    spec: TimeValueSpec,
    params: LinearDemandParams,
    segment: CurveSegment,
    q: Optional[float] = None,
    n_points: int = 1000,
) -> float:
    """
    Max over a time grid of |zeta v + zeta p v' + q v'|, normalised by
    zeta(0) * scale * |a|. Closed-form curves give (numerically) zero.
    """
    q = segment.q if q is None else q
    t = np.linspace(segment.start, segment.end, n_points)
    zeta = spec.zeta(t)
    prices = segment.prices(t)
    rates = eval_rates(params, prices)
    raw = params.scale * (params.a - params.b * prices)
    slope = np.where((raw >= 0) & (raw <= params.cap), -params.scale * params.b, 0.0)
    residual = np.abs(zeta * rates + zeta * prices * slope + q * slope)
    return float(residual.max() / (spec.zeta(0.0) * params.scale * abs(params.a)))


@dataclass(frozen=True)
class CurvePiece:
    start: float
    end: float
    q: float
    target_index: int


@dataclass(frozen=True)
class TvmProfile:
    """Curves with per-piece constants for every group, from the state time to T."""

    pieces: tuple[tuple[CurvePiece, ...], ...]
    laws: tuple[LinearDemandParams, ...]
    spec: TimeValueSpec
    last: int
    rtol: float = QUAD_RTOL

    @property
    def constants(self) -> tuple[float, ...]:
        return tuple(group[0].q for group in self.pieces)

    def pinned(self, group: int) -> Optional[int]:
        first = self.pieces[group][0]
        return first.target_index if first.target_index != self.last else None

    def revenue(self, group: int, t0: float, t1: float) -> float:
        total = 0.0
        for piece in self.pieces[group]:
            lo, hi = max(piece.start, t0), min(piece.end, t1)
            if hi > lo:
                total += held_revenue(self.spec, self.laws[group], piece.q, lo, hi, self.rtol)
        return total

    def sales(self, group: int, t0: float, t1: float) -> float:
        total = 0.0
        for piece in self.pieces[group]:
            lo, hi = max(piece.start, t0), min(piece.end, t1)
            if hi > lo:
                inv = inv_phi_integral(self.spec, lo, hi, rtol=self.rtol)
                total += curve_sales(self.laws[group], piece.q, hi - lo, inv)
        return total


def held_revenue(spec: TimeValueSpec, params: LinearDemandParams, q: float, t0: float, t1: float,
                 rtol: float = QUAD_RTOL) -> float:
    """Discounted revenue of one group holding constant q on [t0, t1]."""
    return curve_revenue(params, q, zeta_integral(spec, t0, t1, rtol), inv_phi_integral(spec, t0, t1, rtol))


def even_constants(
    state: PlannerState,
    schedule: ConstraintSchedule,
    laws: Sequence[LinearDemandParams],
    spec: TimeValueSpec,
    rtol: float = QUAD_RTOL,
) -> TvmProfile:
    """
    Closed-form profile per group meeting the pending sales floors and the
    final sales: each piece takes the largest constant demanded by a pending
    target and lasts until that target's time.
    """
    pieces = []
    for i, params in enumerate(laws):
        check_remaining(schedule, i, state.sold[i])
        t, sold, group = state.t, state.sold[i], []
        while t < schedule.horizon - _TIME_EPS:
            best_index, best_q, best_inv = None, -np.inf, None
            for j, owed in pending_targets(schedule, i, t, sold):
                inv = inv_phi_integral(spec, t, schedule.times[j], rtol)
                q = constant_for_sales(params, owed, schedule.times[j] - t, inv)
                if q > best_q:
                    best_index, best_q, best_inv = j, q, inv
            end = schedule.times[best_index]
            group.append(CurvePiece(t, end, best_q, best_index))
            sold += curve_sales(params, best_q, end - t, best_inv)
            t = end
        pieces.append(tuple(group))
    return TvmProfile(tuple(pieces), tuple(laws), spec, schedule.last, rtol)


def recalc_constants_for_floor(
    spec: TimeValueSpec,
    laws: Sequence[LinearDemandParams],
    state: PlannerState,
    profile: TvmProfile,
    schedule: ConstraintSchedule,
    index: int,
    method: DistributionMethod = DistributionMethod.HEADROOM,
    xtol: float = ROOT_XTOL,
    maxiter: int = ROOT_MAXITER,
) -> tuple[TvmConstants, Optional[Allocation]]:
    """
    Constants meeting the revenue floor at schedule index `index` with equality.

    The revenue gap left by the profile is split across groups by the
    distribution method; each group's constant is then found by bracketed
    root finding between its profile constant and 0 (the revenue-maximising
    curve). Groups held by an intermediate sales floor keep their constant.

    Raises:
        InfeasibleTargetError: a group's target exceeds its discounted revenue capacity.
    """
    tau, floor = schedule.times[index], schedule.revenue_floors[index]
    dt = tau - state.t
    n = len(laws)
    zeta_int = zeta_integral(spec, state.t, tau, profile.rtol)
    inv_int = inv_phi_integral(spec, state.t, tau, profile.rtol)
    even_q = profile.constants
    pinned = [profile.pinned(i) is not None for i in range(n)]
    expected = [profile.revenue(i, state.t, tau) for i in range(n)]
    shortfall = floor - state.total_revenue - sum(expected)
    if shortfall <= 0:
        return TvmConstants(even_q, state.t, tau), None
    if all(pinned):
        raise InfeasibleScenarioError(
            f"every group is held by a sales floor; revenue floor j={index} short by {shortfall:.6g}", index=index
        )

    capacity = [curve_revenue(params, 0.0, zeta_int, inv_int) for params in laws]
    data = AllocationInput(
        expected=tuple(expected),
        max_possible=tuple(exp if pin else max(exp, cap) for exp, pin, cap in zip(expected, pinned, capacity)),
        current_revenue=state.revenue,
        shortfall=shortfall,
        interval=dt,
    )
    allocation = allocate(method, data)

    constants = []
    for i, params in enumerate(laws):
        if pinned[i] or allocation.shares[i] <= 0:
            constants.append(even_q[i])
            continue
        target = expected[i] + allocation.shares[i]
        if target > capacity[i] * (1 + 1e-12):
            raise InfeasibleTargetError(
                f"group {i}: discounted revenue target above capacity", shortfall=target - capacity[i]
            )
        if target >= capacity[i] * (1 - 1e-12):
            constants.append(0.0)
            continue
        constants.append(bracketed_root(
            lambda q, p=params: curve_revenue(p, q, zeta_int, inv_int) - target,
            even_q[i], 0.0, xtol=xtol, maxiter=maxiter,
        ))
    log.debug(f"constants for floor j={index}: {rounded(constants)} (weights {rounded(allocation.weights)})")
    return TvmConstants(tuple(constants), state.t, tau), allocation


def _unmet_floors(
    state: PlannerState,
    schedule: ConstraintSchedule,
    profile: TvmProfile,
    constants: TvmConstants,
    rtol: float = DETECT_RTOL,
) -> list[int]:
    """Pending floors missed when the new constants are held to T (held groups follow the profile)."""
    unmet = []
    for j, floor in schedule.revenue_targets(after=state.t + _TIME_EPS):
        tau = schedule.times[j]
        reached = state.total_revenue
        for i, params in enumerate(profile.laws):
            if profile.pinned(i) is not None:
                reached += profile.revenue(i, state.t, tau)
            else:
                reached += held_revenue(profile.spec, params, constants.q[i], state.t, tau, profile.rtol)
        if reached < floor - rtol * max(1.0, abs(floor)):
            unmet.append(j)
    return unmet


def plan_tvm(
    schedule: ConstraintSchedule,
    models: Sequence[DemandModel],
    spec: TimeValueSpec,
    method: DistributionMethod = DistributionMethod.HEADROOM,
    state: Optional[PlannerState] = None,
    n_points: int = 1000,
    rtol: float = QUAD_RTOL,
) -> PlanResult:
    """
    Closed-form price curves from `state` to T meeting every floor, with
    discounted revenue accumulating on the predicted trajectory.

    Raises:
        InfeasibleScenarioError, InfeasibleTargetError, BranchViolationError,
        NonConvergenceError: with the step index attached.
    """
    state = state or PlannerState.initial(schedule.n_groups)
    start = state
    models = [model.frozen_at(state.t) for model in models]
    laws = [model.params_at(state.t) for model in models]
    n = len(laws)
    segments = [[] for _ in laws]
    steps, allocations, residuals = [], [], []
    m = 0
    log.info(f"Planning with time value from t={state.t:g} ({DistributionMethod(method).value})")

    def emit(group: int, q: float, t0: float, t1: float) -> None:
        segment = CurveSegment(t0, t1, q, laws[group].a, laws[group].b, spec)
        check_branch(segment, laws[group], n_points)
        residual = verify_stationarity(spec, laws[group], segment, n_points=n_points)
        if residual > STATIONARITY_TOL:
            log.warning(f"group {group}: stationarity residual {residual:.3g} on [{t0:g}, {t1:g})")
        residuals.append(residual)
        segments[group].append(segment)

    while state.t < schedule.horizon - _TIME_EPS:
        try:
            profile = even_constants(state, schedule, laws, spec, rtol)
            burdensome = detect_burdensome(state, schedule, profile)
            if not burdensome:
                for i, group in enumerate(profile.pieces):
                    for piece in group:
                        emit(i, piece.q, piece.start, piece.end)
                steps.append(PlanStep(m, state.t, schedule.horizon, None))
                log.info(f"Step {m}: no burdensome floor from t={state.t:g}, constants {rounded(profile.constants)} to T")
                state = state.advanced(
                    schedule.horizon,
                    [profile.sales(i, state.t, schedule.horizon) for i in range(n)],
                    [profile.revenue(i, state.t, schedule.horizon) for i in range(n)],
                )
                break

            index = burdensome[0]
            for _ in range(schedule.last):
                if index == schedule.last:
                    raise infeasible_final_floor(schedule, index)
                constants, allocation = recalc_constants_for_floor(
                    spec, laws, state, profile, schedule, index, method
                )
                unmet = _unmet_floors(state, schedule, profile, constants)
                if not unmet:
                    break
                log.debug(f"Step {m}: constants for j={index} leave floors {unmet} unmet")
                index = unmet[0]
            else:
                raise NonConvergenceError(
                    f"constant recalculation did not meet all floors within {schedule.last} passes"
                )

            end = step_end(schedule, profile, index)
            for i in range(n):
                emit(i, constants.q[i], state.t, end)
            log.info(f"Step {m}: burdensome {burdensome}, floor j={index} met with constants "
                     f"{rounded(constants.q)} on [{state.t:g}, {end:g})")
            steps.append(PlanStep(m, state.t, end, index, tuple(burdensome)))
            if allocation is not None:
                allocations.append((state.t, allocation))
            inv = inv_phi_integral(spec, state.t, end, rtol)
            state = state.advanced(
                end,
                [curve_sales(laws[i], constants.q[i], end - state.t, inv) for i in range(n)],
                [held_revenue(spec, laws[i], constants.q[i], state.t, end, rtol) for i in range(n)],
            )
        except PricingError as err:
            log.error(f"Planning failed at step {m}: {err}")
            raise err.at_step(m)
        m += 1

    policy = PricingPolicy(tuple(tuple(group) for group in segments))
    grid = output_grid(start.t, schedule.horizon, n_points, list(schedule.times) + policy.all_breakpoints())
    trajectory = integrate_policy(policy, models, grid, time_value=spec, sales0=start.sold, revenue0=start.revenue)
    log.success(f"Planned {len(steps)} steps, predicted discounted revenue {state.total_revenue:.6g}")
    return PlanResult(policy, trajectory, tuple(steps), tuple(allocations), state, tuple(residuals))
