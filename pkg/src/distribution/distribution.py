"""
Splitting an aggregate revenue shortfall into per-group revenue targets.

Two methods are available:
  - headroom: weights proportional to each group's gap between its maximum
    achievable revenue and its even-absorption revenue over the interval;
  - revshare: weights proportional to each group's revenue earned so far.
"""
from dataclasses import dataclass
from enum import Enum

from src.utils.errors import InfeasibleTargetError
from src.utils.logger import logger
from src.utils.numerics import rounded

log = logger.bind(step="distribution")

_SUM_RTOL = 1e-12


class DistributionMethod(str, Enum):
    HEADROOM = "headroom"
    REVSHARE = "revshare"


@dataclass(frozen=True)
class AllocationInput:
    expected: tuple[float, ...]
    max_possible: tuple[float, ...]
    current_revenue: tuple[float, ...]
    shortfall: float
    interval: float

    def __post_init__(self):
        n = len(self.expected)
        if n == 0 or len(self.max_possible) != n or len(self.current_revenue) != n:
            raise ValueError("allocation input needs one entry per group in every field")
        if not self.interval > 0:
            raise ValueError(f"interval length must be positive, got {self.interval}")
        if self.shortfall < 0:
            raise ValueError(f"shortfall must be nonnegative, got {self.shortfall}")
        for i, (exp, top) in enumerate(zip(self.expected, self.max_possible)):
            if top < exp - 1e-9 * max(1.0, abs(exp)):
                raise ValueError(f"group {i}: max possible revenue {top} below expected {exp}")

    @property
    def headrooms(self) -> list[float]:
        return [max(0.0, top - exp) for exp, top in zip(self.expected, self.max_possible)]


@dataclass(frozen=True)
class Allocation:
    weights: tuple[float, ...]
    shares: tuple[float, ...]
    target_rates: tuple[float, ...]
    fallback: bool = False


def _build(data: AllocationInput, weights: list[float], fallback: bool = False) -> Allocation:
    shares = [w * data.shortfall for w in weights]
    rates = [(exp + share) / data.interval for exp, share in zip(data.expected, shares)]
    return Allocation(tuple(weights), tuple(shares), tuple(rates), fallback)


def _equal_split(data: AllocationInput, eligible: list[bool]) -> Allocation:
    n_eligible = sum(eligible)
    weights = [1.0 / n_eligible if ok else 0.0 for ok in eligible]
    return _build(data, weights, fallback=True)


def allocate_headroom(data: AllocationInput) -> Allocation:
    """
    Weights proportional to headroom (max possible minus expected revenue).

    Raises:
        InfeasibleTargetError: the shortfall exceeds the total headroom.
    """
    headrooms = data.headrooms
    total = sum(headrooms)
    if data.shortfall > total * (1 + _SUM_RTOL) + _SUM_RTOL:
        raise InfeasibleTargetError("revenue shortfall exceeds the total headroom", data.shortfall - total)
    if total <= 0:
        # shortfall is zero here
        return _build(data, [0.0] * len(headrooms))
    allocation = _build(data, [h / total for h in headrooms])
    log.debug(f"headroom weights {rounded(allocation.weights)} for shortfall {data.shortfall:.6g}")
    return allocation


def allocate_revenue_share(data: AllocationInput) -> Allocation:
    """
    Weights proportional to the revenue each group has earned so far,
    normalised over the groups that can still raise their revenue.

    Falls back to an equal split (flagged) when those groups have earned nothing yet.
    """
    eligible = [h > 0 for h in data.headrooms]
    if not any(eligible):
        eligible = [True] * len(eligible)
    earned = [r if ok else 0.0 for r, ok in zip(data.current_revenue, eligible)]
    total = sum(earned)
    if total <= 0:
        log.warning("No revenue earned yet: revenue-share distribution falls back to an equal split")
        return _equal_split(data, eligible)
    allocation = _build(data, [r / total for r in earned])
    log.debug(f"revenue-share weights {rounded(allocation.weights)} for shortfall {data.shortfall:.6g}")
    return allocation


def allocate(method: DistributionMethod, data: AllocationInput) -> Allocation:
    if DistributionMethod(method) is DistributionMethod.HEADROOM:
        return allocate_headroom(data)
    return allocate_revenue_share(data)
