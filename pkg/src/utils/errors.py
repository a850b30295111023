"""Exception hierarchy shared by the pricing engine."""
from typing import Optional


class PricingError(Exception):
    """Base class for every error raised by the engine."""

    step: Optional[int] = None

    def at_step(self, step: int) -> "PricingError":
        """Attach the planning step index and return self (for `raise err.at_step(m)`)."""
        self.step = step
        return self

    def __str__(self) -> str:
        message = super().__str__()
        return f"step {self.step}: {message}" if self.step is not None else message


class DemandDomainError(PricingError):
    """Demand evaluated outside its horizon."""


class InfeasibleRateError(PricingError):
    """Requested sales rate cannot be reached on the decreasing demand branch."""

    def __init__(self, rate: float, max_rate: float):
        super().__init__(f"sales rate {rate:.6g} unattainable (max {max_rate:.6g})")
        self.rate = rate
        self.max_rate = max_rate


class InfeasibleTargetError(PricingError):
    """Revenue target above what a group (or all groups) can earn."""

    def __init__(self, message: str, shortfall: float):
        super().__init__(f"{message} (shortfall {shortfall:.6g})")
        self.shortfall = shortfall


class InfeasibleScenarioError(PricingError):
    """A planner cannot meet a floor; names the group and the binding floor index."""

    def __init__(self, message: str, group: Optional[int] = None, index: Optional[int] = None):
        super().__init__(message)
        self.group = group
        self.index = index


class BranchViolationError(PricingError):
    """Closed-form price curve leaves the unclamped demand branch or the price bounds."""


class NonConvergenceError(PricingError):
    """Constant recalculation did not settle within its pass cap."""


class BudgetExceededError(PricingError):
    """Oracle enumeration larger than the allowed budget."""

    def __init__(self, required: int, budget: int):
        super().__init__(f"oracle needs {required} combinations, budget is {budget}")
        self.required = required
        self.budget = budget


class ScenarioFileError(PricingError):
    """Unreadable or invalid scenario file."""

    def __init__(self, path: str, message: str, line: Optional[int] = None, column: Optional[int] = None):
        location = f":{line}:{column}" if line is not None else ""
        super().__init__(f"{path}{location}: {message}")
        self.path = path
        self.line = line
        self.column = column
