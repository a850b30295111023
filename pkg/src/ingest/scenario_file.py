"""
Scenario files: JSON documents mirroring `Scenario` field for field.

Unknown keys are rejected and demand coefficients have no defaults; see
docs/scenario.md for the format.
"""
import json
import math
from pathlib import Path
from typing import Any, Optional

from src.constraints.constraints import ConstraintSchedule, validate
from src.demand.demand import DemandModel, LinearDemandParams
from src.distribution.distribution import DistributionMethod
from src.planner.time_value import ConstantFn, ExponentialFn, TableFn, TimeValueSpec
from src.simulator.scenario import Event, GroupSpec, PlannerKind, Scenario
from src.utils.errors import ScenarioFileError
from src.utils.logger import logger

log = logger.bind(step="scenario-file")

SCHEMA_VERSION = 1

_TOP_REQUIRED = {"schema_version", "times", "groups"}
_TOP_OPTIONAL = {
    "name", "revenue_floors", "time_value", "events", "planner", "distribution",
    "output_step", "warmup_until", "replan_at_constraints",
}
_LAW_REQUIRED = {"a", "b", "scale"}
_LAW_OPTIONAL = {"cap", "price_lo", "price_hi"}
_GROUP_REQUIRED = _LAW_REQUIRED | {"initial_price", "final_sales"}
_GROUP_OPTIONAL = _LAW_OPTIONAL | {"name", "sales_floors"}
_LAW_DEFAULTS = {"cap": math.inf, "price_lo": 0.0, "price_hi": math.inf}


class _Reader:
    """Checks keys of one JSON object and reads typed values, naming fields by their path."""

    def __init__(self, path: str, obj: Any, where: str, required: set[str], optional: set[str]):
        self.path = path
        self.where = where
        if not isinstance(obj, dict):
            self.fail(f"{where or 'document'} must be an object")
        for key in sorted(required):
            if key not in obj:
                self.fail(f"{self.name(key)} missing")
        for key in sorted(set(obj) - required - optional):
            self.fail(f"{self.name(key)} unknown key")
        self.obj = obj

    def name(self, key: str) -> str:
        return f"{self.where}.{key}" if self.where else key

    def fail(self, message: str):
        raise ScenarioFileError(self.path, message)

    def has(self, key: str) -> bool:
        return self.obj.get(key) is not None

    def number(self, key: str, default: Optional[float] = None) -> float:
        value = self.obj.get(key)
        if value is None:
            if default is None:
                self.fail(f"{self.name(key)} missing")
            return default
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(f"{self.name(key)} must be a number, got {value!r}")
        return float(value)

    def integer(self, key: str) -> int:
        value = self.obj.get(key)
        if isinstance(value, bool) or not isinstance(value, int):
            self.fail(f"{self.name(key)} must be an integer, got {value!r}")
        return value

    def text(self, key: str, default: str = "") -> str:
        value = self.obj.get(key, default)
        if not isinstance(value, str):
            self.fail(f"{self.name(key)} must be a string, got {value!r}")
        return value

    def flag(self, key: str, default: bool = False) -> bool:
        value = self.obj.get(key, default)
        if not isinstance(value, bool):
            self.fail(f"{self.name(key)} must be true or false, got {value!r}")
        return value

    def items(self, key: str) -> list:
        value = self.obj.get(key, [])
        if not isinstance(value, list):
            self.fail(f"{self.name(key)} must be a list")
        return value

    def optional_numbers(self, key: str, length: int) -> tuple[Optional[float], ...]:
        """List aligned with the schedule times, null marking an absent floor."""
        if not self.has(key):
            return (None,) * length
        values = self.items(key)
        if len(values) != length:
            self.fail(f"{self.name(key)} has {len(values)} entries, expected {length} (one per time)")
        for n, v in enumerate(values):
            if v is not None and (isinstance(v, bool) or not isinstance(v, (int, float))):
                self.fail(f"{self.name(key)}[{n}] must be a number or null, got {v!r}")
        return tuple(None if v is None else float(v) for v in values)


def _law(reader: _Reader, base: Optional[LinearDemandParams] = None) -> LinearDemandParams:
    fields = {}
    for key in sorted(_LAW_REQUIRED | _LAW_OPTIONAL):
        if base is not None:
            fields[key] = reader.number(key, getattr(base, key)) if reader.has(key) else getattr(base, key)
        elif key in _LAW_REQUIRED:
            fields[key] = reader.number(key)
        else:
            fields[key] = reader.number(key, _LAW_DEFAULTS[key])
    try:
        return LinearDemandParams(**fields)
    except ValueError as err:
        reader.fail(f"{reader.where}: {err}")


def _time_fn(path: str, obj: Any, where: str):
    head = _Reader(path, obj, where, {"kind"}, {"value", "rate", "initial", "times", "values"})
    kind = head.text("kind")
    if kind == "constant":
        _Reader(path, obj, where, {"kind", "value"}, set())
        return ConstantFn(head.number("value"))
    if kind == "exponential":
        _Reader(path, obj, where, {"kind", "rate"}, {"initial"})
        return ExponentialFn(head.number("rate"), head.number("initial", 1.0))
    if kind == "table":
        _Reader(path, obj, where, {"kind", "times", "values"}, set())
        try:
            return TableFn(tuple(float(t) for t in head.items("times")), tuple(float(v) for v in head.items("values")))
        except (TypeError, ValueError) as err:
            head.fail(f"{where}: {err}")
    head.fail(f"{where}.kind must be constant, exponential or table, got {kind!r}")


def _time_value(path: str, obj: Any) -> TimeValueSpec:
    reader = _Reader(path, obj, "time_value", set(), {"phi", "kappa"})
    phi = _time_fn(path, obj["phi"], "time_value.phi") if reader.has("phi") else ConstantFn()
    kappa = _time_fn(path, obj["kappa"], "time_value.kappa") if reader.has("kappa") else ConstantFn()
    try:
        return TimeValueSpec(phi, kappa)
    except ValueError as err:
        reader.fail(f"time_value: {err}")


def parse_scenario(document: Any, path: str = "<scenario>") -> Scenario:
    """Build a `Scenario` from a decoded scenario document."""
    top = _Reader(path, document, "", _TOP_REQUIRED, _TOP_OPTIONAL)
    version = top.integer("schema_version")
    if version != SCHEMA_VERSION:
        top.fail(f"schema_version {version} not supported (expected {SCHEMA_VERSION})")

    times = top.items("times")
    if len(times) < 2 or any(isinstance(t, bool) or not isinstance(t, (int, float)) for t in times):
        top.fail("times must list at least two numbers")
    times = tuple(float(t) for t in times)
    n_times = len(times)

    groups, final_sales, sales_floors = [], [], []
    raw_groups = top.items("groups")
    if not raw_groups:
        top.fail("groups must list at least one group")
    for i, obj in enumerate(raw_groups):
        g = _Reader(path, obj, f"groups[{i}]", _GROUP_REQUIRED, _GROUP_OPTIONAL)
        params = _law(g)
        final_sales.append(g.number("final_sales"))
        sales_floors.append(g.optional_numbers("sales_floors", n_times))
        groups.append((g.text("name"), params, g.number("initial_price")))

    schedule = ConstraintSchedule(
        times, tuple(final_sales), tuple(sales_floors), top.optional_numbers("revenue_floors", n_times)
    )
    violations = validate(schedule)
    if violations:
        top.fail("; ".join(f"{v.field}: {v.message}" for v in violations))
    horizon = times[-1]

    events, laws = [], [params for _, params, _ in groups]
    for n, obj in enumerate(top.items("events")):
        e = _Reader(path, obj, f"events[{n}]", {"time", "group"}, _LAW_REQUIRED | _LAW_OPTIONAL)
        group = e.integer("group")
        if not 0 <= group < len(groups):
            e.fail(f"events[{n}].group {group} does not name a group")
        laws[group] = _law(e, base=laws[group])
        events.append(Event(e.number("time"), group, laws[group]))

    try:
        scenario = Scenario(
            horizon=horizon,
            groups=tuple(
                GroupSpec(DemandModel.constant(params, horizon), price, name) for name, params, price in groups
            ),
            schedule=schedule,
            time_value=_time_value(path, document["time_value"]) if top.has("time_value") else TimeValueSpec(),
            events=tuple(events),
            planner=PlannerKind(top.text("planner", PlannerKind.BASE.value)),
            distribution=DistributionMethod(top.text("distribution", DistributionMethod.HEADROOM.value)),
            output_step=top.number("output_step") if top.has("output_step") else None,
            warmup_until=top.number("warmup_until", 0.0),
            replan_at_constraints=top.flag("replan_at_constraints"),
            name=top.text("name"),
        )
    except ValueError as err:
        top.fail(str(err))
    log.info(f"Loaded scenario '{scenario.name}' from {path}: {len(groups)} groups, {n_times} times, "
             f"{len(events)} events")
    return scenario


def load_scenario(path: str | Path) -> Scenario:
    """
    Read and parse a scenario file.

    Raises:
        ScenarioFileError: unreadable file, malformed JSON (with line and
            column) or invalid content.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ScenarioFileError(str(path), f"cannot read file: {err.strerror}") from err
    try:
        document = json.loads(text)
    except json.JSONDecodeError as err:
        raise ScenarioFileError(str(path), err.msg, line=err.lineno, column=err.colno) from err
    return parse_scenario(document, str(path))


def with_overrides(
    scenario: Scenario,
    planner: Optional[str] = None,
    distribution: Optional[str] = None,
) -> Scenario:
    """Scenario with planner and distribution method replaced where given."""
    if planner is not None:
        scenario = scenario.with_planner(PlannerKind(planner))
    if distribution is not None:
        scenario = scenario.with_method(DistributionMethod(distribution))
    return scenario
