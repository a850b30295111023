import pytest

from src.ingest.scenario_file import load_scenario
from src.utils.logger import logger
from tests.builders import SCENARIOS, constant_model


@pytest.fixture
def single_group():
    """a=300, b=2 over T=10: even absorption of 1000 units is price 100."""
    return constant_model(300, 2)


@pytest.fixture
def two_groups():
    return [constant_model(300, 2), constant_model(220, 1)]


@pytest.fixture
def demand_change_scenario():
    return load_scenario(SCENARIOS / "demand_change.json")


@pytest.fixture
def comparison_scenario():
    return load_scenario(SCENARIOS / "distribution_comparison.json")


@pytest.fixture
def log_messages():
    """Every log message emitted while the test runs, as plain text."""
    messages = []
    sink = logger.add(lambda msg: messages.append(msg.record["message"]), level="DEBUG")
    yield messages
    logger.remove(sink)
