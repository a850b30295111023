"""
End-to-end checks on seeded random instances and the bundled scenarios.
"""
import time
from dataclasses import replace

import numpy as np
import pytest

from src.cli.main import EXIT_OK, main
from src.constraints.constraints import check_feasibility_against
from src.demand.demand import DemandModel, LinearDemandParams
from src.distribution.distribution import DistributionMethod
from src.oracle.oracle import GridSpec, PriceGrid, best, oracle_gap
from src.planner.base import plan
from src.planner.time_value import ExponentialFn, TimeValueSpec, inv_phi_integral
from src.planner.tvm import closed_form_policy, plan_tvm
from src.simulator.scenario import GroupSpec, Scenario
from src.simulator.simulator import compare, distribution_report, run
from src.utils.logger import logger
from tests.builders import CONFIG, SCENARIOS, schedule

HORIZON = 10.0
TIMES = [0.0, 2.0, 4.0, 6.0, 8.0, 10.0]


def _random_groups(rng, k: int, rho_lo: float, rho_hi: float):
    """k groups with unit scale selling a fraction rho of their top rate: (models, final sales, even revenue rates)."""
    models, finals, revenue_rates = [], [], []
    for _ in range(k):
        a, b, rho = rng.uniform(100, 400), rng.uniform(0.5, 3), rng.uniform(rho_lo, rho_hi)
        rate = rho * a
        models.append(DemandModel.constant(LinearDemandParams(a, b), HORIZON))
        finals.append(rate * HORIZON)
        revenue_rates.append((a - rate) / b * rate)
    return models, finals, revenue_rates


def _floor_instance(rng):
    """Floor at t=2 slightly above even revenue; later floors well below it."""
    k = int(rng.integers(1, 4))
    models, finals, revenue_rates = _random_groups(rng, k, 0.6, 0.75)
    even_rate = sum(revenue_rates)
    floors = {1: (1 + rng.uniform(0.005, 0.03)) * TIMES[1] * even_rate}
    for j in (2, 3, 4):
        if rng.random() < 0.5:
            floors[j] = rng.uniform(0.3, 0.6) * TIMES[j] * even_rate
    return schedule(TIMES, finals, revenue_floors=floors), models


class TestNoFloors:
    def test_even_absorption_on_random_instances(self):
        rng = np.random.default_rng(20240101)
        for _ in range(50):
            k = int(rng.integers(1, 4))
            models, finals, _ = _random_groups(rng, k, 0.2, 0.8)
            times = np.linspace(0, HORIZON, int(rng.integers(2, 6)))
            sched = schedule(times, finals)

            started = time.perf_counter()
            result = plan(sched, models)
            assert time.perf_counter() - started < 1.0

            for i, model in enumerate(models):
                params = model.params_at(0)
                assert len(result.policy.segments[i]) == 1
                assert result.policy.price_at(i, 0) == pytest.approx((params.a - finals[i] / HORIZON) / params.b)
                assert result.trajectory.sales[i, -1] == pytest.approx(finals[i], abs=1e-6)


class TestBurdensomeFloors:
    def test_floors_met_and_prices_change_at_schedule_times(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            sched, models = _floor_instance(rng)
            result = plan(sched, models)
            assert set(result.policy.all_breakpoints()) <= set(sched.times)
            for step in result.steps:
                if step.selected is not None:
                    floor = sched.revenue_floors[step.selected]
                    reached = result.trajectory.revenue_at(sched.times[step.selected])
                    assert reached == pytest.approx(floor, rel=1e-6)
            assert check_feasibility_against(sched, result.trajectory) is None

    def test_flat_time_value_reproduces_the_base_planner(self):
        rng = np.random.default_rng(7)
        sample = np.linspace(0, HORIZON, 81)
        for _ in range(50):
            sched, models = _floor_instance(rng)
            base = plan(sched, models)
            tvm = plan_tvm(sched, models, TimeValueSpec())
            for i in range(len(models)):
                for t in sample:
                    assert tvm.policy.price_at(i, t) == pytest.approx(base.policy.price_at(i, t), abs=1e-6)


def test_discounted_closed_form():
    spec = TimeValueSpec(phi=ExponentialFn(-0.1))
    q, segment = closed_form_policy(spec, LinearDemandParams(300, 2), 1000, 0, 10)
    assert inv_phi_integral(spec, 0, 10) == pytest.approx(17.18282, abs=1e-5)
    assert q == pytest.approx(-29.0988, abs=1e-4)
    assert float(segment.prices(0.0)) == pytest.approx(89.549, abs=1e-3)
    assert float(segment.prices(10.0)) == pytest.approx(114.549, abs=1e-3)


class TestOracle:
    def test_planner_never_beats_the_grid_optimum(self):
        rng = np.random.default_rng(11)
        gaps = []
        started = time.perf_counter()
        for _ in range(20):
            models, finals, revenue_rates = _random_groups(rng, 2, 0.62, 0.75)
            floor = (1 + rng.uniform(0.002, 0.015)) * 5.0 * sum(revenue_rates)
            sched = schedule([0, 5, 10], finals, revenue_floors={1: floor})
            planned = plan(sched, models)
            grid = GridSpec(tuple(PriceGrid(0, m.params_at(0).choke_price, 25) for m in models))
            result = best(sched, models, grid)
            assert result.feasible
            assert planned.final_revenue <= result.revenue * (1 + 1e-9)
            gaps.append(oracle_gap(planned.final_revenue, result.revenue))
        assert time.perf_counter() - started < 60
        logger.info(f"median planner gap to the grid optimum: {np.median(gaps):.4%}")
        assert np.median(gaps) >= 0


def _comparison_instance(rng) -> Scenario:
    """Warm-up at even prices to t=2, then a burdensome floor at t=4 both methods can meet."""
    laws = [LinearDemandParams(300, 2), LinearDemandParams(220, 1)]
    rhos = [rng.uniform(0.52, 0.6), rng.uniform(0.75, 0.85)]
    rates = [rho * law.a for rho, law in zip(rhos, laws)]
    prices = [(law.a - r) / law.b for law, r in zip(laws, rates)]
    revenue = [p * r for p, r in zip(prices, rates)]
    top = [law.a * law.a / (4 * law.b) for law in laws]
    headroom = [2 * (m - r) for m, r in zip(top, revenue)]
    weights = [r / sum(revenue) for r in revenue]
    lift = rng.uniform(0.3, 1.0) * min(0.4 * sum(headroom), 0.8 * min(h / w for h, w in zip(headroom, weights)))
    sched = schedule(TIMES, [r * HORIZON for r in rates], revenue_floors={2: 4 * sum(revenue) + lift})
    return Scenario(
        horizon=HORIZON,
        groups=tuple(GroupSpec(DemandModel.constant(law, HORIZON), p) for law, p in zip(laws, prices)),
        schedule=sched,
        warmup_until=2.0,
    )


def test_headroom_distribution_beats_revenue_share():
    rng = np.random.default_rng(3)
    wins = 0
    for _ in range(20):
        comparison = compare(_comparison_instance(rng), n_points=200)
        assert all(result.feasible for result in comparison.results.values())
        wins += comparison.delta >= 0
    assert wins >= 18


class TestDemandChange:
    def test_event_lowers_the_affected_group_and_raises_the_other(self, demand_change_scenario):
        with_event = run(demand_change_scenario)
        without = run(replace(demand_change_scenario, events=()))
        assert with_event.feasible
        for t in np.linspace(6, 10, 81)[:-1]:
            assert with_event.policy.price_at(0, t) < without.policy.price_at(0, t)
        for t in np.linspace(6, 8, 41)[:-1]:
            assert with_event.policy.price_at(1, t) > without.policy.price_at(1, t)

    def test_affected_group_weight_drops(self, demand_change_scenario):
        report = distribution_report(run(demand_change_scenario))
        weights = report.filter(report["group"] == 1).sort("t")["weight"].to_list()
        assert len(weights) == 2
        assert weights[1] < weights[0]


@pytest.mark.parametrize("name", ["demand_change", "distribution_comparison", "even_absorption"])
def test_plan_outputs_are_deterministic(tmp_path, name):
    outputs = []
    for run_dir in ("first", "second"):
        out = tmp_path / run_dir
        argv = ["--config", str(CONFIG), "--no-history", "plan", str(SCENARIOS / f"{name}.json"), "--out", str(out)]
        assert main(argv) == EXIT_OK
        outputs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert outputs[0] == outputs[1]
    assert set(outputs[0]) == {"policy.csv", "trajectory.csv", "constraints_report.txt"}
