import math

import numpy as np
import pytest
from scipy.integrate import quad

from src.demand.demand import LinearDemandParams
from src.planner.base import PlannerState, plan
from src.planner.time_value import ConstantFn, ExponentialFn, TableFn, TimeValueSpec, inv_phi_integral, zeta_integral
from src.planner.tvm import (
    STATIONARITY_TOL,
    closed_form_policy,
    even_constants,
    held_revenue,
    plan_tvm,
    recalc_constants_for_floor,
    verify_stationarity,
)
from src.utils.errors import BranchViolationError
from tests.builders import schedule

LAW = LinearDemandParams(300, 2)
DISCOUNTED = TimeValueSpec(phi=ExponentialFn(-0.1))
FLAT = TimeValueSpec()


class TestTimeValueSpec:
    def test_rejects_increasing_phi(self):
        with pytest.raises(ValueError, match="phi"):
            TimeValueSpec(phi=ExponentialFn(0.1))

    def test_rejects_kappa_not_starting_at_one(self):
        with pytest.raises(ValueError, match="kappa"):
            TimeValueSpec(kappa=ConstantFn(2.0))

    def test_exponential_form_combines(self):
        spec = TimeValueSpec(phi=ExponentialFn(-0.1, 2.0), kappa=ExponentialFn(0.04))
        assert spec.exponential_form() == (2.0, pytest.approx(-0.06))
        assert TimeValueSpec(kappa=TableFn((0.0, 10.0), (1.0, 1.5))).exponential_form() is None

    def test_trivial(self):
        assert FLAT.is_trivial
        assert not DISCOUNTED.is_trivial


class TestIntegrals:
    def test_flat(self):
        assert inv_phi_integral(FLAT, 0, 10) == pytest.approx(10.0)
        assert zeta_integral(FLAT, 2, 5) == pytest.approx(3.0)

    def test_exponential(self):
        assert inv_phi_integral(DISCOUNTED, 0, 10) == pytest.approx(10 * (math.e - 1), rel=1e-12)
        assert zeta_integral(DISCOUNTED, 0, 10) == pytest.approx(10 * (1 - math.exp(-1)), rel=1e-12)

    def test_empty_interval(self):
        assert inv_phi_integral(DISCOUNTED, 4, 4) == 0.0

    def test_table_uses_quadrature(self):
        spec = TimeValueSpec(kappa=TableFn((0.0, 10.0), (1.0, 2.0)))
        assert inv_phi_integral(spec, 0, 10) == pytest.approx(10 * math.log(2), rel=1e-9)

    def test_reversed_bounds(self):
        with pytest.raises(ValueError):
            zeta_integral(FLAT, 5, 2)


class TestClosedForm:
    def test_flat_reduces_to_constant_price(self):
        q, segment = closed_form_policy(FLAT, LAW, 1000, 0, 10)
        assert q == pytest.approx(-50.0)
        assert segment.prices(np.array([0.0, 5.0, 10.0])).tolist() == pytest.approx([100.0] * 3)

    def test_discounted_curve(self):
        q, segment = closed_form_policy(DISCOUNTED, LAW, 1000, 0, 10)
        assert q == pytest.approx(-1000 / (20 * (math.e - 1)), rel=1e-9)
        assert segment.prices(0.0) == pytest.approx(89.549, abs=1e-3)
        assert segment.prices(10.0) == pytest.approx(114.549, abs=1e-3)

    def test_curve_sells_the_target(self):
        _, segment = closed_form_policy(DISCOUNTED, LAW, 1000, 0, 10)
        sold, _ = quad(lambda t: LAW.rate(segment.prices(t)), 0, 10, epsabs=0, epsrel=1e-12)
        assert sold == pytest.approx(1000.0, abs=1e-6)

    def test_prices_rise_when_discounting(self):
        _, segment = closed_form_policy(DISCOUNTED, LAW, 1000, 0, 10)
        prices = segment.prices(np.linspace(0, 10, 50))
        assert np.all(np.diff(prices) > 0)

    def test_revenue_maximising_curve(self):
        q, segment = closed_form_policy(FLAT, LAW, 1500, 0, 10)
        assert q == pytest.approx(0.0, abs=1e-12)
        assert segment.prices(3.0) == pytest.approx(75.0)

    def test_branch_violation(self):
        bounded = LinearDemandParams(300, 2, price_hi=110)
        with pytest.raises(BranchViolationError):
            closed_form_policy(DISCOUNTED, bounded, 1000, 0, 10)

    def test_stationarity(self):
        q, segment = closed_form_policy(DISCOUNTED, LAW, 1000, 0, 10)
        assert verify_stationarity(DISCOUNTED, LAW, segment) <= STATIONARITY_TOL
        # a perturbed constant leaves |dq| * s * b / (zeta(0) * s * a)
        assert verify_stationarity(DISCOUNTED, LAW, segment, q=q + 1) == pytest.approx(2 / 300)


class TestRecalcConstants:
    def test_floor_already_met_keeps_constants(self):
        sched = schedule([0, 5, 10], [1000], revenue_floors={1: 50000})
        state = PlannerState.initial(1)
        profile = even_constants(state, sched, [LAW], FLAT)
        constants, allocation = recalc_constants_for_floor(FLAT, [LAW], state, profile, sched, 1)
        assert constants.q == pytest.approx((-50.0,))
        assert allocation is None

    def test_floor_at_capacity_gives_zero_constant(self):
        sched = schedule([0, 5, 10], [1000], revenue_floors={1: 56250})
        state = PlannerState.initial(1)
        profile = even_constants(state, sched, [LAW], FLAT)
        constants, _ = recalc_constants_for_floor(FLAT, [LAW], state, profile, sched, 1)
        assert constants.q == (0.0,)

    def test_floor_met_with_equality(self):
        free = schedule([0, 5, 10], [1000])
        state = PlannerState.initial(1)
        profile = even_constants(state, free, [LAW], DISCOUNTED)
        target = (profile.revenue(0, 0, 5) + held_revenue(DISCOUNTED, LAW, 0.0, 0, 5)) / 2
        sched = schedule([0, 5, 10], [1000], revenue_floors={1: target})
        constants, allocation = recalc_constants_for_floor(DISCOUNTED, [LAW], state, profile, sched, 1)
        q = constants.q[0]
        assert held_revenue(DISCOUNTED, LAW, q, 0, 5) == pytest.approx(target, rel=1e-9)
        assert profile.constants[0] < q < 0
        assert allocation.weights == (1.0,)


class TestPlanTvm:
    def test_meets_burdensome_floor_with_equality(self, two_groups):
        free = schedule([0, 5, 10], [1000, 1200])
        baseline = plan_tvm(free, two_groups, DISCOUNTED)
        floor = 1.01 * baseline.trajectory.revenue_at(5.0)
        sched = schedule([0, 5, 10], [1000, 1200], revenue_floors={1: floor})
        result = plan_tvm(sched, two_groups, DISCOUNTED)
        assert result.steps[0].selected == 1
        assert result.trajectory.revenue_at(5.0) == pytest.approx(floor, rel=1e-6)
        assert result.trajectory.sales[:, -1].tolist() == pytest.approx([1000.0, 1200.0], rel=1e-6)
        assert max(result.stationarity) <= STATIONARITY_TOL

    def test_flat_time_value_matches_base_planner(self, demand_change_scenario):
        scenario = demand_change_scenario
        base = plan(scenario.schedule, scenario.models)
        tvm = plan_tvm(scenario.schedule, scenario.models, FLAT)
        for t in np.linspace(0, 10, 41):
            for i in range(2):
                assert tvm.policy.price_at(i, t) == pytest.approx(base.policy.price_at(i, t), abs=1e-6)
        assert tvm.final_revenue == pytest.approx(base.final_revenue, rel=1e-9)

    def test_posted_prices_rise_with_uplift(self, single_group):
        spec = TimeValueSpec(kappa=TableFn((0.0, 10.0), (1.0, 1.5)))
        result = plan_tvm(schedule([0, 10], [1000]), [single_group], spec)
        posted = [result.policy.posted_price_at(0, t) for t in np.linspace(0, 10, 21)]
        assert all(p1 > p0 for p0, p1 in zip(posted, posted[1:]))
        assert result.trajectory.sales[0, -1] == pytest.approx(1000.0, rel=1e-8)


class TestConstantsLogging:
    def test_constants_are_logged_as_plain_numbers(self, demand_change_scenario, log_messages):
        scenario = demand_change_scenario
        plan_tvm(scenario.schedule, scenario.models, FLAT)
        assert any(m.startswith("Step ") and "constants [" in m for m in log_messages)
        assert not any("np.float64" in m for m in log_messages)
