import math

import numpy as np
import pytest

from src.demand.demand import (
    DemandModel,
    LinearDemandParams,
    eval_rate,
    invert_rate,
    max_revenue_rate,
    rate_slope,
    revenue_max_price,
    solve_price_for_revenue_rate,
)
from src.utils.errors import DemandDomainError, InfeasibleRateError, InfeasibleTargetError
from tests.builders import constant_model


@pytest.fixture
def capped_model() -> DemandModel:
    """Large-scale law that saturates at 300 units per period below price 20."""
    return constant_model(1.2, 0.01, scale=300, cap=300, price_hi=120)


class TestLinearDemandParams:
    def test_rejects_non_positive_slope(self):
        with pytest.raises(ValueError, match="slope"):
            LinearDemandParams(300, 0)

    def test_rejects_inverted_price_bounds(self):
        with pytest.raises(ValueError, match="price bounds"):
            LinearDemandParams(300, 2, price_lo=100, price_hi=90)

    def test_cap_price(self, capped_model):
        assert capped_model.params_at(0).cap_price == pytest.approx(20.0)
        assert LinearDemandParams(300, 2).cap_price == -math.inf


class TestDemandModel:
    def test_params_at_switches_on_start(self):
        before, after = LinearDemandParams(300, 2), LinearDemandParams(300, 2, scale=4)
        model = DemandModel.constant(before, 10).with_change(6, after)
        assert model.params_at(5.999) == before
        assert model.params_at(6) == after
        assert model.params_at(10) == after

    def test_with_change_at_zero_replaces_law(self):
        model = DemandModel.constant(LinearDemandParams(300, 2), 10).with_change(0, LinearDemandParams(100, 1))
        assert model.starts == [0.0]
        assert model.params_at(3).a == 100

    def test_pieces_split_at_law_changes(self):
        model = DemandModel.constant(LinearDemandParams(300, 2), 10).with_change(6, LinearDemandParams(100, 1))
        pieces = model.pieces(2, 8)
        assert [(lo, hi) for lo, hi, _ in pieces] == [(2, 6), (6, 8)]
        assert pieces[1][2].a == 100

    def test_rejects_start_beyond_horizon(self):
        with pytest.raises(ValueError):
            DemandModel(((0.0, LinearDemandParams(300, 2)), (10.0, LinearDemandParams(1, 1))), 10)

    @pytest.mark.parametrize("t", [-1.0, 10.5])
    def test_outside_horizon(self, single_group, t):
        with pytest.raises(DemandDomainError):
            eval_rate(single_group, t, 100)


class TestEvalRate:
    def test_linear_branch(self, single_group):
        assert eval_rate(single_group, 3.0, 100) == pytest.approx(100.0)

    def test_above_choke_price(self, single_group):
        assert eval_rate(single_group, 3.0, 151) == 0.0

    def test_clamped_to_cap(self, capped_model):
        assert eval_rate(capped_model, 0.0, 10) == pytest.approx(300.0)

    def test_non_increasing_in_price(self, capped_model):
        prices = np.linspace(0, 130, 500)
        rates = [eval_rate(capped_model, 1.0, p) for p in prices]
        assert all(r1 <= r0 for r0, r1 in zip(rates, rates[1:]))

    def test_slope_zero_on_clamped_parts(self, capped_model):
        assert rate_slope(capped_model, 0, 10) == 0.0
        assert rate_slope(capped_model, 0, 60) == pytest.approx(-3.0)
        assert rate_slope(capped_model, 0, 125) == 0.0


class TestInvertRate:
    def test_inverts_linear_branch(self, single_group):
        assert invert_rate(single_group, 0, 100) == pytest.approx(100.0)

    def test_zero_rate_is_choke_price(self, single_group):
        assert invert_rate(single_group, 0, 0) == pytest.approx(150.0)

    def test_unattainable_rate(self, single_group):
        with pytest.raises(InfeasibleRateError) as exc:
            invert_rate(single_group, 0, 301)
        assert exc.value.max_rate == pytest.approx(300.0)

    def test_cap_bounds_reachable_rate(self, capped_model):
        with pytest.raises(InfeasibleRateError):
            invert_rate(capped_model, 0, 301)

    @pytest.mark.parametrize("rate", [0.5, 17.0, 150.0, 299.0])
    def test_round_trip(self, single_group, rate):
        assert eval_rate(single_group, 0, invert_rate(single_group, 0, rate)) == pytest.approx(rate)


class TestRevenueMax:
    def test_interior_maximiser(self, single_group):
        assert revenue_max_price(single_group, 0) == pytest.approx(75.0)
        assert max_revenue_rate(single_group, 0) == pytest.approx(11250.0)

    def test_clamped_into_bounds(self):
        model = constant_model(300, 2, price_lo=90)
        assert revenue_max_price(model, 0) == pytest.approx(90.0)

    def test_dominates_grid(self, capped_model):
        best = max_revenue_rate(capped_model, 0)
        prices = np.linspace(0, 120, 1000)
        assert all(p * eval_rate(capped_model, 0, p) <= best * (1 + 1e-12) for p in prices)


class TestSolvePriceForRevenueRate:
    def test_nearest_root_to_reference(self, single_group):
        assert solve_price_for_revenue_rate(single_group, 0, 10500, 100) == pytest.approx(94.365, abs=1e-3)

    def test_at_capacity(self, single_group):
        assert solve_price_for_revenue_rate(single_group, 0, 11250, 100) == pytest.approx(75.0)

    def test_above_capacity(self, single_group):
        with pytest.raises(InfeasibleTargetError) as exc:
            solve_price_for_revenue_rate(single_group, 0, 12000, 100)
        assert exc.value.shortfall == pytest.approx(750.0)

    def test_tie_goes_to_lower_price(self):
        # v = 4 - p: revenue 3 at p = 1 and p = 3
        model = constant_model(4, 1)
        assert solve_price_for_revenue_rate(model, 0, 3, 2) == pytest.approx(1.0)

    def test_capped_branch_root(self, capped_model):
        # 10 on the capped part, 110.99 on the linear part; 9.01 lies under the cap price
        assert solve_price_for_revenue_rate(capped_model, 0, 3000, 0) == pytest.approx(10.0)
        assert solve_price_for_revenue_rate(capped_model, 0, 3000, 100) == pytest.approx(110.990, abs=1e-3)

    def test_roots_reach_target(self, single_group):
        rng = np.random.default_rng(7)
        for c, p_ref in zip(rng.uniform(0, 11250, 200), rng.uniform(0, 150, 200)):
            p = solve_price_for_revenue_rate(single_group, 0, c, p_ref)
            assert p * eval_rate(single_group, 0, p) == pytest.approx(c, rel=1e-9, abs=1e-9)
