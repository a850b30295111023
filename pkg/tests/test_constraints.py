import numpy as np
import pytest

from src.constraints.constraints import (
    ConstraintSchedule,
    Trajectory,
    check_feasibility_against,
    constraint_report,
    validate,
)
from tests.builders import schedule


@pytest.fixture
def floors_schedule() -> ConstraintSchedule:
    """One group, final sales 1000 at 10, revenue floor 80000 at 4."""
    return schedule([0, 2, 4, 10], [1000], revenue_floors={2: 80000})


def _trajectory(sales, revenue, grid=(0, 2, 4, 10)) -> Trajectory:
    return Trajectory(np.array(grid, dtype=float), np.array([sales], dtype=float), np.array([revenue], dtype=float))


class TestSchedule:
    def test_empty_floors_normalised(self):
        sched = ConstraintSchedule((0, 5, 10), (100, 200))
        assert sched.sales_floors == ((None, None, None), (None, None, None))
        assert sched.revenue_floors == (None, None, None)

    def test_misaligned_floors(self):
        with pytest.raises(ValueError, match="aligned"):
            ConstraintSchedule((0, 5, 10), (100,), revenue_floors=(None, 5))

    def test_sales_targets(self):
        sched = schedule([0, 2, 4, 10], [1000], sales_floors=[{1: 200, 2: 500}])
        assert sched.sales_targets(0, after=0) == [(1, 200), (2, 500), (3, 1000)]
        assert sched.sales_targets(0, after=2) == [(2, 500), (3, 1000)]

    def test_revenue_targets(self, floors_schedule):
        assert floors_schedule.revenue_targets(after=0) == [(2, 80000)]
        assert floors_schedule.revenue_targets(after=4) == []


class TestValidate:
    def test_valid_schedule(self):
        sched = schedule(
            [0, 2, 4, 6, 8, 10], [550, 600], revenue_floors={2: 80000, 3: 90000, 5: 100000}
        )
        assert validate(sched) == []

    def test_non_increasing_times(self):
        violations = validate(schedule([0, 4, 2, 10], [1000]))
        assert [v.message for v in violations] == ["non-increasing times at j=2"]

    def test_first_time(self):
        violations = validate(schedule([1, 4, 10], [1000]))
        assert violations[0].message.startswith("first time must be 0")

    def test_intermediate_exceeds_final(self):
        violations = validate(schedule([0, 5, 10], [550], sales_floors=[{1: 600}]))
        assert [(v.index, v.message) for v in violations] == [(1, "intermediate exceeds final")]

    def test_negative_and_decreasing_floors(self):
        violations = validate(schedule([0, 2, 4, 10], [1000], sales_floors=[{1: 300, 2: 200}], revenue_floors={1: -5}))
        assert {v.message for v in violations} == {"sales floors decrease over time", "negative floor"}

    def test_revenue_floor_at_start(self):
        violations = validate(schedule([0, 5, 10], [100], revenue_floors={0: 10}))
        assert [v.field for v in violations] == ["revenue_floors[0]"]

    def test_sales_floor_at_final_time(self):
        violations = validate(schedule([0, 5, 10], [100], sales_floors=[{2: 50}]))
        assert violations[0].message == "sales floors are only allowed at intermediate times"


class TestCheckFeasibility:
    def test_feasible(self, floors_schedule):
        traj = _trajectory([0, 200, 400, 1000], [0, 40000, 81000, 150000])
        assert check_feasibility_against(floors_schedule, traj) is None

    def test_revenue_floor_gap(self, floors_schedule):
        traj = _trajectory([0, 200, 400, 1000], [0, 40000, 79000, 150000])
        violation = check_feasibility_against(floors_schedule, traj, tol=1.0)
        assert (violation.kind, violation.group, violation.index) == ("revenue", None, 2)
        assert violation.gap == pytest.approx(1000.0)

    def test_final_sales_within_tolerance(self, floors_schedule):
        traj = _trajectory([0, 200, 400, 999.9999], [0, 40000, 81000, 150000])
        assert check_feasibility_against(floors_schedule, traj, tol=1e-3) is None
        violation = check_feasibility_against(floors_schedule, traj, tol=1e-6)
        assert violation.kind == "final_sales"
        assert violation.gap == pytest.approx(1e-4)

    def test_first_violation_in_time_order(self):
        sched = schedule([0, 2, 4, 10], [1000], sales_floors=[{1: 300}], revenue_floors={2: 80000})
        traj = _trajectory([0, 200, 400, 1000], [0, 40000, 70000, 150000])
        violation = check_feasibility_against(sched, traj, tol=1.0)
        assert (violation.kind, violation.group, violation.index) == ("sales", 0, 1)
        assert violation.gap == pytest.approx(100.0)

    def test_looser_tolerance_never_adds_violations(self, floors_schedule):
        traj = _trajectory([0, 200, 400, 999.5], [0, 40000, 79990, 150000])
        results = [check_feasibility_against(floors_schedule, traj, tol=tol) is None for tol in (1e-3, 1, 20, 100)]
        assert results == sorted(results)

    def test_trajectory_must_cover_horizon(self, floors_schedule):
        traj = _trajectory([0, 200, 400], [0, 40000, 81000], grid=(0, 2, 4))
        with pytest.raises(ValueError, match="horizon"):
            check_feasibility_against(floors_schedule, traj)


class TestReports:
    def test_trajectory_frame(self):
        traj = _trajectory([0, 200, 400, 1000], [0, 40000, 81000, 150000])
        frame = traj.to_frame()
        assert frame.columns == ["t", "sales_1", "revenue_1", "revenue"]
        assert frame["revenue"].to_list() == [0, 40000, 81000, 150000]

    def test_constraint_report(self, floors_schedule):
        traj = _trajectory([0, 200, 400, 1000], [0, 40000, 81000, 150000])
        report = constraint_report(floors_schedule, traj)
        assert report["kind"].to_list() == ["revenue", "final_sales"]
        assert report["group"].to_list() == [None, 1]
        assert report["slack"].to_list() == pytest.approx([1000.0, 0.0])
