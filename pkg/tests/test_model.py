import math

import numpy as np
import pytest

from dualpace.errors import (
    DimensionMismatch,
    InvalidStep,
    NegativeBudget,
    NegativeCost,
    NonFiniteValue,
    ParseError,
    ValidationError,
)
from dualpace.model import (
    AllocationInstance,
    ArrivalVectorSeries,
    BudgetPlan,
    LambdaGrid,
    TreatmentCatalog,
    UserResponse,
    build_grid,
    check_plan,
    check_series,
    read_instance,
    validate_instance,
    write_instance,
)
from dualpace.serialize import format_float

from support import uniform_instance


def make_instance(rewards, costs, budget, includes_null=False):
    users = tuple(
        UserResponse(user_id=i, arrival_time=float(i), rewards=r, costs=c)
        for i, (r, c) in enumerate(zip(rewards, costs))
    )
    count = len(rewards[0])
    return AllocationInstance(
        users=users,
        catalog=TreatmentCatalog(count=count, includes_null=includes_null),
        budget=budget,
    )


class TestValidateInstance:
    def test_null_injection(self):
        inst = make_instance([(2.0,)], [(1.0,)], budget=1.0)
        out = validate_instance(inst)
        assert out.catalog.count == 2
        assert out.catalog.includes_null
        assert out.users[0].rewards == (0.0, 2.0)
        assert out.users[0].costs == (0.0, 1.0)

    def test_seeded_instance_dimensions(self):
        rng = np.random.default_rng(7)
        rewards = [tuple(rng.uniform(0, 1, 3)) for _ in range(10)]
        costs = [tuple(rng.uniform(0, 1, 3)) for _ in range(10)]
        out = validate_instance(make_instance(rewards, costs, budget=5.0))
        assert len(out.users) == 10
        assert all(len(u.rewards) == 4 and len(u.costs) == 4 for u in out.users)

    def test_idempotent(self):
        inst = make_instance([(2.0,)], [(1.0,)], budget=1.0)
        once = validate_instance(inst)
        twice = validate_instance(once)
        assert twice is once

    def test_negative_cost(self):
        with pytest.raises(NegativeCost):
            validate_instance(make_instance([(1.0,)], [(-0.5,)], budget=1.0))

    def test_dimension_mismatch(self):
        inst = make_instance([(1.0, 2.0)], [(0.5, 0.5)], budget=1.0)
        bad = AllocationInstance(
            users=inst.users,
            catalog=TreatmentCatalog(count=3, includes_null=False),
            budget=1.0,
        )
        with pytest.raises(DimensionMismatch):
            validate_instance(bad)

    def test_negative_budget(self):
        with pytest.raises(NegativeBudget):
            validate_instance(make_instance([(1.0,)], [(0.5,)], budget=-1.0))

    def test_non_finite(self):
        with pytest.raises(NonFiniteValue):
            validate_instance(make_instance([(math.nan,)], [(0.5,)], budget=1.0))
        with pytest.raises(NonFiniteValue):
            validate_instance(make_instance([(1.0,)], [(math.inf,)], budget=1.0))

    def test_bad_null_slot_rejected(self):
        inst = make_instance(
            [(0.5, 1.0)], [(0.0, 1.0)], budget=1.0, includes_null=True
        )
        with pytest.raises(ValidationError):
            validate_instance(inst)

    def test_negative_rewards_allowed(self):
        out = validate_instance(make_instance([(-2.0,)], [(1.0,)], budget=1.0))
        assert out.users[0].rewards == (0.0, -2.0)


class TestBuildGrid:
    def test_warm_start_clamped_to_zero(self):
        # lambda_low = max(0, 0.3 - (10/2)*0.1) = 0
        grid = build_grid(0.3, epsilon=0.1, k_count=10)
        assert grid.lambda_low == 0.0
        expected = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]
        assert np.allclose(grid.values, expected, atol=1e-15)
        assert len(grid) == 11

    def test_centered_when_unclamped(self):
        grid = build_grid(5.0, epsilon=0.01, k_count=100)
        assert grid.lambda_low == pytest.approx(4.5)
        assert grid.values[50] == pytest.approx(5.0)
        assert grid.values[-1] == pytest.approx(5.5)

    def test_invalid_step(self):
        with pytest.raises(InvalidStep):
            build_grid(1.0, epsilon=0.0, k_count=10)
        with pytest.raises(InvalidStep):
            build_grid(1.0, epsilon=-0.1, k_count=10)

    def test_strictly_increasing_uniform_spacing(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            warm = float(rng.uniform(0, 10))
            eps = float(rng.uniform(1e-4, 0.5))
            k = int(rng.integers(1, 200))
            grid = build_grid(warm, eps, k)
            vals = np.asarray(grid.values)
            diffs = np.diff(vals)
            assert np.all(diffs > 0)
            scale = max(1.0, vals[-1])
            assert np.max(np.abs(diffs - eps)) <= 1e-12 * scale
            assert vals[0] >= 0.0


class TestInstanceRoundTrip:
    def test_write_read_write_is_byte_identical(self, tmp_path):
        for seed in range(20):
            inst = validate_instance(uniform_instance(seed))
            p1 = tmp_path / f"a_{seed}.jsonl"
            p2 = tmp_path / f"b_{seed}.jsonl"
            write_instance(inst, str(p1))
            back = read_instance(str(p1))
            write_instance(back, str(p2))
            assert p1.read_bytes() == p2.read_bytes()
            assert back.budget == inst.budget
            assert back.users == inst.users
            assert back.catalog == inst.catalog

    def test_awkward_floats_survive(self, tmp_path):
        rewards = (0.1 + 0.2, 1e-300, 1.7976931348623157e308)
        costs = (1e-17, 0.30000000000000004, 2.0)
        inst = make_instance([rewards], [costs], budget=1 / 3)
        path = tmp_path / "inst.jsonl"
        write_instance(inst, str(path))
        back = read_instance(str(path))
        assert back.users[0].rewards == rewards
        assert back.users[0].costs == costs
        assert back.budget == 1 / 3

    def test_parse_errors(self, tmp_path):
        p = tmp_path / "bad.jsonl"
        p.write_text("not json\n")
        with pytest.raises(ParseError):
            read_instance(str(p))
        p.write_text('{"budget": 1.0, "unknown": 2}\n')
        with pytest.raises(ParseError):
            read_instance(str(p))
        p.write_text("")
        with pytest.raises(ParseError):
            read_instance(str(p))


class TestFormatFloat:
    def test_round_trip_random(self):
        rng = np.random.default_rng(11)
        values = list(rng.uniform(-1e6, 1e6, 200)) + list(
            rng.uniform(-1, 1, 200) * 10.0 ** rng.integers(-300, 300, 200)
        )
        for x in values:
            assert float(format_float(float(x))) == float(x)

    def test_floats_stay_floats(self):
        assert format_float(2.0) == "2.0"
        assert format_float(-0.0) == "-0.0"

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            format_float(math.inf)
        with pytest.raises(ValueError):
            format_float(math.nan)


class TestSeriesAndPlanChecks:
    def test_valid_series_passes(self):
        grid = build_grid(0.5, 0.1, 4)
        matrix = np.array([[5.0, 4.0, 3.2, 2.6, 2.2], [1.0, 0.5, 0.25, 0.2, 0.2]])
        check_series(ArrivalVectorSeries(grid=grid, matrix=matrix))

    def test_increasing_row_rejected(self):
        grid = build_grid(0.5, 0.1, 2)
        with pytest.raises(ValidationError):
            check_series(
                ArrivalVectorSeries(grid=grid, matrix=np.array([[1.0, 2.0, 3.0]]))
            )

    def test_nonconvex_row_rejected(self):
        grid = build_grid(0.5, 0.1, 3)
        # diffs -1, -3, -0.5: second diffs -2, +2.5 -> not convex
        with pytest.raises(ValidationError):
            check_series(
                ArrivalVectorSeries(
                    grid=grid, matrix=np.array([[10.0, 9.0, 6.0, 5.5]])
                )
            )

    def test_negative_entry_rejected(self):
        grid = build_grid(0.5, 0.1, 2)
        with pytest.raises(ValidationError):
            check_series(
                ArrivalVectorSeries(grid=grid, matrix=np.array([[1.0, 0.0, -1.0]]))
            )

    def test_plan_checks(self):
        check_plan(BudgetPlan(slot_budgets=(2.0, 2.0, 1.0), total=5.0))
        with pytest.raises(ValidationError):
            check_plan(BudgetPlan(slot_budgets=(3.0, 3.0), total=5.0))
        with pytest.raises(NegativeBudget):
            check_plan(BudgetPlan(slot_budgets=(-1.0, 2.0), total=5.0))
