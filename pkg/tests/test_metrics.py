# ruff: noqa: S101, INP001, PLR2004
"""Cost functions, curve aggregation, comparisons and acceptance checks."""

import csv
import math

import pytest
from scipy import stats

from cognitive_delay_scheduler.engine import SweepAxis, SweepPoint
from cognitive_delay_scheduler.exceptions import GridMismatchError, ParameterError
from cognitive_delay_scheduler.metrics import (
    QUADRATIC_HALF,
    CheckResult,
    CostKind,
    CostSpec,
    CurvePoint,
    build_curve,
    check_asymmetry,
    check_delay_bound,
    check_interference,
    check_light_load_ordering,
    check_nonincreasing,
    check_stability,
    check_sum_cost_consistency,
    compare_curves,
    confidence_halfwidth,
    cost_function,
    exit_status,
    report_constraint_price,
    write_curve_csv,
)


def _curve(xs, delays, sum_costs=None, ci=0.0):
    return [
        CurvePoint(
            x=x,
            per_user_delay=tuple(w),
            sum_cost=(sum_costs[i] if sum_costs else sum(QUADRATIC_HALF(v) for v in w)),
            ci_halfwidth=ci,
            per_user_ci=(ci,) * len(w),
        )
        for i, (x, w) in enumerate(zip(xs, delays))
    ]


def test_quadratic_half_values():
    assert cost_function(0.0) == 0.0
    assert cost_function(2.0) == 2.0
    assert cost_function(1.5) == 1.125


def test_cost_function_rejects_negative_delay():
    with pytest.raises(ParameterError):
        cost_function(-0.5)


def test_other_cost_families():
    cubic = CostSpec(kind=CostKind.POWER, scale=1.0, exponent=3.0)
    assert cost_function(2.0, cubic) == 8.0
    exp_cost = CostSpec(kind="exp", scale=0.5, rate=1.0)
    assert exp_cost.kind is CostKind.EXP
    assert cost_function(1.0, exp_cost) == pytest.approx(0.5 * (math.e - 1))


@pytest.mark.parametrize(
    "kwargs",
    [
        {"exponent": 0.5},  # concave
        {"scale": 0.0},
        {"scale": -1.0},
        {"rate": 0.0, "kind": "exp"},
    ],
)
def test_non_convex_or_invalid_costs_are_rejected(kwargs):
    with pytest.raises(ParameterError):
        CostSpec(**kwargs)


def test_linear_cost_closed_form_is_bang_bang():
    linear = CostSpec(scale=1.0, exponent=1.0)
    assert linear.closed_form_minimizer(weight=5.0, v=10.0, upper=2.0) == 0.0
    assert linear.closed_form_minimizer(weight=50.0, v=10.0, upper=2.0) == 2.0


def test_confidence_halfwidth():
    assert confidence_halfwidth([4.2]) == 0.0
    expected = stats.t.ppf(0.975, 2) * 1.0 / math.sqrt(3)
    assert confidence_halfwidth([1.0, 2.0, 3.0]) == pytest.approx(expected)
    assert confidence_halfwidth([2.0, 2.0, 2.0]) == 0.0


def test_curve_point_validation():
    with pytest.raises(ParameterError):
        CurvePoint(x=0.1, per_user_delay=(1.0, 2.0), sum_cost=2.5, ci_halfwidth=-0.1)
    with pytest.raises(ParameterError):
        CurvePoint(x=0.1, per_user_delay=(1.0, 2.0), sum_cost=2.5, ci_halfwidth=0.0, per_user_ci=(0.1,))


def test_build_curve_aggregates_replicates(point_factory):
    points = [
        point_factory(0.2, (1.0, 2.0), replicate=0),
        point_factory(0.2, (1.2, 2.2), replicate=1),
        point_factory(0.5, (1.5, 2.5), replicate=0),
        SweepPoint(SweepAxis.LAMBDA, 0.5, 1, 2, None, "InvariantViolation: boom"),
    ]
    curve = build_curve(points)
    assert [p.x for p in curve] == [0.2, 0.5]
    assert curve[0].per_user_delay == pytest.approx((1.1, 2.1))
    assert curve[0].replicates == 2
    assert curve[0].per_user_ci[0] == pytest.approx(confidence_halfwidth([1.0, 1.2]))
    assert curve[0].sum_cost == pytest.approx((2.5 + 0.72 + 2.42) / 2)
    assert curve[1].replicates == 1
    assert curve[1].ci_halfwidth == 0.0
    assert curve[0].max_interference == 5.0


def test_write_curve_csv(tmp_path):
    path = tmp_path / "curve.csv"
    write_curve_csv(_curve([0.1, 0.2], [(1.0, 2.0), (1.1, 2.2)], ci=0.05), str(path))
    with open(path, encoding="utf-8", newline="") as stream:
        rows = list(csv.reader(stream))
    assert rows[0] == ["x", "w_user1", "w_user2", "ci_1", "ci_2", "sum_cost", "max_interference"]
    assert len(rows) == 3
    assert float(rows[1][1]) == 1.0
    assert float(rows[2][3]) == 0.05


def test_compare_identical_curves():
    curve = _curve([0.1, 0.2, 0.3], [(1, 2), (1, 3), (2, 3)])
    comparison = compare_curves(curve, curve)
    assert all(p.difference == 0 for p in comparison.points)
    assert all(p.relative_pct == 0 for p in comparison.points)
    assert comparison.dominance == (("tie", 0.1, 0.3),)


def test_compare_curves_dominance_runs():
    a = _curve([0.1, 0.2, 0.3, 0.4], [(1, 1)] * 4, sum_costs=[1.0, 1.0, 1.0, 1.0])
    b = _curve([0.1, 0.2, 0.3, 0.4], [(1, 1)] * 4, sum_costs=[1.2, 1.1, 0.9, 1.0])
    comparison = compare_curves(a, b)
    assert [p.relative_pct for p in comparison.points] == pytest.approx([20.0, 10.0, -10.0, 0.0])
    assert comparison.dominance == (("a", 0.1, 0.2), ("b", 0.3, 0.3), ("tie", 0.4, 0.4))
    assert comparison.max_relative_pct == pytest.approx(20.0)
    assert comparison.min_relative_pct == pytest.approx(-10.0)


def test_compare_curves_grid_mismatch():
    with pytest.raises(GridMismatchError):
        compare_curves(_curve([0.1], [(1, 1)]), _curve([0.2], [(1, 1)]))


def test_delay_bound_check_tolerance():
    assert check_delay_bound("ok", _curve([0.5], [(1.29, 2.0)]), 0, 1.25).passed
    failed = check_delay_bound("bad", _curve([0.5], [(1.31, 2.0)]), 0, 1.25)
    assert not failed.passed
    assert not failed.hard


def test_asymmetry_check_uses_confidence_intervals():
    assert check_asymmetry("gap", _curve([0.1, 0.5], [(2.0, 1.0), (3.0, 2.0)], ci=0.1)).passed
    assert not check_asymmetry("overlap", _curve([0.1], [(2.0, 1.9)], ci=0.1)).passed


def test_constraint_price_is_reported_not_enforced():
    xs = [0.4, 0.6, 0.8]
    unconstrained = _curve(xs, [(1, 1)] * 3, sum_costs=[2.0, 3.0, 4.0], ci=0.1)
    constrained = _curve(xs, [(1, 1)] * 3, sum_costs=[1.0, 3.1, 4.5], ci=0.1)
    # Below 0.6 the constrained curve may be cheaper.
    price = report_constraint_price("price", constrained, unconstrained)
    assert price.passed
    assert price.informational
    assert price.detail == "constrained costlier at [0.8], cheaper at [], overlapping at [0.6]"

    cheaper = _curve(xs, [(1, 1)] * 3, sum_costs=[2.0, 2.0, 4.5], ci=0.1)
    reversed_price = report_constraint_price("price", cheaper, unconstrained)
    assert not reversed_price.passed
    assert "cheaper at [0.6]" in reversed_price.detail
    assert exit_status([reversed_price]) == 0
    assert reversed_price.to_dict()["informational"] is True
    with pytest.raises(GridMismatchError):
        report_constraint_price("price", cheaper[:2], unconstrained)


def test_nonincreasing_check():
    assert check_nonincreasing("v", _curve([10, 100, 1000], [(1, 1)] * 3, sum_costs=[5.0, 4.0, 4.05], ci=0.1)).passed
    assert not check_nonincreasing("v", _curve([10, 100], [(1, 1)] * 2, sum_costs=[4.0, 5.0], ci=0.1)).passed


def test_light_load_ordering_check():
    light = _curve([0.1], [(0.5, 0.4)])[0]
    heavy = _curve([1.0], [(1.2, 2.8)])[0]
    assert check_light_load_ordering("light", light, heavy).passed
    assert not check_light_load_ordering("light", heavy, light).passed


def test_report_level_checks(report_factory):
    reports = [report_factory((1.0, 2.0)), report_factory((1.1, 2.1), max_interference=4.0)]
    interference = check_interference("interference", reports, 5.0)
    assert interference.passed
    assert interference.hard
    assert not check_interference("interference", [report_factory((1, 1), max_interference=5.01)], 5.0).passed
    assert check_sum_cost_consistency("sum", reports, [QUADRATIC_HALF] * 2).passed
    assert not check_sum_cost_consistency("sum", reports, [CostSpec(scale=1.0)] * 2).passed
    assert check_stability("stable", reports).passed
    assert not check_stability("stable", [report_factory((1, 1), stable=(True, False))]).passed


def test_exit_status():
    ok = CheckResult("a", passed=True, hard=True)
    soft_fail = CheckResult("b", passed=False, hard=False)
    hard_fail = CheckResult("c", passed=False, hard=True)
    assert exit_status([]) == 0
    assert exit_status([ok]) == 0
    assert exit_status([ok, soft_fail]) == 2
    assert exit_status([soft_fail, hard_fail]) == 1
    assert hard_fail.to_dict() == {
        "name": "c",
        "passed": False,
        "hard": True,
        "detail": "",
        "informational": False,
    }
    observed = CheckResult("d", passed=False, hard=True, informational=True)
    assert exit_status([ok, observed]) == 0
