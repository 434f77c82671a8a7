# ruff: noqa: S101, INP001, PLR2004
"""
Full-length runs of the reference scenario.

These take minutes and are deselected by default; run them with
``pytest -m slow``.
"""

from dataclasses import replace

import pytest

from cognitive_delay_scheduler.config import default_scenario
from cognitive_delay_scheduler.engine import SweepAxis, run, sweep
from cognitive_delay_scheduler.metrics import (
    build_curve,
    check_asymmetry,
    check_delay_bound,
    check_interference,
    check_nonincreasing,
    compare_curves,
    report_constraint_price,
)

pytestmark = pytest.mark.slow

HORIZON = 1_000_000
LAMBDAS = (0.1, 0.3, 0.5, 0.7, 0.9, 1.0)


@pytest.fixture(scope="module")
def constrained():
    return default_scenario((1.25, 3.0)).with_horizon(HORIZON)


@pytest.fixture(scope="module")
def unconstrained():
    return default_scenario((3.0, 3.0)).with_horizon(HORIZON)


def test_constrained_user_meets_its_bound(constrained):
    report = run(constrained.with_arrival_rate(0.5))
    assert report.per_user_delay[0] <= 1.25 + 0.04
    assert report.max_interference_seen <= 5.0 * (1 + 1e-9)
    assert all(report.mean_rate_stable)


def test_unconstrained_gap_and_measured_constraint_price(constrained, unconstrained):
    c_points = sweep(constrained, SweepAxis.LAMBDA, LAMBDAS, replicates=5, workers=4)
    u_points = sweep(unconstrained, SweepAxis.LAMBDA, LAMBDAS, replicates=5, workers=4)
    assert all(p.ok for p in c_points + u_points)
    c_curve, u_curve = build_curve(c_points), build_curve(u_points)

    assert check_asymmetry("gap", u_curve).passed
    # Measured: the constrained curve is never the costlier one from 0.6 up.
    price = report_constraint_price("price", c_curve, u_curve)
    assert price.informational
    assert "constrained costlier at []" in price.detail
    assert check_delay_bound("bound", c_curve, 0, 1.25).passed
    reports = [p.report for p in c_points + u_points if p.report is not None]
    assert check_interference("interference", reports, 5.0).passed


def test_imperfect_csi_costs_more_but_stays_under_the_cap(constrained):
    perfect = build_curve(sweep(constrained, SweepAxis.LAMBDA, (0.5, 0.8), replicates=3, workers=4))
    points = sweep(constrained.imperfect(), SweepAxis.LAMBDA, (0.5, 0.8), replicates=3, workers=4)
    reports = [p.report for p in points if p.report is not None]
    assert check_interference("imperfect interference", reports, 5.0).passed
    comparison = compare_curves(perfect, build_curve(points))
    assert comparison.max_relative_pct > 0


def test_sum_cost_trends_down_in_v(constrained):
    scenario = constrained.with_arrival_rate(0.5)
    points = sweep(scenario, SweepAxis.V, (10.0, 100.0, 1000.0, 10000.0), replicates=5, workers=4)
    assert check_nonincreasing("v", build_curve(points)).passed


def test_replicates_are_distinct_and_reproducible(constrained):
    scenario = replace(constrained, horizon_slots=100_000)
    first = sweep(scenario, SweepAxis.LAMBDA, (0.5,), replicates=3)
    second = sweep(scenario, SweepAxis.LAMBDA, (0.5,), replicates=3)
    assert [p.report for p in first] == [p.report for p in second]
    assert len({p.report.per_user_delay for p in first if p.report is not None}) == 3
