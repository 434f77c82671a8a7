# ruff: noqa: INP001
"""Shared fixtures: small scenarios that run in well under a second."""

from typing import Optional, Sequence

import pytest

from cognitive_delay_scheduler.channel import FadingProfile, RadioParams
from cognitive_delay_scheduler.doic import ControlParams
from cognitive_delay_scheduler.engine import (
    Scenario,
    SimOptions,
    SimReport,
    SweepAxis,
    SweepPoint,
    UserSpec,
)
from cognitive_delay_scheduler.metrics import QUADRATIC_HALF

# The smallest sample count the service-rate estimator accepts.
FAST_MU_SAMPLES = 10_000


@pytest.fixture
def scenario_factory():
    """Build the two-user reference scenario at a test-sized horizon."""

    def make(
        arrival_rate: float = 0.3,
        horizon: int = 20_000,
        bounds: Sequence[float] = (1.25, 3.0),
        seed: int = 1,
        v: float = 1000.0,
        **options,
    ) -> Scenario:
        options.setdefault("mu_samples", FAST_MU_SAMPLES)
        users = (
            UserSpec(FadingProfile(1.0, 4.0), arrival_rate, bounds[0]),
            UserSpec(FadingProfile(1.0, 2.0), arrival_rate, bounds[1]),
        )
        return Scenario(
            users=users,
            radio=RadioParams(),
            control=ControlParams(v=v),
            horizon_slots=horizon,
            seed=seed,
            options=SimOptions(**options),
        )

    return make


@pytest.fixture
def report_factory():
    """Hand-made SimReport whose sum cost is consistent with quadratic-half costs."""

    def make(
        delays: Sequence[float],
        seed: int = 1,
        max_interference: float = 5.0,
        stable: Optional[Sequence[bool]] = None,
        bounds: Sequence[float] = (1.25, 3.0),
    ) -> SimReport:
        costs = tuple(QUADRATIC_HALF(w) for w in delays)
        return SimReport(
            per_user_delay=tuple(delays),
            per_user_cost=costs,
            sum_cost=sum(costs),
            max_interference_seen=max_interference,
            delay_bound_violations=tuple(w > d for w, d in zip(delays, bounds)),
            mean_frame_length=3.0,
            y_over_k_terminal=(0.0,) * len(delays),
            slots_simulated=10_000,
            seed=seed,
            mean_rate_stable=tuple(stable) if stable is not None else (True,) * len(delays),
        )

    return make


@pytest.fixture
def point_factory(report_factory):
    def make(value: float, delays: Sequence[float], replicate: int = 0, **kwargs) -> SweepPoint:
        report = report_factory(delays, seed=replicate + 1, **kwargs)
        return SweepPoint(SweepAxis.LAMBDA, value, replicate, replicate + 1, report)

    return make
