"""Frame-level delay control: virtual queues, auxiliary targets and priorities.

At the close of every frame each user's virtual queue absorbs the delay its
frame arrivals accumulated beyond the current target ``r``:

    Y' = max(0, Y + sum_j (W_j - r))

The target for the next frame minimises ``V * h(r) - Y * lambda * r`` over
``[0, d]`` using the queue as it stood before that update, and the users are
re-ranked by ``Y' * mu``. The ranking stays fixed until the next frame closes.
"""

import logging
from array import array
from dataclasses import dataclass, field, replace
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from .exceptions import InvariantViolation, ParameterError, StabilityRegionError
from .metrics import QUADRATIC_HALF, CostSpec

__all__ = [
    "ControlParams",
    "DoicController",
    "LyapunovSnapshot",
    "PriorityList",
    "StabilityReport",
    "StabilityTracker",
    "VirtualQueue",
    "build_priority_list",
    "expected_frame_length",
    "lyapunov_snapshot",
    "minimize_auxiliary",
    "schedule_candidates",
    "schedule_slot",
    "update_auxiliary",
    "update_virtual_queue",
    "update_virtual_queue_totals",
]

logger = logging.getLogger(__name__)

AUXILIARY_METHODS = ("auto", "closed", "numeric", "checked")


@dataclass(frozen=True)
class VirtualQueue:
    """Delay debt ``y`` of one user and its current delay target ``r``."""

    y: float
    r: float
    delay_bound: float
    arrival_rate: float

    def __post_init__(self) -> None:
        if not self.delay_bound > 0:
            raise ParameterError("delay_bound must be positive")
        if not self.arrival_rate >= 0:
            raise ParameterError("arrival_rate must be non-negative")
        if not self.y >= 0:
            raise ParameterError("virtual queue must be non-negative")
        if not 0 <= self.r <= self.delay_bound:
            raise ParameterError("auxiliary target must lie in [0, delay_bound]")

    @classmethod
    def initial(cls, delay_bound: float, arrival_rate: float) -> "VirtualQueue":
        # No debt and the loosest target: the first frame runs unconstrained.
        return cls(y=0.0, r=delay_bound, delay_bound=delay_bound, arrival_rate=arrival_rate)


@dataclass(frozen=True)
class PriorityList:
    order: Tuple[int, ...]
    frame_index: int = 0

    def __post_init__(self) -> None:
        if sorted(self.order) != list(range(len(self.order))):
            raise ParameterError(f"priority order {self.order} is not a permutation")


@dataclass(frozen=True)
class ControlParams:
    """Controller tuning.

    :param v: weight of the cost against the virtual-queue backlog.
    :param cost: default delay cost ``h`` for every user.
    :param tolerance: absolute tolerance of the numeric target search.
    """

    v: float = 1000.0
    cost: CostSpec = QUADRATIC_HALF
    tolerance: float = 1e-2

    def __post_init__(self) -> None:
        if not self.v > 0:
            raise ParameterError("v must be positive")
        if not self.tolerance > 0:
            raise ParameterError("tolerance must be positive")


@dataclass(frozen=True)
class LyapunovSnapshot:
    l: float  # noqa: E741
    drift_estimate: float
    penalty: float

    @property
    def drift_plus_penalty(self) -> float:
        return self.drift_estimate + self.penalty


def build_priority_list(
    y: Sequence[float], mu: Sequence[float], frame_index: int = 0
) -> PriorityList:
    """Rank users by ``y * mu``, highest first, ties to the lower index."""
    if len(y) != len(mu) or not y:
        raise ParameterError("y and mu must be non-empty and of equal length")
    order = sorted(range(len(y)), key=lambda i: (-y[i] * mu[i], i))
    return PriorityList(tuple(order), frame_index)


def schedule_candidates(plist: PriorityList, queue_lengths: Sequence[int]) -> Iterator[int]:
    """Users with something to send, in priority order."""
    for user in plist.order:
        if queue_lengths[user] > 0:
            yield user


def schedule_slot(plist: PriorityList, queue_lengths: Sequence[int]) -> Optional[int]:
    """The highest-priority user with a non-empty buffer, or None for an idle slot."""
    return next(schedule_candidates(plist, queue_lengths), None)


def update_virtual_queue_totals(vq: VirtualQueue, delay_sum: float, count: int) -> VirtualQueue:
    """:func:`update_virtual_queue` from the ledger totals of the frame."""
    if count < 0 or delay_sum < 0:
        raise ParameterError("frame delay totals must be non-negative")
    return replace(vq, y=max(0.0, vq.y + delay_sum - count * vq.r))


def update_virtual_queue(vq: VirtualQueue, frame_delays: Sequence[float]) -> VirtualQueue:
    """Fold the delays of the packets that arrived during the frame into ``y``."""
    if any(w < 0 for w in frame_delays):
        raise ParameterError("packet delays must be non-negative")
    return update_virtual_queue_totals(vq, float(sum(frame_delays)), len(frame_delays))


def minimize_auxiliary(
    weight: float, v: float, upper: float, cost: CostSpec, tolerance: float
) -> float:
    """Numeric ``argmin_{r in [0, upper]} v * h(r) - weight * r``.

    Uses scipy's bounded scalar search, which is Brent's method: golden-section
    steps with parabolic interpolation once the bracket is smooth enough.
    """

    def objective(r: float) -> float:
        return v * cost(r) - weight * r

    result = minimize_scalar(
        objective, bounds=(0.0, upper), method="bounded", options={"xatol": tolerance / 100}
    )
    # The bounded search never evaluates the end points themselves.
    candidates = (min(max(float(result.x), 0.0), upper), 0.0, upper)
    return min(candidates, key=objective)


def update_auxiliary(
    vq: VirtualQueue,
    params: ControlParams,
    cost: Optional[CostSpec] = None,
    method: str = "auto",
) -> VirtualQueue:
    """Choose the delay target for the next frame.

    ``auto`` uses the closed form when the cost has one and the bounded
    scalar search otherwise; ``checked`` runs both and logs a warning when
    they disagree by more than the tolerance.
    """
    if method not in AUXILIARY_METHODS:
        raise ParameterError(f"unknown auxiliary method {method!r}")
    h = cost or params.cost
    weight = vq.y * vq.arrival_rate
    closed = h.closed_form_minimizer(weight, params.v, vq.delay_bound)

    if method == "closed":
        if closed is None:
            raise ParameterError(f"cost {h.describe()} has no closed-form minimiser")
        r = closed
    elif method == "numeric" or closed is None:
        r = minimize_auxiliary(weight, params.v, vq.delay_bound, h, params.tolerance)
    elif method == "checked":
        numeric = minimize_auxiliary(weight, params.v, vq.delay_bound, h, params.tolerance)
        if abs(numeric - closed) > params.tolerance:
            logger.warning(
                "Auxiliary search disagrees with closed form: numeric=%.6g closed=%.6g (Y=%g)",
                numeric,
                closed,
                vq.y,
            )
        r = closed
    else:
        r = closed
    return replace(vq, r=min(max(r, 0.0), vq.delay_bound))


def lyapunov_snapshot(
    y: Sequence[float],
    y_next: Sequence[float],
    r: Sequence[float],
    frame_slots: int,
    params: ControlParams,
    costs: Optional[Sequence[CostSpec]] = None,
) -> LyapunovSnapshot:
    """Quadratic Lyapunov value, one-frame drift and the frame's penalty term."""
    if not len(y) == len(y_next) == len(r):
        raise ParameterError("y, y_next and r must have equal length")
    hs = costs or [params.cost] * len(r)
    current = 0.5 * sum(v * v for v in y)
    following = 0.5 * sum(v * v for v in y_next)
    penalty = params.v * sum(h(ri) for h, ri in zip(hs, r)) * frame_slots
    return LyapunovSnapshot(l=current, drift_estimate=following - current, penalty=penalty)


def expected_frame_length(lam: Sequence[float], mu: Sequence[float]) -> float:
    """Mean frame length ``1 / ((1 - sum lambda/mu) (1 - sum lambda))`` in slots."""
    if len(lam) != len(mu):
        raise ParameterError("lambda and mu must have equal length")
    load = sum(l_i / m_i for l_i, m_i in zip(lam, mu))
    arrivals = sum(lam)
    if load >= 1 or arrivals >= 1:
        raise StabilityRegionError(
            f"outside stability region: sum lambda/mu={load:.4g}, sum lambda={arrivals:.4g}"
        )
    return 1.0 / ((1.0 - load) * (1.0 - arrivals))


@dataclass(frozen=True)
class StabilityReport:
    terminal: Tuple[float, ...]
    slope: Tuple[float, ...]
    y_scale: float
    stable: Tuple[bool, ...]


class StabilityTracker:
    """Series of ``Y_i(K) / K`` over frames and its end-of-run verdict.

    A user counts as mean-rate stable when, over the last quarter of frames,
    the least-squares slope of ``Y_i(K) / K`` is not positive beyond noise and
    the terminal value is below ``threshold * y_scale``. ``y_scale`` is the
    largest one-frame change of any virtual queue in the run, floored at one:
    a queue that keeps growing by a steady amount per frame has ``Y / K``
    settle near that amount and fails, a bounded one decays towards zero.
    """

    def __init__(self, n_users: int, threshold: float = 1e-2):
        if not threshold > 0:
            raise ParameterError("stability threshold must be positive")
        self.threshold = threshold
        self.series = [array("d") for _ in range(n_users)]
        self.max_step = 0.0
        self._last = [0.0] * n_users

    def __len__(self) -> int:
        return len(self.series[0]) if self.series else 0

    def record(self, y: Sequence[float]) -> None:
        frames = len(self) + 1
        for user, (series, value) in enumerate(zip(self.series, y)):
            series.append(value / frames)
            step = abs(value - self._last[user])
            if step > self.max_step:
                self.max_step = step
            self._last[user] = value

    def report(self) -> StabilityReport:
        y_scale = max(self.max_step, 1.0)
        limit = self.threshold * y_scale
        terminal = []
        slopes = []
        stable = []
        for series in self.series:
            values = np.frombuffer(series, dtype=np.float64) if len(series) else np.zeros(1)
            tail = values[len(values) - max(len(values) // 4, 1) :]
            if len(tail) >= 2:
                slope = float(np.polyfit(np.arange(len(tail), dtype=np.float64), tail, 1)[0])
            else:
                slope = 0.0
            end = float(values[-1])
            # A rising trend still passes if its total rise over the window is negligible.
            flat = slope <= 0 or slope * len(tail) <= limit
            terminal.append(end)
            slopes.append(slope)
            stable.append(bool(flat and end < limit))
        return StabilityReport(tuple(terminal), tuple(slopes), y_scale, tuple(stable))


@dataclass
class DoicController:
    """Owns the virtual queues, targets and priority list of one run."""

    arrival_rates: Sequence[float]
    delay_bounds: Sequence[float]
    mu: Sequence[float]
    params: ControlParams = field(default_factory=ControlParams)
    costs: Optional[Sequence[CostSpec]] = None
    stability_threshold: float = 1e-2
    auxiliary_method: str = "auto"

    def __post_init__(self) -> None:
        n = len(self.arrival_rates)
        if n < 1 or len(self.delay_bounds) != n or len(self.mu) != n:
            raise ParameterError("controller needs matching per-user vectors for N >= 1 users")
        if self.costs is None:
            self.costs = [self.params.cost] * n
        self.mu = list(self.mu)
        self.queues: List[VirtualQueue] = [
            VirtualQueue.initial(d, lam) for d, lam in zip(self.delay_bounds, self.arrival_rates)
        ]
        self.priority = build_priority_list([0.0] * n, self.mu, 0)
        self.tracker = StabilityTracker(n, self.stability_threshold)
        self.frames_closed = 0
        self.dpp_sum = 0.0
        self.last_snapshot = LyapunovSnapshot(0.0, 0.0, 0.0)

    @property
    def y(self) -> List[float]:
        return [q.y for q in self.queues]

    @property
    def r(self) -> List[float]:
        return [q.r for q in self.queues]

    @property
    def mean_drift_plus_penalty(self) -> float:
        return self.dpp_sum / self.frames_closed if self.frames_closed else 0.0

    def close_frame(
        self,
        delay_sums: Sequence[float],
        arrival_counts: Sequence[int],
        frame_slots: int,
        mu: Optional[Sequence[float]] = None,
    ) -> PriorityList:
        """Update queues and targets for the closed frame and rank users for the next one.

        :param delay_sums: per user, total delay of the packets that arrived in the frame.
        :param arrival_counts: per user, number of packets that arrived in the frame.
        :param frame_slots: length of the closed frame.
        :param mu: refreshed service rates, if they are re-estimated per frame.
        """
        assert self.costs is not None
        before = self.queues
        # Targets read the pre-update queue; the update charges the old targets.
        targets = [
            update_auxiliary(q, self.params, h, self.auxiliary_method).r
            for q, h in zip(before, self.costs)
        ]
        updated = [
            replace(update_virtual_queue_totals(q, s, c), r=r)
            for q, s, c, r in zip(before, delay_sums, arrival_counts, targets)
        ]
        for user, q in enumerate(updated):
            if q.y < 0 or not 0 <= q.r <= q.delay_bound:
                raise InvariantViolation(
                    f"user {user}: virtual queue state y={q.y} r={q.r} out of range"
                )

        snapshot = lyapunov_snapshot(
            [q.y for q in before],
            [q.y for q in updated],
            [q.r for q in before],
            frame_slots,
            self.params,
            self.costs,
        )
        self.queues = updated
        self.frames_closed += 1
        self.dpp_sum += snapshot.drift_plus_penalty
        self.last_snapshot = snapshot
        self.tracker.record(self.y)
        if mu is not None:
            self.mu = list(mu)
        self.priority = build_priority_list(self.y, self.mu, self.frames_closed)
        if logger.isEnabledFor(logging.DEBUG):
            logger.debug(
                "Frame %d closed after %d slots: Y=%s r=%s order=%s L=%.6g",
                self.frames_closed - 1,
                frame_slots,
                self.y,
                self.r,
                self.priority.order,
                snapshot.l,
            )
        return self.priority
