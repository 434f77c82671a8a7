"""Slot-level simulation of the uplink and sweeps over arrival rate or V.

One slot of :class:`Simulation` does, in this order:

1. pick the highest-priority user with buffered packets;
2. draw its channel, set the interference-safe power and the rate;
3. serve up to the rate's packet budget from the head of its buffer;
4. record the interference caused at the primary receiver;
5. append the slot's Poisson arrivals of every user;
6. advance the frame; on a close, update the controller and re-rank users.

Packets arriving during slot ``t`` are only appended after step 3, so they
are first eligible in slot ``t + 1``.
"""

import logging
import multiprocessing
import os
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

from .channel import (
    ChannelSampler,
    FadingProfile,
    RadioParams,
    allocate_power,
    estimate_service_rate,
    interference_within_cap,
    transmission_rate,
)
from .doic import ControlParams, DoicController, expected_frame_length, schedule_candidates
from .exceptions import (
    InvariantViolation,
    NoPacketsServedError,
    ParameterError,
    StabilityRegionError,
)
from .log import configure_logging
from .metrics import CostSpec
from .queueing import (
    DEFAULT_MAX_FRAME_SLOTS,
    ArrivalStream,
    FrameState,
    ServiceModel,
    UserQueue,
    average_delay,
    packet_budget,
    serve_slot,
    update_frame,
)
from .streams import Purpose, StreamFactory, replicate_seed
from .trace import FrameTrace, PacketTrace, open_traces

__all__ = [
    "CsiMode",
    "MuMode",
    "Scenario",
    "SimOptions",
    "SimReport",
    "Simulation",
    "StarvationPolicy",
    "SweepAxis",
    "SweepPoint",
    "UserSpec",
    "point_scenario",
    "run",
    "sweep",
]

logger = logging.getLogger(__name__)

DEFAULT_HORIZON_SLOTS = 2_000_000
DEFAULT_MU_SAMPLES = 1_000_000
IMPERFECT_CSI_BACKOFF = 1.1
IMPERFECT_CSI_ERROR_BOUND = 0.1


class CsiMode(str, Enum):
    PERFECT = "perfect_csi"
    IMPERFECT = "imperfect_csi"


class StarvationPolicy(str, Enum):
    # The top user keeps the slot even when its budget rounds down to zero.
    HOLD = "hold"
    # The slot passes down the list to the first user that can send a packet.
    SKIP = "skip"


class MuMode(str, Enum):
    OFFLINE = "offline"
    PER_FRAME = "per_frame"


class SweepAxis(str, Enum):
    LAMBDA = "lambda"
    V = "v"


@dataclass(frozen=True)
class UserSpec:
    profile: FadingProfile
    arrival_rate: float = 0.5
    delay_bound: float = 3.0
    cost: Optional[CostSpec] = None

    def __post_init__(self) -> None:
        if not self.arrival_rate >= 0:
            raise ParameterError("arrival_rate must be non-negative")
        if not self.delay_bound > 0:
            raise ParameterError("delay_bound must be positive")


@dataclass(frozen=True)
class SimOptions:
    """Knobs of the slot loop that are not part of the radio or controller model."""

    max_frame_slots: int = DEFAULT_MAX_FRAME_SLOTS
    warmup_fraction: float = 0.1
    service_model: ServiceModel = ServiceModel.FLOOR
    starvation_policy: StarvationPolicy = StarvationPolicy.HOLD
    mu_mode: MuMode = MuMode.OFFLINE
    mu_samples: int = DEFAULT_MU_SAMPLES
    stability_threshold: float = 1e-2
    auxiliary_method: str = "auto"

    def __post_init__(self) -> None:
        object.__setattr__(self, "service_model", ServiceModel(self.service_model))
        object.__setattr__(self, "starvation_policy", StarvationPolicy(self.starvation_policy))
        object.__setattr__(self, "mu_mode", MuMode(self.mu_mode))
        if self.max_frame_slots < 1:
            raise ParameterError("max_frame_slots must be positive")
        if not 0 <= self.warmup_fraction < 1:
            raise ParameterError("warmup_fraction must lie in [0, 1)")
        if not self.stability_threshold > 0:
            raise ParameterError("stability_threshold must be positive")


@dataclass(frozen=True)
class Scenario:
    users: Tuple[UserSpec, ...]
    radio: RadioParams = field(default_factory=RadioParams)
    control: ControlParams = field(default_factory=ControlParams)
    horizon_slots: int = DEFAULT_HORIZON_SLOTS
    seed: int = 1
    mode: CsiMode = CsiMode.PERFECT
    options: SimOptions = field(default_factory=SimOptions)

    def __post_init__(self) -> None:
        object.__setattr__(self, "users", tuple(self.users))
        object.__setattr__(self, "mode", CsiMode(self.mode))
        if not self.users:
            raise ParameterError("a scenario needs at least one user")
        if self.horizon_slots < 1:
            raise ParameterError("horizon_slots must be positive")
        if self.seed < 0:
            raise ParameterError("seed must be non-negative")
        for index, user in enumerate(self.users):
            if not user.profile.direct_gain_floor > 0:
                raise ParameterError(f"users[{index}]: direct_gain_floor must be positive")
        if self.mode is CsiMode.PERFECT and not self.radio.perfect_csi:
            raise ParameterError("perfect_csi mode requires csi_error_bound = 0")
        if self.mode is CsiMode.IMPERFECT and self.radio.perfect_csi:
            raise ParameterError("imperfect_csi mode requires csi_error_bound > 0")

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def costs(self) -> List[CostSpec]:
        return [u.cost or self.control.cost for u in self.users]

    def with_arrival_rate(self, rate: float) -> "Scenario":
        return replace(self, users=tuple(replace(u, arrival_rate=rate) for u in self.users))

    def with_v(self, v: float) -> "Scenario":
        return replace(self, control=replace(self.control, v=v))

    def with_delay_bounds(self, bounds: Sequence[float]) -> "Scenario":
        if len(bounds) != self.n_users:
            raise ParameterError("one delay bound per user is required")
        return replace(
            self, users=tuple(replace(u, delay_bound=d) for u, d in zip(self.users, bounds))
        )

    def with_seed(self, seed: int) -> "Scenario":
        return replace(self, seed=seed)

    def with_horizon(self, horizon_slots: int) -> "Scenario":
        return replace(self, horizon_slots=horizon_slots)

    def imperfect(
        self,
        backoff: float = IMPERFECT_CSI_BACKOFF,
        error_bound: float = IMPERFECT_CSI_ERROR_BOUND,
    ) -> "Scenario":
        radio = replace(self.radio, csi_backoff=backoff, csi_error_bound=error_bound)
        return replace(self, radio=radio, mode=CsiMode.IMPERFECT)


@dataclass(frozen=True)
class SimReport:
    """Outcome of one run. Delays are in slots."""

    per_user_delay: Tuple[float, ...]
    per_user_cost: Tuple[float, ...]
    sum_cost: float
    max_interference_seen: float
    delay_bound_violations: Tuple[bool, ...]
    mean_frame_length: float
    y_over_k_terminal: Tuple[float, ...]
    slots_simulated: int
    seed: int = 0
    expected_frame_length: Optional[float] = None
    y_over_k_slope: Tuple[float, ...] = ()
    mean_rate_stable: Tuple[bool, ...] = ()
    served: Tuple[int, ...] = ()
    residual: Tuple[int, ...] = ()
    max_delay: Tuple[float, ...] = ()
    frames: int = 0
    forced_frames: int = 0
    mu: Tuple[float, ...] = ()
    final_y: Tuple[float, ...] = ()
    final_r: Tuple[float, ...] = ()
    mean_drift_plus_penalty: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


class Simulation:
    """One seeded run of a :class:`Scenario`."""

    def __init__(
        self,
        scenario: Scenario,
        packet_trace: Optional[PacketTrace] = None,
        frame_trace: Optional[FrameTrace] = None,
    ):
        self.scenario = scenario
        self.packet_trace = packet_trace
        self.frame_trace = frame_trace
        sc = scenario
        n = sc.n_users
        streams = StreamFactory(sc.seed)
        warmup_until = sc.options.warmup_fraction * sc.horizon_slots

        self.queues = [UserQueue(i, warmup_until) for i in range(n)]
        self.arrivals = [
            ArrivalStream(u.arrival_rate, streams.get(i, Purpose.ARRIVALS), i)
            for i, u in enumerate(sc.users)
        ]
        imperfect = sc.mode is CsiMode.IMPERFECT
        self.channels = [
            ChannelSampler(
                u.profile,
                sc.radio,
                streams.get(i, Purpose.CHANNEL),
                streams.get(i, Purpose.CSI) if imperfect else None,
            )
            for i, u in enumerate(sc.users)
        ]
        self.service_rngs = [streams.get(i, Purpose.SERVICE) for i in range(n)]
        self.mu = [
            estimate_service_rate(
                u.profile,
                sc.radio,
                sc.options.mu_samples,
                streams.get(i, Purpose.SERVICE_RATE),
                streams.get(i, Purpose.SERVICE_RATE_CSI) if imperfect else None,
            )
            for i, u in enumerate(sc.users)
        ]
        logger.info("Service rates mu=%s (seed %d)", [round(m, 6) for m in self.mu], sc.seed)
        self.controller = DoicController(
            arrival_rates=[u.arrival_rate for u in sc.users],
            delay_bounds=[u.delay_bound for u in sc.users],
            mu=self.mu,
            params=sc.control,
            costs=sc.costs,
            stability_threshold=sc.options.stability_threshold,
            auxiliary_method=sc.options.auxiliary_method,
        )
        self.frame = FrameState()
        self.max_interference = 0.0
        self.frames_closed = 0
        self.forced_frames = 0
        self.closed_frame_slots = 0
        self._reciprocal_sum = [0.0] * n
        self._reciprocal_count = [0] * n

    def _transmit(self, slot: int) -> None:
        """Steps 1 to 4 of the slot."""
        sc = self.scenario
        lengths = [len(q) for q in self.queues]
        chosen = None
        for user in schedule_candidates(self.controller.priority, lengths):
            gamma, g, g_hat, gamma_hat = self.channels[user].next_gains()
            power = allocate_power(g_hat, sc.radio)
            rate = transmission_rate(power, gamma_hat, sc.radio)
            budget = packet_budget(rate, sc.options.service_model, self.service_rngs[user])
            if chosen is None:
                chosen = (user, power, g, rate, budget)
            if budget > 0 or sc.options.starvation_policy is StarvationPolicy.HOLD:
                chosen = (user, power, g, rate, budget)
                break
        if chosen is None:
            return

        user, power, g, rate, budget = chosen
        served, _ = serve_slot(self.queues[user], budget, slot)
        if self.packet_trace is not None:
            for packet in served:
                self.packet_trace.record(user, packet.arrival_time, slot)

        interference = power * g
        if interference > self.max_interference:
            self.max_interference = interference
        if not interference_within_cap(interference, sc.radio):
            raise InvariantViolation(
                f"slot {slot}: user {user} caused interference {interference:.6g} "
                f"above the cap {sc.radio.interference_cap:g}"
            )
        self._reciprocal_sum[user] += 1.0 / rate
        self._reciprocal_count[user] += 1

    def _refreshed_mu(self) -> Optional[List[float]]:
        if self.scenario.options.mu_mode is MuMode.OFFLINE:
            return None
        return [
            count / total if count else offline
            for count, total, offline in zip(
                self._reciprocal_count, self._reciprocal_sum, self.mu
            )
        ]

    def _close_frame(self, slot: int) -> None:
        frame = self.frame
        if frame.forced:
            now = float(slot + 1)
            delay_sums = [q.frame_delay_sum + q.pending_frame_delay(now) for q in self.queues]
            self.forced_frames += 1
            logger.warning(
                "Frame %d: charging delays-so-far of %d unserved packets as a lower bound",
                frame.frame_index,
                sum(len(q) for q in self.queues),
            )
        else:
            delay_sums = [q.frame_delay_sum for q in self.queues]
        counts = [q.frame_arrivals for q in self.queues]

        plist = self.controller.close_frame(
            delay_sums, counts, frame.slots_in_frame, self._refreshed_mu()
        )
        self.frames_closed += 1
        self.closed_frame_slots += frame.slots_in_frame
        if self.frame_trace is not None:
            self.frame_trace.record(
                frame.frame_index,
                frame.slots_in_frame,
                self.controller.y,
                self.controller.r,
                plist.order,
                0.5 * sum(y * y for y in self.controller.y),
            )

        for q in self.queues:
            q.open_frame(frame.frame_index + 1)
        self.frame = frame.next_frame(slot + 1, sum(len(q) for q in self.queues))

    def run(self) -> SimReport:
        sc = self.scenario
        max_frame_slots = sc.options.max_frame_slots
        for slot in range(sc.horizon_slots):
            self._transmit(slot)
            frame_index = self.frame.frame_index
            total = 0
            for queue, source in zip(self.queues, self.arrivals):
                queue.enqueue(source.draw(slot, frame_index))
                total += len(queue)
            self.frame, closed = update_frame(self.frame, total, slot, max_frame_slots)
            if closed:
                self._close_frame(slot)
        return self._report()

    def _report(self) -> SimReport:
        sc = self.scenario
        delays = []
        for queue in self.queues:
            try:
                delays.append(average_delay(queue))
            except NoPacketsServedError:
                logger.info("User %d served no counted packets; reporting zero delay", queue.user)
                delays.append(0.0)
        costs = tuple(h(w) for h, w in zip(sc.costs, delays))

        mean_frame = self.closed_frame_slots / self.frames_closed if self.frames_closed else 0.0
        lam = [u.arrival_rate for u in sc.users]
        try:
            expected: Optional[float] = expected_frame_length(lam, self.mu)
        except StabilityRegionError as exc:
            logger.warning("No frame-length reference: %s", exc)
            expected = None
        if expected is not None and mean_frame > 0:
            logger.info(
                "Mean frame length %.4g slots, reference %.4g (ratio %.3f)",
                mean_frame,
                expected,
                mean_frame / expected,
            )

        stability = self.controller.tracker.report()
        report = SimReport(
            per_user_delay=tuple(delays),
            per_user_cost=costs,
            sum_cost=sum(costs),
            max_interference_seen=self.max_interference,
            delay_bound_violations=tuple(w > u.delay_bound for w, u in zip(delays, sc.users)),
            mean_frame_length=mean_frame,
            y_over_k_terminal=stability.terminal,
            slots_simulated=sc.horizon_slots,
            seed=sc.seed,
            expected_frame_length=expected,
            y_over_k_slope=stability.slope,
            mean_rate_stable=stability.stable,
            served=tuple(q.total_served for q in self.queues),
            residual=tuple(len(q) for q in self.queues),
            max_delay=tuple(q.max_delay for q in self.queues),
            frames=self.frames_closed,
            forced_frames=self.forced_frames,
            mu=tuple(self.mu),
            final_y=tuple(self.controller.y),
            final_r=tuple(self.controller.r),
            mean_drift_plus_penalty=self.controller.mean_drift_plus_penalty,
        )
        logger.info(
            "Run done: seed=%d slots=%d delays=%s sum_cost=%.6g frames=%d",
            sc.seed,
            sc.horizon_slots,
            [round(w, 4) for w in delays],
            report.sum_cost,
            report.frames,
        )
        return report


def run(scenario: Scenario, trace_dir: Optional[str] = None, label: str = "run") -> SimReport:
    """Run ``scenario`` once, writing packet and frame traces when ``trace_dir`` is given."""
    if trace_dir is None:
        return Simulation(scenario).run()
    packets, frames = open_traces(trace_dir, label, scenario.n_users)
    with packets, frames:
        return Simulation(scenario, packets, frames).run()


@dataclass(frozen=True)
class SweepPoint:
    axis: SweepAxis
    value: float
    replicate: int
    seed: int
    report: Optional[SimReport]
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.report is not None


def point_scenario(base: Scenario, axis: SweepAxis, value: float, replicate: int) -> Scenario:
    """The scenario of one grid point; replicate seeds are shared across the grid."""
    scenario = base.with_arrival_rate(value) if axis is SweepAxis.LAMBDA else base.with_v(value)
    return scenario.with_seed(replicate_seed(base.seed, replicate))


_Task = Tuple[Scenario, SweepAxis, float, int, Optional[str], str]


def _run_point(task: _Task) -> SweepPoint:
    base, axis, value, replicate, trace_dir, label = task
    seed = replicate_seed(base.seed, replicate)
    try:
        scenario = point_scenario(base, axis, value, replicate)
        report = run(scenario, trace_dir=trace_dir, label=label)
    except Exception as exc:
        logger.exception("Sweep point %s=%g replicate %d failed", axis.value, value, replicate)
        return SweepPoint(axis, value, replicate, seed, None, f"{type(exc).__name__}: {exc}")
    return SweepPoint(axis, value, replicate, seed, report)


def _init_worker(log_file: Optional[str], log_level: str, debug: bool) -> None:
    configure_logging(log_file, level=log_level, debug=debug)


def sweep(
    base: Scenario,
    axis: SweepAxis,
    values: Sequence[float],
    replicates: int = 1,
    workers: int = 1,
    trace_dir: Optional[str] = None,
    label: str = "sweep",
    log_file: Optional[str] = None,
    log_level: str = "INFO",
    debug: bool = False,
) -> List[SweepPoint]:
    """Run every (value, replicate) pair; results come back in input order.

    A failing point is logged and recorded with its error; the others still run.
    """
    axis = SweepAxis(axis)
    if not values:
        raise ParameterError("sweep needs at least one value")
    if replicates < 1:
        raise ParameterError("replicates must be at least 1")
    if workers < 1:
        raise ParameterError("workers must be at least 1")

    tasks: List[_Task] = [
        (base, axis, float(value), rep, trace_dir, f"{label}_{axis.value}{value:g}_r{rep}")
        for value in values
        for rep in range(replicates)
    ]
    logger.info(
        "Sweep %s over %s=%s, %d replicate(s), %d worker(s)",
        label,
        axis.value,
        list(values),
        replicates,
        workers,
    )
    if workers == 1 or len(tasks) == 1:
        points = [_run_point(task) for task in tasks]
    else:
        with multiprocessing.Pool(
            min(workers, len(tasks), os.cpu_count() or 1),
            initializer=_init_worker,
            initargs=(log_file, log_level, debug),
        ) as pool:
            points = list(pool.imap(_run_point, tasks))
    failed = sum(1 for p in points if not p.ok)
    if failed:
        logger.error("Sweep %s: %d of %d points failed", label, failed, len(points))
    return points
