"""Per-user packet buffers, Poisson arrivals and frame boundaries.

Time is measured in slots. A packet arriving during slot ``t`` carries a
continuous timestamp in ``(t, t + 1)`` and may first be transmitted in slot
``t + 1``. Its delay is the wait up to the start of the slot in which it is
sent; the transmission slot itself is not counted.

A frame is one idle period (all buffers empty) followed by one busy period.
The frame closes at the end of the slot in which the system drains again.
"""

import logging
import math
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Deque, Iterable, List, NamedTuple, Optional, Tuple

import numpy as np

from .exceptions import NoPacketsServedError, ParameterError

__all__ = [
    "DEFAULT_MAX_FRAME_SLOTS",
    "ArrivalStream",
    "FramePhase",
    "FrameState",
    "Packet",
    "ServiceModel",
    "UserQueue",
    "average_delay",
    "generate_arrivals",
    "packet_budget",
    "serve_slot",
    "update_frame",
]

logger = logging.getLogger(__name__)

DEFAULT_MAX_FRAME_SLOTS = 100_000


class Packet(NamedTuple):
    arrival_time: float
    user: int
    # Frame in which the packet arrived; its delay is charged to that frame.
    frame: int = 0


class ServiceModel(str, Enum):
    FLOOR = "floor"
    FRACTIONAL = "fractional"


class FramePhase(str, Enum):
    IDLE = "idle"
    BUSY = "busy"


def _stamp_packets(slot: int, count: int, rng: np.random.Generator, user: int, frame: int) -> List[Packet]:
    """``count`` packets with sorted uniform timestamps inside ``slot``."""
    if count == 0:
        return []
    if count == 1:
        return [Packet(slot + float(rng.random()), user, frame)]
    offsets = np.sort(rng.random(count))
    return [Packet(slot + u, user, frame) for u in offsets.tolist()]


def generate_arrivals(
    rate: float,
    slot: int,
    rng: np.random.Generator,
    user: int = 0,
    frame: int = 0,
) -> List[Packet]:
    """Poisson(``rate``) packets with uniform timestamps inside ``slot``."""
    if rate < 0:
        raise ParameterError("arrival rate must be non-negative")
    if rate == 0:
        return []
    return _stamp_packets(slot, int(rng.poisson(rate)), rng, user, frame)


class ArrivalStream:
    """Buffered arrival source for one user.

    Per-slot counts are pre-drawn ``chunk`` slots at a time; timestamps are
    drawn only for slots that actually receive packets.
    """

    def __init__(self, rate: float, rng: np.random.Generator, user: int = 0, chunk: int = 8192):
        if rate < 0:
            raise ParameterError("arrival rate must be non-negative")
        self.rate = rate
        self.rng = rng
        self.user = user
        self.chunk = chunk
        self._counts: List[int] = []
        self._pos = 0

    def draw(self, slot: int, frame: int = 0) -> List[Packet]:
        if self.rate == 0:
            return []
        if self._pos >= len(self._counts):
            self._counts = self.rng.poisson(self.rate, self.chunk).tolist()
            self._pos = 0
        count = self._counts[self._pos]
        self._pos += 1
        return _stamp_packets(slot, count, self.rng, self.user, frame)


class UserQueue:
    """FIFO buffer of one secondary user plus its delay bookkeeping.

    ``cumulative_delay`` and ``served_count`` only cover packets that arrived
    at or after ``warmup_until``; they feed the reported average delay. The
    ``frame_*`` accumulators cover packets that arrived in the current frame
    and feed the virtual-queue update.
    """

    def __init__(self, user: int = 0, warmup_until: float = 0.0):
        self.user = user
        self.warmup_until = warmup_until
        self.buffer: Deque[Packet] = deque()
        self.cumulative_delay = 0.0
        self.served_count = 0
        self.total_served = 0
        self.arrivals_count = 0
        self.max_delay = 0.0
        self.frame_index = 0
        self.frame_delay_sum = 0.0
        self.frame_arrivals = 0
        self.frame_served = 0

    def __len__(self) -> int:
        return len(self.buffer)

    def enqueue(self, packets: Iterable[Packet]) -> int:
        added = 0
        for packet in packets:
            if self.buffer and packet.arrival_time < self.buffer[-1].arrival_time:
                raise ParameterError("packets must be enqueued in arrival order")
            self.buffer.append(packet)
            added += 1
            if packet.frame == self.frame_index:
                self.frame_arrivals += 1
        self.arrivals_count += added
        return added

    def servable(self, slot: int) -> int:
        """Number of buffered packets that arrived before ``slot`` began."""
        count = len(self.buffer)
        while count and self.buffer[count - 1].arrival_time >= slot:
            count -= 1
        return count

    def open_frame(self, frame_index: int) -> None:
        self.frame_index = frame_index
        self.frame_delay_sum = 0.0
        self.frame_arrivals = 0
        self.frame_served = 0

    def pending_frame_delay(self, now: float) -> float:
        """Delay so far of current-frame packets still waiting at ``now``."""
        return sum(now - p.arrival_time for p in self.buffer if p.frame == self.frame_index)


def packet_budget(
    rate_packets: float,
    model: ServiceModel = ServiceModel.FLOOR,
    rng: Optional[np.random.Generator] = None,
) -> int:
    """Whole packets a slot at ``rate_packets`` may carry.

    ``FLOOR`` truncates. ``FRACTIONAL`` rounds up with probability equal to
    the fractional part, so the mean matches the fluid approximation.
    """
    whole = math.floor(rate_packets)
    if model is ServiceModel.FLOOR:
        return whole
    if rng is None:
        raise ParameterError("fractional service needs a random stream")
    return whole + int(rng.random() < rate_packets - whole)


def serve_slot(queue: UserQueue, rate_packets: float, slot: int) -> Tuple[List[Packet], int]:
    """Transmit the first ``min(floor(rate_packets), servable)`` packets."""
    budget = math.floor(rate_packets)
    served: List[Packet] = []
    buffer = queue.buffer
    while len(served) < budget and buffer and buffer[0].arrival_time < slot:
        packet = buffer.popleft()
        served.append(packet)
        delay = slot - packet.arrival_time
        if delay > queue.max_delay:
            queue.max_delay = delay
        if packet.arrival_time >= queue.warmup_until:
            queue.cumulative_delay += delay
            queue.served_count += 1
        if packet.frame == queue.frame_index:
            queue.frame_delay_sum += delay
            queue.frame_served += 1
    queue.total_served += len(served)
    return served, len(served)


def average_delay(queue: UserQueue) -> float:
    """Mean delay, in slots, of the counted served packets."""
    if queue.served_count == 0:
        raise NoPacketsServedError(f"user {queue.user}: no packets served")
    return queue.cumulative_delay / queue.served_count


@dataclass
class FrameState:
    """Bookkeeping for the frame in progress.

    Mutated in place by :func:`update_frame`; a new instance is created for
    every frame through :meth:`next_frame`.
    """

    frame_index: int = 0
    phase: FramePhase = FramePhase.IDLE
    frame_start_slot: int = 0
    slots_in_frame: int = 0
    idle_slots: int = 0
    forced: bool = False

    @property
    def busy_slots(self) -> int:
        return self.slots_in_frame - self.idle_slots

    def next_frame(self, start_slot: int, total_queued: int) -> "FrameState":
        # After a forced close the system may still hold packets, in which
        # case the new frame has an empty idle period.
        phase = FramePhase.BUSY if total_queued > 0 else FramePhase.IDLE
        return FrameState(self.frame_index + 1, phase, start_slot)


def update_frame(
    frame: FrameState,
    total_queued: int,
    slot: int,
    max_frame_slots: int = DEFAULT_MAX_FRAME_SLOTS,
) -> Tuple[FrameState, bool]:
    """Advance the frame by one slot and report whether it closed.

    ``total_queued`` is the number of packets buffered across all users at
    the end of ``slot``, after arrivals and service.
    """
    frame.slots_in_frame += 1
    if frame.phase is FramePhase.IDLE:
        frame.idle_slots += 1
        if total_queued > 0:
            frame.phase = FramePhase.BUSY
    elif total_queued == 0:
        return frame, True

    if frame.slots_in_frame >= max_frame_slots:
        frame.forced = True
        logger.warning(
            "Frame %d forced closed at slot %d after %d slots (%d packets still queued)",
            frame.frame_index,
            slot,
            frame.slots_in_frame,
            total_queued,
        )
        return frame, True
    return frame, False
