# ruff: noqa: S101, INP001, PLR2004
"""Arrivals, FIFO service, delay bookkeeping and frame boundaries."""

import numpy as np
import pytest

from cognitive_delay_scheduler.exceptions import NoPacketsServedError, ParameterError
from cognitive_delay_scheduler.queueing import (
    ArrivalStream,
    FramePhase,
    FrameState,
    Packet,
    ServiceModel,
    UserQueue,
    average_delay,
    generate_arrivals,
    packet_budget,
    serve_slot,
    update_frame,
)


def _queue_with(times, frame=0, warmup_until=0.0):
    queue = UserQueue(0, warmup_until)
    queue.enqueue(Packet(t, 0, frame) for t in times)
    return queue


def test_generate_arrivals_timestamps_inside_slot():
    rng = np.random.default_rng(1)
    for slot in range(200):
        packets = generate_arrivals(2.0, slot, rng, user=1)
        times = [p.arrival_time for p in packets]
        assert times == sorted(times)
        assert all(slot <= t < slot + 1 for t in times)
        assert all(p.user == 1 for p in packets)


def test_generate_arrivals_mean_count():
    rng = np.random.default_rng(7)
    stream = ArrivalStream(0.5, rng)
    total = sum(len(stream.draw(slot)) for slot in range(1_000_000))
    assert total / 1_000_000 == pytest.approx(0.5, abs=0.002)


def test_generate_arrivals_zero_and_negative_rate():
    rng = np.random.default_rng(0)
    assert generate_arrivals(0.0, 3, rng) == []
    with pytest.raises(ParameterError):
        generate_arrivals(-0.1, 3, rng)
    with pytest.raises(ParameterError):
        ArrivalStream(-0.1, rng)


def test_arrival_stream_is_deterministic():
    first = ArrivalStream(0.5, np.random.default_rng(3))
    second = ArrivalStream(0.5, np.random.default_rng(3))
    for slot in range(5000):
        assert first.draw(slot) == second.draw(slot)


def test_buffered_stream_stamps_packets_like_single_slot_draws():
    # One count per refill keeps both paths on the same draw order.
    stream = ArrivalStream(1.2, np.random.default_rng(8), user=1, chunk=1)
    rng = np.random.default_rng(8)
    for slot in range(2000):
        assert stream.draw(slot, frame=3) == generate_arrivals(1.2, slot, rng, user=1, frame=3)


def test_enqueue_rejects_out_of_order_packets():
    queue = _queue_with([1.5])
    with pytest.raises(ParameterError):
        queue.enqueue([Packet(1.2, 0)])


def test_serve_slot_floors_the_rate():
    queue = _queue_with([0.1 * i for i in range(10)])
    served, count = serve_slot(queue, 3.7, 1)
    assert count == 3
    assert [p.arrival_time for p in served] == pytest.approx([0.0, 0.1, 0.2])
    assert len(queue) == 7


def test_serve_slot_is_queue_limited():
    queue = _queue_with([0.25, 0.5])
    _, count = serve_slot(queue, 8.1, 1)
    assert count == 2
    assert len(queue) == 0


def test_delay_excludes_the_transmission_slot():
    queue = _queue_with([4.3])
    serve_slot(queue, 5.0, 6)
    assert queue.cumulative_delay == pytest.approx(1.7)
    assert average_delay(queue) == pytest.approx(1.7)


def test_packets_are_not_served_in_their_arrival_slot():
    queue = _queue_with([3.4])
    served, count = serve_slot(queue, 5.0, 3)
    assert served == []
    assert count == 0
    assert queue.servable(3) == 0
    assert queue.servable(4) == 1


def test_zero_budget_serves_nothing():
    queue = _queue_with([0.5])
    assert serve_slot(queue, 0.9, 1)[1] == 0
    assert len(queue) == 1


def test_average_delay():
    queue = _queue_with([1.0, 2.0])
    serve_slot(queue, 2.0, 3)
    assert average_delay(queue) == pytest.approx(1.5)


def test_average_delay_without_service_is_an_error():
    with pytest.raises(NoPacketsServedError):
        average_delay(UserQueue(0))


def test_fifo_order_is_kept():
    rng = np.random.default_rng(5)
    queue = UserQueue(0)
    stream = ArrivalStream(1.5, rng)
    last = -1.0
    for slot in range(2000):
        served, _ = serve_slot(queue, 1.0, slot)
        for packet in served:
            assert packet.arrival_time >= last
            last = packet.arrival_time
        queue.enqueue(stream.draw(slot))
    assert queue.arrivals_count == queue.total_served + len(queue)


def test_warmup_packets_are_not_counted():
    queue = _queue_with([0.5, 10.5], warmup_until=5.0)
    serve_slot(queue, 1.0, 1)
    serve_slot(queue, 1.0, 12)
    assert queue.total_served == 2
    assert queue.served_count == 1
    assert average_delay(queue) == pytest.approx(1.5)
    # The frame ledger is not affected by the warm-up filter.
    assert queue.frame_delay_sum == pytest.approx(2.0)


def test_frame_ledger_only_counts_current_frame_packets():
    queue = UserQueue(0)
    queue.open_frame(2)
    queue.enqueue([Packet(0.5, 0, 1), Packet(1.5, 0, 2), Packet(1.7, 0, 2)])
    assert queue.frame_arrivals == 2
    serve_slot(queue, 2.0, 2)
    assert queue.frame_served == 1
    assert queue.frame_delay_sum == pytest.approx(0.5)
    assert queue.pending_frame_delay(3.0) == pytest.approx(1.3)
    queue.open_frame(3)
    assert queue.frame_arrivals == 0
    assert queue.frame_delay_sum == 0.0


def test_packet_budget_floor_and_fractional():
    assert packet_budget(3.7) == 3
    assert packet_budget(0.4, ServiceModel.FLOOR) == 0
    with pytest.raises(ParameterError):
        packet_budget(2.3, ServiceModel.FRACTIONAL)
    rng = np.random.default_rng(9)
    budgets = [packet_budget(2.3, ServiceModel.FRACTIONAL, rng) for _ in range(100_000)]
    assert set(budgets) == {2, 3}
    assert np.mean(budgets) == pytest.approx(2.3, abs=0.01)


def test_system_starts_in_an_idle_frame():
    frame = FrameState()
    assert frame.frame_index == 0
    assert frame.phase is FramePhase.IDLE


def test_idle_then_busy_then_close():
    frame = FrameState()
    frame, closed = update_frame(frame, 0, 0)
    assert not closed
    frame, closed = update_frame(frame, 0, 1)
    assert frame.phase is FramePhase.IDLE
    # A packet arrives in slot 2: the idle period covers slots 0..2.
    frame, closed = update_frame(frame, 1, 2)
    assert not closed
    assert frame.phase is FramePhase.BUSY
    assert frame.idle_slots == 3
    frame, closed = update_frame(frame, 2, 3)
    assert not closed
    frame, closed = update_frame(frame, 0, 4)
    assert closed
    assert frame.slots_in_frame == 5
    assert frame.busy_slots == 2

    following = frame.next_frame(5, 0)
    assert following.frame_index == 1
    assert following.frame_start_slot == 5
    assert following.phase is FramePhase.IDLE


def test_forced_close(caplog):
    frame = FrameState()
    closed = False
    for slot in range(4):
        frame, closed = update_frame(frame, 5, slot, max_frame_slots=4)
        if closed:
            break
    assert closed
    assert frame.forced
    assert slot == 3
    assert "forced closed" in caplog.text
    # Packets are still waiting, so the next frame has no idle period.
    assert frame.next_frame(4, 5).phase is FramePhase.BUSY
