import random

import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from autoserve.reservation import (
    DuplicateReservation,
    EmptyQueue,
    Reservation,
    ServiceQueue,
    priority_from_battery,
)
from oracles import OracleQueue


def res(ap, priority, t=0.0):
    return Reservation(ap_sys_id=ap, priority=priority, requested_at=t)


# --- enqueue -----------------------------------------------------------------


def test_enqueue_into_empty_queue_is_position_zero():
    q = ServiceQueue()
    assert q.enqueue(res(1, 60)) == 0


def test_enqueue_higher_priority_preempts():
    q = ServiceQueue()
    q.enqueue(res(1, 60, t=0))
    assert q.enqueue(res(2, 70, t=1)) == 0
    assert q.position_of(1) == 1


def test_enqueue_equal_priority_is_fifo():
    q = ServiceQueue()
    q.enqueue(res(1, 70, t=1))
    assert q.enqueue(res(2, 70, t=2)) == 1


def test_enqueue_duplicate_rejected():
    q = ServiceQueue()
    q.enqueue(res(1, 60))
    with pytest.raises(DuplicateReservation):
        q.enqueue(res(1, 90, t=5))


def test_equal_priority_equal_time_breaks_by_sys_id():
    q = ServiceQueue()
    q.enqueue(res(9, 50, t=3))
    assert q.enqueue(res(4, 50, t=3)) == 0


# --- cancel --------------------------------------------------------------------


def test_cancel_shifts_followers_up():
    q = ServiceQueue()
    q.enqueue(res(1, 90, t=0))
    q.enqueue(res(2, 80, t=0))
    q.enqueue(res(3, 70, t=0))
    assert q.cancel(2) is True
    assert q.position_of(1) == 0
    assert q.position_of(3) == 1


def test_cancel_on_empty_queue_is_false():
    assert ServiceQueue().cancel(1) is False


def test_cancel_twice_true_then_false():
    q = ServiceQueue()
    q.enqueue(res(1, 60))
    assert q.cancel(1) is True
    assert q.cancel(1) is False


# --- pop_next --------------------------------------------------------------------


def test_pop_returns_highest_priority():
    q = ServiceQueue()
    q.enqueue(res(1, 60, t=0))
    q.enqueue(res(2, 70, t=1))
    assert q.pop_next().ap_sys_id == 2
    assert q.reservations() == [res(1, 60, t=0)]


def test_pop_empty_raises():
    with pytest.raises(EmptyQueue):
        ServiceQueue().pop_next()


def test_pop_order_matches_sorted_oracle():
    rng = random.Random(11)
    q = ServiceQueue()
    oracle = OracleQueue()
    for ap in range(1, 41):
        priority, t = rng.randint(0, 100), rng.randint(0, 9)
        q.enqueue(res(ap, priority, t))
        oracle.enqueue(ap, priority, t)
    popped = [q.pop_next() for _ in range(40)]
    assert [r.ap_sys_id for r in popped] == [oracle.pop_next()[0] for _ in range(40)]
    priorities = [r.priority for r in popped]
    assert priorities == sorted(priorities, reverse=True)


# --- position_of ---------------------------------------------------------------


def test_position_of_reflects_order():
    q = ServiceQueue()
    q.enqueue(res(1, 60, t=0))
    q.enqueue(res(2, 70, t=1))
    assert q.position_of(1) == 1
    assert q.position_of(2) == 0


def test_position_of_unknown_is_none():
    assert ServiceQueue().position_of(42) is None


# --- properties vs oracle --------------------------------------------------------


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 2), st.integers(1, 30), st.integers(0, 100)), max_size=60))
def test_random_operation_sequences_match_oracle(ops):
    q = ServiceQueue()
    oracle = OracleQueue()
    clock = 0
    for op, ap, priority in ops:
        clock += 1
        if op == 0 and oracle.position_of(ap) is None:
            assert q.enqueue(res(ap, priority, clock)) == oracle.enqueue(ap, priority, clock)
        elif op == 1:
            assert q.cancel(ap) == oracle.cancel(ap)
        elif op == 2 and len(q) > 0:
            assert q.pop_next().ap_sys_id == oracle.pop_next()[0]
        assert [r.ap_sys_id for r in q.reservations()] == oracle.ordered_ids()
        for live in oracle.ordered_ids():
            assert q.position_of(live) == oracle.position_of(live)


def test_positions_are_gap_free_labels():
    rng = random.Random(3)
    q = ServiceQueue()
    for ap in range(1, 26):
        q.enqueue(res(ap, rng.randint(0, 100), rng.randint(0, 5)))
    positions = sorted(q.position_of(ap) for ap in range(1, 26))
    assert positions == list(range(25))


def test_enqueue_then_cancel_restores_prior_content():
    rng = random.Random(5)
    q = ServiceQueue()
    for ap in range(1, 16):
        q.enqueue(res(ap, rng.randint(0, 100), rng.randint(0, 5)))
    before = q.reservations()
    q.enqueue(res(99, 55, 2.5))
    q.cancel(99)
    assert q.reservations() == before


# --- battery-derived priority ------------------------------------------------------


def test_priority_examples():
    assert priority_from_battery(49.9) == 50
    assert priority_from_battery(30.0) == 70
    assert priority_from_battery(100.0) == 0
    assert priority_from_battery(0.0) == 100


def test_priority_clamped():
    assert priority_from_battery(150.0) == 0
    assert priority_from_battery(-20.0) == 100


@given(st.floats(0, 100), st.floats(0, 100))
def test_priority_monotone_in_battery(b1, b2):
    if b1 < b2:
        assert priority_from_battery(b1) >= priority_from_battery(b2)
