import pytest

from autoserve.ap_node import (
    AP_TRANSITIONS,
    ApNode,
    CancelAndRetry,
    ConfirmationForWrongAp,
    Keep,
)
from autoserve.lp_node import LpNode, ProtocolStateError
from autoserve.reservation import priority_from_battery
from autoserve.wire import (
    ApReservationDecision,
    ExtendedHeartbeat,
    LpReservationConfirmation,
    NodeState,
    ReservationAction,
    ServiceReservationRequest,
    SystemStateUpdate,
)

ROSTER = [(1, (0.0, 0.0)), (2, (100.0, 0.0))]


def make_ap(ap_id=7, roster=ROSTER, **kwargs):
    return ApNode(ap_id, roster, **kwargs)


def conf(position, ap=7):
    return LpReservationConfirmation(target_ap_sys_id=ap, queue_position=position)


def update(state):
    return SystemStateUpdate(state=state)


def tick(ap, now, battery, pos=(0.0, 0.0)):
    return ap.tick(now, battery, pos)


def requests_in(outbound):
    return [o for o in outbound if isinstance(o.msg, ServiceReservationRequest)]


def cancels_in(outbound):
    return [
        o
        for o in outbound
        if isinstance(o.msg, ApReservationDecision)
        and o.msg.decision is ReservationAction.CANCEL
    ]


def check_reservation_invariant(ap):
    holding = ap.state in (
        NodeState.RESERVED_WAITING,
        NodeState.BOARDING,
        NodeState.LANDED,
        NodeState.BEING_SERVICED,
    )
    assert (ap.current_reservation is not None) == holding


# --- request policy -------------------------------------------------------------


def test_below_threshold_requests_nearest_platform():
    ap = make_ap()
    out = tick(ap, 0.0, battery=49.9, pos=(10.0, 0.0))
    reqs = requests_in(out)
    assert len(reqs) == 1
    assert reqs[0].dest_sys_id == 1  # nearest of the two
    assert reqs[0].msg == ServiceReservationRequest(priority=50, target_lp_sys_id=1)
    assert ap.state is NodeState.REQUEST_PENDING


def test_above_threshold_heartbeat_only():
    ap = make_ap()
    out = tick(ap, 0.0, battery=80.0)
    assert ap.state is NodeState.OPERATING
    assert len(out) == 1 and isinstance(out[0].msg, ExtendedHeartbeat)


def test_priority_formula_at_thirty_percent():
    ap = make_ap()
    out = tick(ap, 0.0, battery=30.0)
    assert requests_in(out)[0].msg.priority == 70


def test_exact_threshold_does_not_request():
    ap = make_ap()
    tick(ap, 0.0, battery=50.0)
    assert ap.state is NodeState.OPERATING


def test_heartbeat_every_second_in_all_states():
    ap = make_ap()
    beats = []
    for now in (0.0, 0.4, 1.0, 2.0):
        out = tick(ap, now, battery=90.0)
        beats.extend(o for o in out if isinstance(o.msg, ExtendedHeartbeat))
    assert len(beats) == 3
    assert all(o.dest_sys_id is None for o in beats)  # broadcast


def test_priority_monotone_non_increasing_in_battery():
    values = [priority_from_battery(b / 10) for b in range(0, 1001)]
    assert values == sorted(values, reverse=True)


# --- confirmation evaluation --------------------------------------------------------


def test_position_zero_adjacent_keeps_and_boards():
    ap = make_ap()
    tick(ap, 0.0, battery=49.0, pos=(0.0, 0.0))
    assert isinstance(ap.evaluate_confirmation(conf(0), 1.0), Keep)
    out = ap.handle_message(conf(0), 1, 1.0)
    assert out == []
    assert ap.state is NodeState.BOARDING
    assert ap.current_reservation == (1, 0)
    check_reservation_invariant(ap)


def test_deep_queue_position_exceeds_margin_and_retries():
    ap = make_ap()
    tick(ap, 0.0, battery=49.5, pos=(0.0, 0.0))
    ap.battery_pct = 50.0  # position 4 needs 480 s; budget is 175 s
    verdict = ap.evaluate_confirmation(conf(4), 1.0)
    assert verdict == CancelAndRetry(next_lp_sys_id=2)


def test_full_battery_accepts_position_one():
    ap = make_ap()
    tick(ap, 0.0, battery=49.0, pos=(0.0, 0.0))
    ap.battery_pct = 100.0
    assert isinstance(ap.evaluate_confirmation(conf(1), 1.0), Keep)


def test_travel_time_counts_against_margin():
    ap = make_ap()
    tick(ap, 0.0, battery=20.0, pos=(50.0, 0.0))
    # position 0 but 50 m away at 0.3 m/s is 167 s > (20-15)/0.2 = 25 s
    verdict = ap.evaluate_confirmation(conf(0), 1.0)
    assert isinstance(verdict, CancelAndRetry)


def test_confirmation_for_wrong_vehicle_raises_on_evaluate():
    ap = make_ap()
    tick(ap, 0.0, battery=49.0)
    with pytest.raises(ConfirmationForWrongAp):
        ap.evaluate_confirmation(conf(0, ap=9), 1.0)


def test_confirmation_for_wrong_vehicle_dropped_by_handler():
    ap = make_ap()
    tick(ap, 0.0, battery=49.0)
    assert ap.handle_message(conf(0, ap=9), 1, 1.0) == []
    assert ap.state is NodeState.REQUEST_PENDING


def test_keep_is_monotone_in_queue_position():
    ap = make_ap()
    tick(ap, 0.0, battery=49.0, pos=(0.0, 0.0))
    ap.battery_pct = 49.0
    keeps = [isinstance(ap.evaluate_confirmation(conf(p), 1.0), Keep) for p in range(6)]
    # Once a position is rejected, every deeper position is rejected too.
    assert keeps == sorted(keeps, reverse=True)


def test_cancel_emitted_before_replacement_request():
    ap = make_ap()
    tick(ap, 0.0, battery=49.5, pos=(0.0, 0.0))
    ap.battery_pct = 50.0
    out = ap.handle_message(conf(4), 1, 1.0)
    assert len(out) == 2
    assert cancels_in(out[:1]) and out[0].dest_sys_id == 1
    assert requests_in(out[1:]) and out[1].dest_sys_id == 2
    assert ap.state is NodeState.REQUEST_PENDING
    check_reservation_invariant(ap)


def test_accepting_nonzero_position_sends_keep_and_waits():
    ap = make_ap()
    tick(ap, 0.0, battery=49.0, pos=(0.0, 0.0))
    out = ap.handle_message(conf(1), 1, 1.0)
    assert ap.state is NodeState.RESERVED_WAITING
    assert ap.current_reservation == (1, 1)
    assert len(out) == 1
    assert out[0].msg.decision is ReservationAction.KEEP
    # Later clearance boards.
    ap.handle_message(conf(0), 1, 5.0)
    assert ap.state is NodeState.BOARDING


def test_exhausted_alternatives_keeps_single_platform_offer():
    ap = make_ap(roster=[(1, (0.0, 0.0))])
    tick(ap, 0.0, battery=49.5, pos=(0.0, 0.0))
    ap.battery_pct = 50.0
    out = ap.handle_message(conf(4), 1, 1.0)
    assert out == [] or not cancels_in(out)
    assert ap.state is NodeState.RESERVED_WAITING
    assert ap.current_reservation == (1, 4)


def test_exhausted_alternatives_settles_on_best_offer():
    ap = make_ap()
    tick(ap, 0.0, battery=49.5, pos=(0.0, 0.0))
    ap.battery_pct = 50.0
    first = ap.handle_message(conf(4), 1, 1.0)  # reject, retry LP 2
    assert requests_in(first)[0].dest_sys_id == 2
    second = ap.handle_message(conf(6), 2, 2.0)  # worse; both tried, LP1 was best
    assert cancels_in(second)[0].dest_sys_id == 2
    assert requests_in(second)[0].dest_sys_id == 1
    final = ap.handle_message(conf(5), 1, 3.0)  # settling: accepted regardless
    assert ap.state is NodeState.RESERVED_WAITING
    assert ap.current_reservation == (1, 5)
    assert final[0].msg.decision is ReservationAction.KEEP


def test_stale_clearance_from_cancelled_platform_ignored():
    ap = make_ap()
    tick(ap, 0.0, battery=49.5, pos=(0.0, 0.0))
    ap.battery_pct = 50.0
    ap.handle_message(conf(4), 1, 1.0)  # cancelled LP 1, now pending at LP 2
    assert ap.handle_message(conf(0), 1, 2.0) == []
    assert ap.state is NodeState.REQUEST_PENDING


def test_unsolicited_clearance_from_fresh_platform_is_honored():
    ap = make_ap()
    tick(ap, 0.0, battery=49.0, pos=(0.0, 0.0))
    ap.handle_message(conf(1), 1, 1.0)  # reserved at LP 1
    assert ap.state is NodeState.RESERVED_WAITING
    out = ap.handle_message(conf(0), 2, 2.0)  # LP 2 reserved itself for us
    assert cancels_in(out) and cancels_in(out)[0].dest_sys_id == 1
    assert ap.state is NodeState.BOARDING
    assert ap.current_reservation == (2, 0)


def test_clearance_while_operating_is_ignored():
    ap = make_ap()
    assert ap.handle_message(conf(0), 1, 0.0) == []
    assert ap.state is NodeState.OPERATING


# --- state updates ---------------------------------------------------------------------


def _reserve_and_land(ap, now=0.0):
    tick(ap, now, battery=49.0, pos=(0.0, 0.0))
    ap.handle_message(conf(0), 1, now + 1)
    out = ap.notify_arrival(now + 2)
    assert out[0].msg == update(NodeState.LANDED)
    ap.handle_message(update(NodeState.SERVICING), 1, now + 3)
    assert ap.state is NodeState.BEING_SERVICED


def test_service_complete_starts_departure():
    ap = make_ap()
    _reserve_and_land(ap)
    ap.handle_message(update(NodeState.SERVICE_COMPLETE), 1, 10.0)
    assert ap.state is NodeState.DEPARTING
    assert ap.current_reservation is None
    check_reservation_invariant(ap)


def test_service_complete_while_operating_ignored():
    ap = make_ap()
    assert ap.handle_message(update(NodeState.SERVICE_COMPLETE), 1, 0.0) == []
    assert ap.state is NodeState.OPERATING


def test_departure_notifies_platform_after_clearing():
    ap = make_ap(departure_clear_s=1.0)
    _reserve_and_land(ap)
    ap.handle_message(update(NodeState.SERVICE_COMPLETE), 1, 10.0)
    out = tick(ap, 11.0, battery=100.0)
    departed = [
        o for o in out if isinstance(o.msg, SystemStateUpdate) and o.msg.state is NodeState.DEPARTED
    ]
    assert departed and departed[0].dest_sys_id == 1
    assert ap.state is NodeState.OPERATING


def test_arrival_outside_boarding_raises():
    ap = make_ap()
    with pytest.raises(ProtocolStateError):
        ap.notify_arrival(0.0)


def test_illegal_transition_rejected():
    ap = make_ap()
    with pytest.raises(ProtocolStateError):
        ap._transition(NodeState.LANDED)


def test_transition_table_has_no_dead_ends():
    for targets in AP_TRANSITIONS.values():
        assert targets


def test_random_message_storm_never_faults_the_vehicle():
    import random

    rng = random.Random(17)
    ap = make_ap()
    now = 0.0
    battery = 100.0
    for _ in range(3000):
        now += rng.random()
        roll = rng.randrange(6)
        sender = rng.choice((1, 2, 9))
        if roll == 0:
            ap.handle_message(conf(rng.randrange(4), ap=rng.choice((7, 9))), sender, now)
        elif roll == 1:
            ap.handle_message(update(NodeState(rng.randrange(14))), sender, now)
        elif roll == 2 and ap.state is NodeState.BOARDING:
            ap.notify_arrival(now)
        elif roll == 3:
            battery = max(0.0, battery - rng.uniform(0, 2))
            tick(ap, now, battery=battery)
        else:
            tick(ap, now, battery=battery)
        check_reservation_invariant(ap)


# --- full exchange against a real landing platform ---------------------------------------


def test_full_service_cycle_returns_both_machines_to_initial_states():
    lp = LpNode(
        1,
        (0.0, 0.0),
        service_duration_s=5.0,
        alignment_duration_s=2.0,
    )
    ap = make_ap(roster=[(1, (0.0, 0.0))])
    inbox: list = []  # (dest, src, msg)

    def post(src, outbound):
        for o in outbound:
            if o.dest_sys_id is not None:
                inbox.append((o.dest_sys_id, src, o.msg))

    now = 0.0
    battery = 49.5
    post(ap.sys_id, tick(ap, now, battery=battery, pos=(0.0, 0.0)))
    transitions = []
    for _ in range(200):
        now += 1.0
        while inbox:
            dest, src, msg = inbox.pop(0)
            node = lp if dest == lp.sys_id else ap
            post(dest, node.handle_message(msg, src, now))
        if ap.state is NodeState.BOARDING:
            post(ap.sys_id, ap.notify_arrival(now))
        post(ap.sys_id, ap.tick(now, battery, (0.0, 0.0)))
        post(lp.sys_id, lp.tick(now))
        transitions.extend(ap.drain_transitions())
        transitions.extend(lp.drain_transitions())
        if (NodeState.BEING_SERVICED, NodeState.DEPARTING) in transitions:
            battery = 100.0  # pod swapped
        if ap.state is NodeState.OPERATING and lp.state is NodeState.IDLE and transitions:
            break
    assert ap.state is NodeState.OPERATING
    assert lp.state is NodeState.IDLE
    assert lp.services_completed == 1
    assert len(lp.queue) == 0
    assert ap.current_reservation is None
    # Both machines walked the full loop.
    assert (NodeState.SERVICING, NodeState.RELEASING) in transitions
    assert (NodeState.BEING_SERVICED, NodeState.DEPARTING) in transitions
