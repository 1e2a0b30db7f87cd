"""Aerial-platform control loop.

The vehicle watches its own battery, requests a service slot at the
nearest landing platform once it drops below the request threshold, and
judges every confirmed queue position against what its battery can
afford:

    keep  iff  position * service_estimate + travel_time
               <= (battery - reserve_floor) / worst_case_consumption

A rejected offer is cancelled and the request retried at the nearest
platform not yet tried this episode; once every known platform has been
tried, the vehicle settles for the offer with the smallest estimated
time to service instead of deadlocking. The cancel is always emitted
before the follow-up request.

State sequence:

    OPERATING -> REQUEST_PENDING -> RESERVED_WAITING -> BOARDING
              -> LANDED -> BEING_SERVICED -> DEPARTING -> OPERATING

with REQUEST_PENDING looping to itself on each retry. While waiting for
its slot the vehicle loiters in place. A confirmation with position 0 is
the boarding signal; one arriving from a platform this vehicle never
cancelled (a platform may reserve itself for a critically low vehicle)
is honored after cancelling any reservation held elsewhere. Messages
inconsistent with the current state are logged and dropped.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence, Union

from .lp_node import ProtocolStateError
from .reservation import priority_from_battery
from .transport import Outbound
from .wire import (
    ApReservationDecision,
    ExtendedHeartbeat,
    FlightStack,
    LivenessTracker,
    LpReservationConfirmation,
    Message,
    NodeState,
    ReservationAction,
    ServiceReservationRequest,
    SystemStateUpdate,
    VehicleType,
)

logger = logging.getLogger(__name__)

AP_STATES = frozenset(
    {
        NodeState.OPERATING,
        NodeState.REQUEST_PENDING,
        NodeState.RESERVED_WAITING,
        NodeState.BOARDING,
        NodeState.LANDED,
        NodeState.BEING_SERVICED,
        NodeState.DEPARTING,
    }
)

AP_TRANSITIONS: dict[NodeState, frozenset[NodeState]] = {
    NodeState.OPERATING: frozenset({NodeState.REQUEST_PENDING}),
    NodeState.REQUEST_PENDING: frozenset(
        {NodeState.RESERVED_WAITING, NodeState.REQUEST_PENDING}
    ),
    NodeState.RESERVED_WAITING: frozenset({NodeState.BOARDING}),
    NodeState.BOARDING: frozenset({NodeState.LANDED}),
    NodeState.LANDED: frozenset({NodeState.BEING_SERVICED}),
    NodeState.BEING_SERVICED: frozenset({NodeState.DEPARTING}),
    NodeState.DEPARTING: frozenset({NodeState.OPERATING}),
}


class ConfirmationForWrongAp(Exception):
    """A confirmation addressed to a different vehicle was evaluated."""


@dataclass(frozen=True)
class Keep:
    """Verdict: the confirmed position meets this vehicle's needs."""


@dataclass(frozen=True)
class CancelAndRetry:
    """Verdict: cancel here and request the given platform instead."""

    next_lp_sys_id: int


Verdict = Union[Keep, CancelAndRetry]


class ApNode:
    """One aerial platform: telemetry-driven requests and boarding flow."""

    def __init__(
        self,
        sys_id: int,
        known_lps: Sequence[tuple[int, tuple[float, float]]],
        *,
        request_threshold_pct: float = 50.0,
        reserve_floor_pct: float = 15.0,
        cruise_speed_m_per_s: float = 0.3,
        max_consumption_pct_per_s: float = 0.2,
        service_duration_estimate_s: float = 120.0,
        heartbeat_interval_s: float = 1.0,
        departure_clear_s: float = 1.0,
        flight_stack: int = FlightStack.PX4,
    ):
        self.sys_id = sys_id
        self.known_lps = [(int(i), (float(p[0]), float(p[1]))) for i, p in known_lps]
        self.request_threshold_pct = request_threshold_pct
        self.reserve_floor_pct = reserve_floor_pct
        self.cruise_speed_m_per_s = cruise_speed_m_per_s
        self.max_consumption_pct_per_s = max_consumption_pct_per_s
        self.service_duration_estimate_s = service_duration_estimate_s
        self.heartbeat_interval_s = heartbeat_interval_s
        self.departure_clear_s = departure_clear_s
        self.flight_stack = flight_stack

        self.state = NodeState.OPERATING
        self.battery_pct = 100.0
        self.position = (0.0, 0.0)
        # (lp_sys_id, last confirmed queue position) while reserved/boarding.
        self.current_reservation: tuple[int, int] | None = None
        self.lp_liveness = LivenessTracker()

        self._pending_target: int | None = None
        self._tried: set[int] = set()
        self._cancelled: set[int] = set()
        self._offers: dict[int, float] = {}
        self._settling = False
        self._departing_from: int | None = None
        self._departing_since: float | None = None
        self._last_heartbeat_at: float | None = None
        self._transitions: list[tuple[NodeState, NodeState]] = []

    # -- state machine plumbing -------------------------------------------

    def _transition(self, to: NodeState) -> None:
        if to not in AP_TRANSITIONS[self.state]:
            raise ProtocolStateError(f"AP {self.sys_id}: {self.state.name} -> {to.name}")
        self._transitions.append((self.state, to))
        self.state = to

    def drain_transitions(self) -> list[tuple[NodeState, NodeState]]:
        out, self._transitions = self._transitions, []
        return out

    def _lp_position(self, lp_sys_id: int) -> tuple[float, float]:
        for sys_id, position in self.known_lps:
            if sys_id == lp_sys_id:
                return position
        raise KeyError(f"LP {lp_sys_id} is not in the roster")

    def nearest_lp(self, exclude: set[int] | None = None) -> int | None:
        candidates = [
            (math.dist(self.position, position), sys_id)
            for sys_id, position in self.known_lps
            if not exclude or sys_id not in exclude
        ]
        return min(candidates)[1] if candidates else None

    def _travel_time_to(self, lp_sys_id: int) -> float:
        distance = math.dist(self.position, self._lp_position(lp_sys_id))
        if distance == 0:
            return 0.0
        if self.cruise_speed_m_per_s <= 0:
            return math.inf
        return distance / self.cruise_speed_m_per_s

    def _estimated_wait(self, lp_sys_id: int, queue_position: int) -> float:
        return (
            queue_position * self.service_duration_estimate_s
            + self._travel_time_to(lp_sys_id)
        )

    # -- confirmation evaluation --------------------------------------------

    def evaluate_confirmation(
        self, conf: LpReservationConfirmation, now: float
    ) -> Verdict:
        """Decide whether the offered queue position meets the battery margin.

        Valid while a request is pending or a reservation is held. The
        offer under evaluation is the one from the platform currently
        requested (or reserved).
        """
        if conf.target_ap_sys_id != self.sys_id:
            raise ConfirmationForWrongAp(
                f"confirmation for AP {conf.target_ap_sys_id} reached AP {self.sys_id}"
            )
        lp_sys_id = self._pending_target
        if lp_sys_id is None and self.current_reservation is not None:
            lp_sys_id = self.current_reservation[0]
        if lp_sys_id is None:
            raise ProtocolStateError(
                f"AP {self.sys_id}: no platform under evaluation in {self.state.name}"
            )

        estimated = self._estimated_wait(lp_sys_id, conf.queue_position)
        budget = math.inf
        if self.max_consumption_pct_per_s > 0:
            budget = (
                self.battery_pct - self.reserve_floor_pct
            ) / self.max_consumption_pct_per_s
        if estimated <= budget:
            return Keep()

        untried = {sys_id for sys_id, _ in self.known_lps} - self._tried
        if untried:
            nearest_untried = min(
                (math.dist(self.position, self._lp_position(s)), s) for s in untried
            )[1]
            return CancelAndRetry(nearest_untried)
        # Every platform was tried and none fits: settle for the best offer
        # seen rather than starve.
        offers = dict(self._offers)
        offers[lp_sys_id] = estimated
        best = min(offers.items(), key=lambda item: (item[1], item[0]))[0]
        if best == lp_sys_id:
            return Keep()
        return CancelAndRetry(best)

    # -- message handling ------------------------------------------------------

    def handle_message(self, msg: Message, from_sys_id: int, now: float) -> list[Outbound]:
        if isinstance(msg, LpReservationConfirmation):
            return self._handle_confirmation(msg, from_sys_id, now)
        if isinstance(msg, SystemStateUpdate):
            return self.handle_state_update(msg, from_sys_id, now)
        if isinstance(msg, ExtendedHeartbeat):
            if msg.vehicle_type == VehicleType.LANDING_PLATFORM:
                self.lp_liveness.record(from_sys_id, now)
            return []
        logger.debug("AP %d: ignoring %s", self.sys_id, type(msg).__name__)
        return []

    def _accept(
        self, lp_sys_id: int, queue_position: int
    ) -> list[Outbound]:
        self.current_reservation = (lp_sys_id, queue_position)
        self._pending_target = None
        if self.state is NodeState.REQUEST_PENDING:
            self._transition(NodeState.RESERVED_WAITING)
        if queue_position == 0:
            self._transition(NodeState.BOARDING)
            return []
        return [
            Outbound(
                lp_sys_id,
                ApReservationDecision(
                    target_lp_sys_id=lp_sys_id, decision=ReservationAction.KEEP
                ),
            )
        ]

    def _cancel_msg(self, lp_sys_id: int) -> Outbound:
        self._cancelled.add(lp_sys_id)
        return Outbound(
            lp_sys_id,
            ApReservationDecision(
                target_lp_sys_id=lp_sys_id, decision=ReservationAction.CANCEL
            ),
        )

    def _request_msg(self, lp_sys_id: int) -> Outbound:
        self._pending_target = lp_sys_id
        self._tried.add(lp_sys_id)
        return Outbound(
            lp_sys_id,
            ServiceReservationRequest(
                priority=priority_from_battery(self.battery_pct),
                target_lp_sys_id=lp_sys_id,
            ),
        )

    def _handle_confirmation(
        self, conf: LpReservationConfirmation, from_sys_id: int, now: float
    ) -> list[Outbound]:
        if conf.target_ap_sys_id != self.sys_id:
            logger.debug(
                "AP %d: confirmation for AP %d, dropping",
                self.sys_id,
                conf.target_ap_sys_id,
            )
            return []

        if self.state is NodeState.REQUEST_PENDING and from_sys_id == self._pending_target:
            self._offers[from_sys_id] = self._estimated_wait(
                from_sys_id, conf.queue_position
            )
            if self._settling:
                return self._accept(from_sys_id, conf.queue_position)
            verdict = self.evaluate_confirmation(conf, now)
            if isinstance(verdict, Keep):
                return self._accept(from_sys_id, conf.queue_position)
            if verdict.next_lp_sys_id in self._tried:
                # Exhausted-alternatives fallback: one final hop back to the
                # best offer, accepted whatever position it confirms.
                self._settling = True
                self._cancelled.discard(verdict.next_lp_sys_id)
            # Cancel strictly before the replacement request.
            return [
                self._cancel_msg(from_sys_id),
                self._request_msg(verdict.next_lp_sys_id),
            ]

        if (
            self.state is NodeState.RESERVED_WAITING
            and self.current_reservation is not None
            and from_sys_id == self.current_reservation[0]
        ):
            self.current_reservation = (from_sys_id, conf.queue_position)
            if conf.queue_position == 0:
                self._transition(NodeState.BOARDING)
            return []

        if (
            conf.queue_position == 0
            and from_sys_id not in self._cancelled
            and self.state in (NodeState.REQUEST_PENDING, NodeState.RESERVED_WAITING)
        ):
            # Boarding signal from a platform that reserved itself for us.
            out: list[Outbound] = []
            if self.state is NodeState.REQUEST_PENDING and self._pending_target is not None:
                out.append(self._cancel_msg(self._pending_target))
                self._pending_target = None
            elif self.current_reservation is not None:
                out.append(self._cancel_msg(self.current_reservation[0]))
            out.extend(self._accept(from_sys_id, 0))
            return out

        logger.debug(
            "AP %d: confirmation from LP %d while %s, ignoring",
            self.sys_id,
            from_sys_id,
            self.state.name,
        )
        return []

    def handle_state_update(
        self, upd: SystemStateUpdate, from_sys_id: int, now: float
    ) -> list[Outbound]:
        """React to the landing platform's phase announcements."""
        reserved_lp = self.current_reservation[0] if self.current_reservation else None
        if from_sys_id != reserved_lp:
            logger.debug(
                "AP %d: state update from LP %d while not boarded there, ignoring",
                self.sys_id,
                from_sys_id,
            )
            return []
        if upd.state is NodeState.SERVICING and self.state is NodeState.LANDED:
            self._transition(NodeState.BEING_SERVICED)
            return []
        if (
            upd.state is NodeState.SERVICE_COMPLETE
            and self.state is NodeState.BEING_SERVICED
        ):
            self._transition(NodeState.DEPARTING)
            self._departing_from = from_sys_id
            self._departing_since = now
            self.current_reservation = None
            return []
        logger.debug(
            "AP %d: state update %s while %s, ignoring",
            self.sys_id,
            upd.state.name,
            self.state.name,
        )
        return []

    def notify_arrival(self, now: float) -> list[Outbound]:
        """The vehicle has touched down on its reserved platform."""
        if self.state is not NodeState.BOARDING or self.current_reservation is None:
            raise ProtocolStateError(
                f"AP {self.sys_id}: arrival notified while {self.state.name}"
            )
        self._transition(NodeState.LANDED)
        return [
            Outbound(
                self.current_reservation[0], SystemStateUpdate(state=NodeState.LANDED)
            )
        ]

    # -- periodic work -----------------------------------------------------------

    def tick(
        self, now: float, battery_pct: float, position: tuple[float, float]
    ) -> list[Outbound]:
        """Ingest telemetry, heartbeat at 1 Hz, and run the request policy.

        Must be called with non-decreasing now.
        """
        self.battery_pct = float(battery_pct)
        self.position = (float(position[0]), float(position[1]))
        out: list[Outbound] = []

        if (
            self._last_heartbeat_at is None
            or now - self._last_heartbeat_at >= self.heartbeat_interval_s
        ):
            self._last_heartbeat_at = now
            out.append(Outbound(None, self.heartbeat()))

        if (
            self.state is NodeState.DEPARTING
            and now - self._departing_since >= self.departure_clear_s
        ):
            departed_lp = self._departing_from
            self._departing_from = None
            self._departing_since = None
            self._transition(NodeState.OPERATING)
            self._tried.clear()
            self._cancelled.clear()
            self._offers.clear()
            self._settling = False
            out.append(
                Outbound(departed_lp, SystemStateUpdate(state=NodeState.DEPARTED))
            )

        if (
            self.state is NodeState.OPERATING
            and self.battery_pct < self.request_threshold_pct
        ):
            target = self.nearest_lp()
            if target is not None:
                self._tried.clear()
                self._cancelled.clear()
                self._offers.clear()
                self._settling = False
                self._transition(NodeState.REQUEST_PENDING)
                out.append(self._request_msg(target))
        return out

    def heartbeat(self) -> ExtendedHeartbeat:
        return ExtendedHeartbeat(
            vehicle_type=VehicleType.AERIAL_PLATFORM,
            flight_stack=self.flight_stack,
            system_state=self.state,
            battery_pct=self.battery_pct,
            pos_x=self.position[0],
            pos_y=self.position[1],
        )
