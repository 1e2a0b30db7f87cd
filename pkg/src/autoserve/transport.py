"""Injected transport between nodes.

Node state machines emit `Outbound` values and never touch sockets or
frame bytes themselves; the transport owns per-endpoint frame sequence
numbers, signing contexts and keystores. `InMemoryBus` is the simulation
transport: lossless, fixed one-tick latency, deterministic delivery
order. A datagram transport can replace it without touching the nodes.

Broadcast (dest_sys_id None) delivers to every registered node of the
other kind: heartbeats flow between aerial and landing platforms, which
are the only cross-kind consumers of them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .wire import Keystore, Message, SigningContext, decode_frame, encode_frame


@dataclass(frozen=True)
class Outbound:
    """A message addressed by system id; dest_sys_id None means broadcast."""

    dest_sys_id: int | None
    msg: Message


@dataclass(frozen=True)
class Delivery:
    src_sys_id: int
    dest_sys_id: int
    sent_at: float
    deliver_at: float
    frame: bytes


@dataclass
class _Endpoint:
    kind: str  # "AP" or "LP"
    signing: SigningContext | None
    keystore: Keystore | None
    tx_seq: int = 0

    def next_seq(self) -> int:
        seq = self.tx_seq
        self.tx_seq = (seq + 1) & 0xFF
        return seq


@dataclass
class InMemoryBus:
    latency_s: float = 1.0
    _endpoints: dict[int, _Endpoint] = field(default_factory=dict)
    _in_flight: list[Delivery] = field(default_factory=list)

    def register(
        self,
        sys_id: int,
        kind: str,
        signing: SigningContext | None = None,
        keystore: Keystore | None = None,
    ) -> None:
        if kind not in ("AP", "LP"):
            raise ValueError(f"kind must be 'AP' or 'LP', got {kind!r}")
        if sys_id in self._endpoints:
            raise ValueError(f"sys_id {sys_id} already registered")
        self._endpoints[sys_id] = _Endpoint(kind=kind, signing=signing, keystore=keystore)

    def _destinations(self, src_sys_id: int, dest: int | None) -> list[int]:
        if dest is not None:
            return [dest] if dest in self._endpoints else []
        src_kind = self._endpoints[src_sys_id].kind
        return [
            sys_id
            for sys_id in sorted(self._endpoints)
            if sys_id != src_sys_id and self._endpoints[sys_id].kind != src_kind
        ]

    def send(self, src_sys_id: int, outbound: Outbound, now: float) -> list[Delivery]:
        """Frame, sign and queue a message; returns the queued deliveries."""
        endpoint = self._endpoints[src_sys_id]
        frame = encode_frame(
            outbound.msg,
            seq=endpoint.next_seq(),
            sys_id=src_sys_id,
            comp_id=1,
            signing=endpoint.signing,
        )
        queued = [
            Delivery(
                src_sys_id=src_sys_id,
                dest_sys_id=dest,
                sent_at=now,
                deliver_at=now + self.latency_s,
                frame=frame,
            )
            for dest in self._destinations(src_sys_id, outbound.dest_sys_id)
        ]
        self._in_flight.extend(queued)
        return queued

    def pop_due(self, now: float) -> list[Delivery]:
        """Remove and return deliveries due by now, in send order."""
        due = [d for d in self._in_flight if d.deliver_at <= now]
        self._in_flight = [d for d in self._in_flight if d.deliver_at > now]
        return due

    def pending(self) -> int:
        return len(self._in_flight)

    def decode_for(self, dest_sys_id: int, frame: bytes):
        """Decode a frame with the destination endpoint's keystore."""
        return decode_frame(frame, keystore=self._endpoints[dest_sys_id].keystore)
