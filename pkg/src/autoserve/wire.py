"""Wire protocol for the AutoServe service network.

Frames are MAVLink-v2 style envelopes carrying exactly one message. All
multi-byte integers are little-endian. Layout:

    offset    size  field
    0         1     magic, always 0xFD
    1         1     payload_len (after trailing-zero truncation, >= 1)
    2         1     incompat_flags (bit 0 set: frame carries a signature)
    3         1     compat_flags
    4         1     seq (wraps at 256)
    5         1     sys_id (1-255; 0 is reserved and never emitted)
    6         1     comp_id (1-255)
    7         3     msg_id (24-bit)
    10        n     payload (n = payload_len)
    10+n      2     checksum
    12+n      13    signature, present iff incompat bit 0:
                        link_id (1) | timestamp (6, units of 10 us) | sig (6)

The checksum is CRC-16/X.25 over bytes 1 .. 10+n (everything after the
magic) followed by the per-message crc_extra byte. crc_extra is seeded
from the message name and field signature so that independently built
tooling derives the same constant.

sig is the first six bytes of SHA-256 over
secret_key | frame bytes from magic through checksum | link_id | timestamp.
Timestamps count 10 us units since a configurable epoch and are strictly
monotonic per (link_id, sys_id, comp_id) stream on the sender side.

AutoServe message ids live in the custom range 42000-42004.
"""

from __future__ import annotations

import hmac
import struct
import time
from dataclasses import dataclass, fields as dataclass_fields
from enum import Enum, IntEnum
from hashlib import sha256
from typing import Callable, Iterable, Mapping, Sequence, Union

MAGIC_V2 = 0xFD
HEADER_LEN = 10
CHECKSUM_LEN = 2
SIGNATURE_LEN = 13
MAX_PAYLOAD_LEN = 255
MAX_FRAME_LEN = HEADER_LEN + MAX_PAYLOAD_LEN + CHECKSUM_LEN + SIGNATURE_LEN
INCOMPAT_SIGNED = 0x01

# 2015-01-01T00:00:00Z, the epoch for signature timestamps.
SIGNATURE_EPOCH_UNIX_S = 1420070400
TIMESTAMP_UNITS_PER_S = 100_000


class WireError(Exception):
    """Base class for all wire-level failures."""


class PayloadTooLarge(WireError):
    """Serialized payload exceeds the 255-byte frame limit."""


class FrameDecodeError(WireError):
    """Base class for decode_frame failures."""


class BadMagic(FrameDecodeError):
    pass


class TruncatedFrame(FrameDecodeError):
    pass


class ChecksumMismatch(FrameDecodeError):
    pass


class UnknownMsgId(FrameDecodeError):
    pass


class MalformedPayload(FrameDecodeError):
    """Payload bytes violate the message's field contracts."""


class SignatureInvalid(FrameDecodeError):
    pass


class SignatureMissing(FrameDecodeError):
    """Receiver policy requires signed frames but the frame is unsigned."""


class StaleTimestamp(FrameDecodeError):
    """Signature timestamp is not newer than the last accepted one."""


# ---------------------------------------------------------------------------
# CRC-16/X.25


def _build_crc_table(poly: int = 0x8408) -> tuple[int, ...]:
    table = []
    for byte in range(256):
        crc = byte
        for _ in range(8):
            crc = (crc >> 1) ^ poly if crc & 1 else crc >> 1
        table.append(crc)
    return tuple(table)


_CRC_TABLE = _build_crc_table()


def crc16_accumulate(data: bytes, crc: int = 0xFFFF) -> int:
    """Accumulate data into a reflected CRC-16 register (no final XOR)."""
    table = _CRC_TABLE
    for byte in data:
        crc = (crc >> 8) ^ table[(crc ^ byte) & 0xFF]
    return crc


def crc16_x25(data: bytes) -> int:
    """CRC-16/X.25: poly 0x1021 reflected, init 0xFFFF, final XOR 0xFFFF.

    Check value: crc16_x25(b"123456789") == 0x906E.
    """
    return crc16_accumulate(data) ^ 0xFFFF


def compute_checksum(header_and_payload: bytes, crc_extra: int) -> int:
    """Frame checksum: CRC-16/X.25 over the input followed by crc_extra.

    The input excludes the magic byte.
    """
    return crc16_x25(bytes(header_and_payload) + bytes([crc_extra & 0xFF]))


def _seed_crc_extra(name: str, field_sig: Sequence[tuple[str, str]]) -> int:
    # Seed accumulates name and "ctype name" pairs in wire order, then folds
    # the 16-bit register to one byte. Matches the published message-seed rule.
    crc = crc16_accumulate((name + " ").encode("ascii"))
    for ctype, fname in field_sig:
        crc = crc16_accumulate((ctype + " ").encode("ascii"), crc)
        crc = crc16_accumulate((fname + " ").encode("ascii"), crc)
    return (crc & 0xFF) ^ (crc >> 8)


# ---------------------------------------------------------------------------
# Messages


class NodeState(IntEnum):
    """Mission-state codes shared by both state machines and the wire."""

    # Landing platform states
    IDLE = 0
    AWAITING_BOARDING = 1
    ALIGNING = 2
    SERVICING = 3
    RELEASING = 4
    # Aerial platform states
    OPERATING = 5
    REQUEST_PENDING = 6
    RESERVED_WAITING = 7
    BOARDING = 8
    LANDED = 9
    BEING_SERVICED = 10
    DEPARTING = 11
    # Protocol event markers carried in SystemStateUpdate
    SERVICE_COMPLETE = 12
    DEPARTED = 13


class ReservationAction(IntEnum):
    """Keep/cancel value carried by ApReservationDecision."""

    CANCEL = 0
    KEEP = 1


class VehicleType(IntEnum):
    GENERIC = 0
    AERIAL_PLATFORM = 1
    LANDING_PLATFORM = 2


class FlightStack(IntEnum):
    UNKNOWN = 0
    PX4 = 1
    ARDUPILOT = 2


@dataclass(frozen=True)
class ExtendedHeartbeat:
    """Liveness/health beacon with battery, position and mission state.

    component_type and flight_mode are carried opaquely and never
    interpreted by the protocol.
    """

    vehicle_type: int
    flight_stack: int
    system_state: NodeState
    battery_pct: float
    pos_x: float
    pos_y: float
    component_type: int = 0
    flight_mode: int = 0


@dataclass(frozen=True)
class ServiceReservationRequest:
    priority: int
    target_lp_sys_id: int


@dataclass(frozen=True)
class LpReservationConfirmation:
    target_ap_sys_id: int
    queue_position: int


@dataclass(frozen=True)
class ApReservationDecision:
    target_lp_sys_id: int
    decision: ReservationAction


@dataclass(frozen=True)
class SystemStateUpdate:
    state: NodeState


Message = Union[
    ExtendedHeartbeat,
    ServiceReservationRequest,
    LpReservationConfirmation,
    ApReservationDecision,
    SystemStateUpdate,
]


def _check_u8(value: int, name: str, lo: int = 0, hi: int = 255) -> int:
    value = int(value)
    if not lo <= value <= hi:
        raise ValueError(f"{name} out of range [{lo}, {hi}]: {value}")
    return value


def _scale_pct(value: float, name: str) -> int:
    scaled = round(float(value) * 100.0)
    if not 0 <= scaled <= 10000:
        raise ValueError(f"{name} out of range [0, 100]: {value}")
    return scaled


def _scale_m(value: float, name: str) -> int:
    scaled = round(float(value) * 100.0)
    if not -(2**31) <= scaled < 2**31:
        raise ValueError(f"{name} exceeds the representable range: {value}")
    return scaled


def _node_state(code: int) -> NodeState:
    try:
        return NodeState(code)
    except ValueError:
        raise MalformedPayload(f"unknown mission-state code {code}") from None


def _pack_heartbeat(msg: ExtendedHeartbeat) -> bytes:
    return struct.pack(
        "<BBBBBHii",
        _check_u8(msg.vehicle_type, "vehicle_type"),
        _check_u8(msg.flight_stack, "flight_stack"),
        _check_u8(msg.component_type, "component_type"),
        _check_u8(msg.flight_mode, "flight_mode"),
        _check_u8(int(msg.system_state), "system_state"),
        _scale_pct(msg.battery_pct, "battery_pct"),
        _scale_m(msg.pos_x, "pos_x"),
        _scale_m(msg.pos_y, "pos_y"),
    )


def _unpack_heartbeat(payload: bytes) -> ExtendedHeartbeat:
    vt, fs, ct, fm, state, battery, x, y = struct.unpack("<BBBBBHii", payload)
    if battery > 10000:
        raise MalformedPayload(f"battery_pct field out of range: {battery}")
    return ExtendedHeartbeat(
        vehicle_type=vt,
        flight_stack=fs,
        system_state=_node_state(state),
        battery_pct=battery / 100.0,
        pos_x=x / 100.0,
        pos_y=y / 100.0,
        component_type=ct,
        flight_mode=fm,
    )


def _pack_request(msg: ServiceReservationRequest) -> bytes:
    return struct.pack(
        "<BB",
        _check_u8(msg.priority, "priority", 0, 100),
        _check_u8(msg.target_lp_sys_id, "target_lp_sys_id", 1),
    )


def _unpack_request(payload: bytes) -> ServiceReservationRequest:
    priority, target = struct.unpack("<BB", payload)
    if priority > 100:
        raise MalformedPayload(f"priority out of range: {priority}")
    if target == 0:
        raise MalformedPayload("target_lp_sys_id must be 1-255")
    return ServiceReservationRequest(priority=priority, target_lp_sys_id=target)


def _pack_confirmation(msg: LpReservationConfirmation) -> bytes:
    position = int(msg.queue_position)
    if not 0 <= position <= 0xFFFF:
        raise ValueError(f"queue_position out of range: {position}")
    return struct.pack(
        "<BH", _check_u8(msg.target_ap_sys_id, "target_ap_sys_id", 1), position
    )


def _unpack_confirmation(payload: bytes) -> LpReservationConfirmation:
    target, position = struct.unpack("<BH", payload)
    if target == 0:
        raise MalformedPayload("target_ap_sys_id must be 1-255")
    return LpReservationConfirmation(target_ap_sys_id=target, queue_position=position)


def _pack_decision(msg: ApReservationDecision) -> bytes:
    return struct.pack(
        "<BB",
        _check_u8(msg.target_lp_sys_id, "target_lp_sys_id", 1),
        _check_u8(int(msg.decision), "decision", 0, 1),
    )


def _unpack_decision(payload: bytes) -> ApReservationDecision:
    target, decision = struct.unpack("<BB", payload)
    if target == 0:
        raise MalformedPayload("target_lp_sys_id must be 1-255")
    if decision > 1:
        raise MalformedPayload(f"decision must be 0 or 1: {decision}")
    return ApReservationDecision(
        target_lp_sys_id=target, decision=ReservationAction(decision)
    )


def _pack_state_update(msg: SystemStateUpdate) -> bytes:
    return struct.pack("<B", _check_u8(int(msg.state), "state"))


def _unpack_state_update(payload: bytes) -> SystemStateUpdate:
    (state,) = struct.unpack("<B", payload)
    return SystemStateUpdate(state=_node_state(state))


@dataclass(frozen=True)
class _MessageSpec:
    msg_id: int
    wire_name: str
    cls: type
    size: int
    crc_extra: int
    pack: Callable[[Message], bytes]
    unpack: Callable[[bytes], Message]


def _spec(
    msg_id: int,
    wire_name: str,
    cls: type,
    field_sig: Sequence[tuple[str, str]],
    fmt: str,
    pack: Callable,
    unpack: Callable,
) -> _MessageSpec:
    return _MessageSpec(
        msg_id=msg_id,
        wire_name=wire_name,
        cls=cls,
        size=struct.calcsize(fmt),
        crc_extra=_seed_crc_extra(wire_name, field_sig),
        pack=pack,
        unpack=unpack,
    )


_MESSAGE_SPECS: dict[int, _MessageSpec] = {
    spec.msg_id: spec
    for spec in (
        _spec(
            42000,
            "EXTENDED_HEARTBEAT",
            ExtendedHeartbeat,
            [
                ("uint8_t", "vehicle_type"),
                ("uint8_t", "flight_stack"),
                ("uint8_t", "component_type"),
                ("uint8_t", "flight_mode"),
                ("uint8_t", "system_state"),
                ("uint16_t", "battery_cpct"),
                ("int32_t", "pos_x_cm"),
                ("int32_t", "pos_y_cm"),
            ],
            "<BBBBBHii",
            _pack_heartbeat,
            _unpack_heartbeat,
        ),
        _spec(
            42001,
            "SERVICE_RESERVATION_REQUEST",
            ServiceReservationRequest,
            [("uint8_t", "priority"), ("uint8_t", "target_lp_sys_id")],
            "<BB",
            _pack_request,
            _unpack_request,
        ),
        _spec(
            42002,
            "LP_RESERVATION_CONFIRMATION",
            LpReservationConfirmation,
            [("uint8_t", "target_ap_sys_id"), ("uint16_t", "queue_position")],
            "<BH",
            _pack_confirmation,
            _unpack_confirmation,
        ),
        _spec(
            42003,
            "AP_RESERVATION_DECISION",
            ApReservationDecision,
            [("uint8_t", "target_lp_sys_id"), ("uint8_t", "decision")],
            "<BB",
            _pack_decision,
            _unpack_decision,
        ),
        _spec(
            42004,
            "SYSTEM_STATE_UPDATE",
            SystemStateUpdate,
            [("uint8_t", "state")],
            "<B",
            _pack_state_update,
            _unpack_state_update,
        ),
    )
}

_SPEC_BY_TYPE: dict[type, _MessageSpec] = {
    spec.cls: spec for spec in _MESSAGE_SPECS.values()
}


def msg_id_of(msg: Message) -> int:
    return _SPEC_BY_TYPE[type(msg)].msg_id


_FIELD_NAMES: dict[type, tuple[str, ...]] = {
    cls: tuple(f.name for f in dataclass_fields(cls)) for cls in _SPEC_BY_TYPE
}


def message_to_fields(msg: Message) -> dict:
    """Flatten a message into a JSON-friendly field dict."""
    out = {}
    for name in _FIELD_NAMES[type(msg)]:
        value = getattr(msg, name)
        out[name] = int(value) if isinstance(value, Enum) else value
    return out


def message_from_fields(type_name: str, fields: Mapping) -> Message:
    """Rebuild a message from its class name and field dict."""
    for spec in _MESSAGE_SPECS.values():
        if spec.cls.__name__ == type_name:
            kwargs = dict(fields)
            if "system_state" in kwargs:
                kwargs["system_state"] = NodeState(kwargs["system_state"])
            if "state" in kwargs:
                kwargs["state"] = NodeState(kwargs["state"])
            if "decision" in kwargs:
                kwargs["decision"] = ReservationAction(kwargs["decision"])
            return spec.cls(**kwargs)
    raise ValueError(f"unknown message type {type_name!r}")


# ---------------------------------------------------------------------------
# Frame header and signature


@dataclass(frozen=True)
class FrameHeader:
    payload_len: int
    incompat_flags: int
    compat_flags: int
    seq: int
    sys_id: int
    comp_id: int
    msg_id: int
    magic: int = MAGIC_V2

    @property
    def is_signed(self) -> bool:
        return bool(self.incompat_flags & INCOMPAT_SIGNED)


@dataclass(frozen=True)
class Signature:
    link_id: int
    timestamp: int
    sig: bytes


def timestamp_now(epoch_unix_s: float = SIGNATURE_EPOCH_UNIX_S) -> int:
    """Current wall-clock signature timestamp (10 us units since epoch)."""
    return max(0, int((time.time() - epoch_unix_s) * TIMESTAMP_UNITS_PER_S))


class SigningContext:
    """Sender-side signing state: secret, link id and monotonic timestamps.

    Each (link_id, sys_id, comp_id) stream gets strictly increasing
    timestamps even when the clock source stalls.
    """

    def __init__(
        self,
        secret_key: bytes,
        link_id: int = 0,
        timestamp_source: Callable[[], int] | None = None,
    ):
        if len(secret_key) != 32:
            raise ValueError("secret_key must be exactly 32 bytes")
        if not 0 <= link_id <= 255:
            raise ValueError("link_id must fit in one byte")
        self.secret_key = bytes(secret_key)
        self.link_id = link_id
        self._timestamp_source = timestamp_source or timestamp_now
        self._last: dict[tuple[int, int, int], int] = {}

    def next_timestamp(self, sys_id: int, comp_id: int) -> int:
        stream = (self.link_id, sys_id, comp_id)
        ts = max(int(self._timestamp_source()), self._last.get(stream, -1) + 1)
        self._last[stream] = ts
        return ts


class Keystore:
    """Receiver-side secrets plus per-stream replay protection.

    Timestamps must strictly increase per (link_id, sys_id, comp_id)
    stream; frames from a new stream are rejected when they lag the
    link's newest accepted timestamp by more than replay_window_s.
    """

    def __init__(
        self,
        keys: Mapping[int, bytes] | None = None,
        replay_window_s: float = 6.0,
    ):
        self._keys: dict[int, bytes] = {}
        self._last: dict[tuple[int, int, int], int] = {}
        self._link_max: dict[int, int] = {}
        self.replay_window = int(replay_window_s * TIMESTAMP_UNITS_PER_S)
        for link_id, secret in (keys or {}).items():
            self.add_key(link_id, secret)

    def add_key(self, link_id: int, secret_key: bytes) -> None:
        if len(secret_key) != 32:
            raise ValueError("secret_key must be exactly 32 bytes")
        self._keys[int(link_id)] = bytes(secret_key)

    def secret_for(self, link_id: int) -> bytes | None:
        return self._keys.get(link_id)

    def check_timestamp(self, link_id: int, sys_id: int, comp_id: int, ts: int) -> None:
        stream = (link_id, sys_id, comp_id)
        last = self._last.get(stream)
        if last is not None and ts <= last:
            raise StaleTimestamp(f"timestamp {ts} <= last accepted {last}")
        link_max = self._link_max.get(link_id)
        if last is None and link_max is not None and ts < link_max - self.replay_window:
            raise StaleTimestamp(
                f"timestamp {ts} lags link maximum {link_max} beyond the replay window"
            )

    def commit_timestamp(self, link_id: int, sys_id: int, comp_id: int, ts: int) -> None:
        self._last[(link_id, sys_id, comp_id)] = ts
        if ts > self._link_max.get(link_id, -1):
            self._link_max[link_id] = ts


def _signature_bytes(secret: bytes, signed_region: bytes, link_id: int, ts: int) -> bytes:
    digest = sha256(
        secret + signed_region + bytes([link_id]) + ts.to_bytes(6, "little")
    ).digest()
    return digest[:6]


# ---------------------------------------------------------------------------
# Frame codec


def _truncate_trailing_zeros(payload: bytes) -> bytes:
    stripped = payload.rstrip(b"\x00")
    return stripped if stripped else payload[:1]


def encode_frame(
    msg: Message,
    seq: int,
    sys_id: int,
    comp_id: int,
    signing: SigningContext | None = None,
) -> bytes:
    """Encode one message into a frame, optionally signed.

    seq wraps modulo 256. sys_id and comp_id must be 1-255; id 0 is the
    reserved broadcast placeholder and is never emitted.
    """
    spec = _SPEC_BY_TYPE.get(type(msg))
    if spec is None:
        raise TypeError(f"not a wire message: {type(msg).__name__}")
    if not 1 <= sys_id <= 255:
        raise ValueError(f"sys_id must be 1-255, got {sys_id}")
    if not 1 <= comp_id <= 255:
        raise ValueError(f"comp_id must be 1-255, got {comp_id}")

    payload = spec.pack(msg)
    if len(payload) > MAX_PAYLOAD_LEN:
        raise PayloadTooLarge(f"{len(payload)} byte payload exceeds {MAX_PAYLOAD_LEN}")
    payload = _truncate_trailing_zeros(payload)

    incompat = INCOMPAT_SIGNED if signing is not None else 0
    header = bytes(
        [MAGIC_V2, len(payload), incompat, 0, seq & 0xFF, sys_id, comp_id]
    ) + spec.msg_id.to_bytes(3, "little")
    checksum = compute_checksum(header[1:] + payload, spec.crc_extra)
    frame = header + payload + checksum.to_bytes(2, "little")

    if signing is not None:
        ts = signing.next_timestamp(sys_id, comp_id)
        sig = _signature_bytes(signing.secret_key, frame, signing.link_id, ts)
        frame += bytes([signing.link_id]) + ts.to_bytes(6, "little") + sig
    return frame


def _parse_frame(data: bytes) -> tuple[FrameHeader, bytes, int, Signature | None, int]:
    """Structural parse: header, payload bytes, stored checksum, signature.

    Returns the end offset of the verified region as the final element.
    Raises BadMagic or TruncatedFrame only; no integrity checks here.
    """
    if len(data) == 0:
        raise TruncatedFrame("empty byte sequence")
    if data[0] != MAGIC_V2:
        raise BadMagic(f"expected 0x{MAGIC_V2:02X}, got 0x{data[0]:02X}")
    if len(data) < HEADER_LEN:
        raise TruncatedFrame(f"{len(data)} bytes is shorter than the frame header")

    payload_len = data[1]
    header = FrameHeader(
        payload_len=payload_len,
        incompat_flags=data[2],
        compat_flags=data[3],
        seq=data[4],
        sys_id=data[5],
        comp_id=data[6],
        msg_id=int.from_bytes(data[7:10], "little"),
    )
    end = HEADER_LEN + payload_len + CHECKSUM_LEN
    total = end + (SIGNATURE_LEN if header.is_signed else 0)
    if len(data) < total:
        raise TruncatedFrame(f"need {total} bytes, got {len(data)}")

    payload = bytes(data[HEADER_LEN : HEADER_LEN + payload_len])
    stored_crc = int.from_bytes(data[end - CHECKSUM_LEN : end], "little")

    signature = None
    if header.is_signed:
        block = data[end : end + SIGNATURE_LEN]
        signature = Signature(
            link_id=block[0],
            timestamp=int.from_bytes(block[1:7], "little"),
            sig=bytes(block[7:13]),
        )
    return header, payload, stored_crc, signature, end


def decode_frame(
    data: bytes,
    keystore: Keystore | Mapping[int, bytes] | None = None,
    require_signed: bool = False,
) -> tuple[FrameHeader, Message, Signature | None]:
    """Decode and verify one frame.

    Signed frames are verified against the keystore (secret lookup by
    link_id, signature match, then replay check) before the payload is
    released. Passing a plain mapping gives signature verification
    without cross-call replay tracking; pass a Keystore instance to keep
    per-stream timestamp state. Bytes after the end of the frame are
    ignored.
    """
    header, payload, stored_crc, signature, end = _parse_frame(bytes(data))
    data = bytes(data)

    spec = _MESSAGE_SPECS.get(header.msg_id)
    if spec is None:
        raise UnknownMsgId(f"msg_id {header.msg_id}")

    computed = compute_checksum(data[1 : end - CHECKSUM_LEN], spec.crc_extra)
    if computed != stored_crc:
        raise ChecksumMismatch(f"stored 0x{stored_crc:04X}, computed 0x{computed:04X}")

    if require_signed and signature is None:
        raise SignatureMissing("receiver policy requires signed frames")

    store: Keystore | None = None
    if signature is not None:
        if keystore is None:
            raise SignatureInvalid("signed frame but no keystore supplied")
        store = keystore if isinstance(keystore, Keystore) else Keystore(keystore)
        secret = store.secret_for(signature.link_id)
        if secret is None:
            raise SignatureInvalid(f"no key for link_id {signature.link_id}")
        expected = _signature_bytes(
            secret, data[:end], signature.link_id, signature.timestamp
        )
        if not hmac.compare_digest(expected, signature.sig):
            raise SignatureInvalid("signature does not match frame contents")
        store.check_timestamp(
            signature.link_id, header.sys_id, header.comp_id, signature.timestamp
        )

    if header.payload_len < spec.size:
        payload = payload + bytes(spec.size - header.payload_len)
    try:
        msg = spec.unpack(payload[: spec.size])
    except struct.error as exc:  # pragma: no cover - sizes are pre-padded
        raise MalformedPayload(str(exc)) from None

    if signature is not None and store is not None:
        store.commit_timestamp(
            signature.link_id, header.sys_id, header.comp_id, signature.timestamp
        )
    return header, msg, signature


def dump_frame(data: bytes) -> str:
    """Developer utility: render a frame as one `name=value` line per field.

    Performs structural parsing and checksum comparison but no signature
    verification (the secret is usually not at hand when debugging).
    """
    header, payload, stored_crc, signature, end = _parse_frame(bytes(data))
    lines = [
        f"magic=0x{header.magic:02x}",
        f"payload_len={header.payload_len}",
        f"incompat_flags=0x{header.incompat_flags:02x}",
        f"compat_flags=0x{header.compat_flags:02x}",
        f"seq={header.seq}",
        f"sys_id={header.sys_id}",
        f"comp_id={header.comp_id}",
        f"msg_id={header.msg_id}",
    ]
    spec = _MESSAGE_SPECS.get(header.msg_id)
    if spec is None:
        lines.append("msg_type=UNKNOWN")
        lines.append(f"payload=0x{payload.hex()}")
        lines.append(f"checksum=0x{stored_crc:04x}")
    else:
        lines.append(f"msg_type={spec.cls.__name__}")
        padded = payload + bytes(max(0, spec.size - len(payload)))
        try:
            msg = spec.unpack(padded[: spec.size])
            for name, value in message_to_fields(msg).items():
                lines.append(f"{name}={value}")
        except MalformedPayload as exc:
            lines.append(f"payload_error={exc}")
        computed = compute_checksum(bytes(data)[1 : end - CHECKSUM_LEN], spec.crc_extra)
        status = "ok" if computed == stored_crc else f"BAD, computed 0x{computed:04x}"
        lines.append(f"checksum=0x{stored_crc:04x} ({status})")
    if signature is not None:
        lines.append(f"signature.link_id={signature.link_id}")
        lines.append(f"signature.timestamp={signature.timestamp}")
        lines.append(f"signature.sig={signature.sig.hex()}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Heartbeat liveness


class LinkState(Enum):
    CONNECTED = "CONNECTED"
    DISCONNECTED = "DISCONNECTED"


def track_liveness(
    heartbeat_timestamps: Iterable[float],
    now: float,
    window_s: float,
    min_count: int,
) -> LinkState:
    """CONNECTED iff at least min_count heartbeats lie in (now - window_s, now]."""
    if window_s <= 0:
        raise ValueError("window_s must be positive")
    if min_count < 1:
        raise ValueError("min_count must be at least 1")
    cutoff = now - window_s
    hits = 0
    for ts in heartbeat_timestamps:
        if cutoff < ts <= now:
            hits += 1
            if hits >= min_count:
                return LinkState.CONNECTED
    return LinkState.DISCONNECTED


class LivenessTracker:
    """Sliding-window heartbeat bookkeeping for many peer streams."""

    def __init__(self, window_s: float = 5.0, min_count: int = 3):
        if window_s <= 0:
            raise ValueError("window_s must be positive")
        if min_count < 1:
            raise ValueError("min_count must be at least 1")
        self.window_s = window_s
        self.min_count = min_count
        self._streams: dict[object, list[float]] = {}

    def record(self, stream_id: object, timestamp: float) -> None:
        stream = self._streams.setdefault(stream_id, [])
        stream.append(timestamp)
        cutoff = timestamp - self.window_s
        while stream and stream[0] <= cutoff:
            stream.pop(0)

    def status(self, stream_id: object, now: float) -> LinkState:
        return track_liveness(
            self._streams.get(stream_id, ()), now, self.window_s, self.min_count
        )

    def known_streams(self) -> list:
        return list(self._streams)
