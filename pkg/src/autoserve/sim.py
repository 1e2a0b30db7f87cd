"""Deterministic discrete-time fleet simulation.

N aerial platforms and M landing platforms exchange signed frames over
the in-memory bus at 1 s ticks. Per tick, each operating vehicle burns a
bounded-random amount of battery and takes a bounded-random 2D step;
once its battery falls below the request threshold it runs the
reservation protocol against the landing platforms. Boarding vehicles
fly straight at their platform at the speed bound; docked or holding
vehicles neither move nor consume (battery drains only while flying a
leg: operating, approaching, or departing). A vehicle is restored to
100% when its service completes, and the run fails if any vehicle ever
drops below the failure threshold.

Every run is a pure function of its SimConfig: per-vehicle random
streams come from numpy's PCG64 seeded with
SeedSequence(seed, spawn_key=(1, vehicle_index)), so adding vehicle k+1
never alters the draws of vehicles 1..k. Two runs of the same config
produce byte-identical traces.

Trace files are UTF-8 JSON lines. The first line is
{"header": {config, rng, trace_format}}; every following line is a
record {t, actor, kind, detail} with kind one of TICK, MSG_SENT,
MSG_RECV, STATE_CHANGE, BATTERY, FAILURE. actor is "AP<sys_id>" or
"LP<sys_id>".
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from hashlib import sha256
from typing import IO, Mapping

import numpy as np

from .ap_node import ApNode
from .lp_node import LpNode
from .transport import InMemoryBus
from .wire import (
    Keystore,
    NodeState,
    SigningContext,
    TIMESTAMP_UNITS_PER_S,
    message_to_fields,
)

# Shared by every node on the simulated network; links are trusted here,
# signing exists to exercise the full wire path.
NETWORK_SECRET = sha256(b"autoserve shared network key").digest()

RNG_DESCRIPTION = (
    "numpy PCG64, one stream per vehicle from "
    "SeedSequence(seed, spawn_key=(1, vehicle_index)); draw order per "
    "vehicle: spawn radius u, spawn angle u, initial battery, then per "
    "tick consumption (when flying) and displacement x, y (when operating)"
)

TRACE_FORMAT = 1

# Battery drains while flying a leg; holding for the protocol or sitting
# on the platform costs nothing.
DRAIN_STATES = frozenset(
    {NodeState.OPERATING, NodeState.BOARDING, NodeState.DEPARTING}
)


class InvalidConfig(Exception):
    pass


@dataclass
class SimConfig:
    """All simulation parameters; config files mirror these field names."""

    n_uavs: int = 5
    n_lps: int = 1
    area_m: tuple[float, float] = (1000.0, 1000.0)
    lp_positions: list[tuple[float, float]] | None = None
    spawn_radius_m: float = 40.0
    duration_s: int = 7200
    consumption_pct_per_s: tuple[float, float] = (0.15, 0.20)
    request_threshold_pct: float = 50.0
    fail_threshold_pct: float = 15.0
    service_duration_s: float = 120.0
    max_step_m_per_s: float = 0.3
    seed: int = 0
    initial_battery_pct: tuple[float, float] = (60.0, 100.0)
    alignment_duration_s: float = 10.0
    boarding_timeout_s: float = 180.0
    critical_threshold_pct: float | None = None
    liveness_window_s: float = 5.0
    liveness_min_count: int = 3
    departure_clear_s: float = 1.0

    _TUPLE_FIELDS = ("area_m", "consumption_pct_per_s", "initial_battery_pct")

    @classmethod
    def from_dict(cls, data: Mapping) -> "SimConfig":
        known = {f.name for f in cls.__dataclass_fields__.values()}
        unknown = set(data) - known
        if unknown:
            raise InvalidConfig(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(data)
        for name in cls._TUPLE_FIELDS:
            if name in kwargs:
                kwargs[name] = tuple(kwargs[name])
        positions = kwargs.get("lp_positions")
        if isinstance(positions, str):
            if positions.upper() != "AUTO":
                raise InvalidConfig("lp_positions: expected coordinates or 'AUTO'")
            kwargs["lp_positions"] = None
        elif positions is not None:
            kwargs["lp_positions"] = [tuple(p) for p in positions]
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path) -> "SimConfig":
        with open(path, "r", encoding="utf-8") as handle:
            try:
                data = json.load(handle)
            except json.JSONDecodeError as exc:
                raise InvalidConfig(f"{path}: {exc}") from None
        if not isinstance(data, dict):
            raise InvalidConfig(f"{path}: expected a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["area_m"] = list(self.area_m)
        data["consumption_pct_per_s"] = list(self.consumption_pct_per_s)
        data["initial_battery_pct"] = list(self.initial_battery_pct)
        if self.lp_positions is not None:
            data["lp_positions"] = [list(p) for p in self.lp_positions]
        return data

    @property
    def critical_pct(self) -> float:
        if self.critical_threshold_pct is None:
            return self.fail_threshold_pct
        return self.critical_threshold_pct

    def validate(self) -> None:
        def bad(message: str) -> None:
            raise InvalidConfig(message)

        if self.n_uavs < 1:
            bad("n_uavs must be at least 1")
        if self.n_lps < 1:
            bad("n_lps must be at least 1")
        if self.n_uavs + self.n_lps > 254:
            bad("n_uavs + n_lps must leave room in the 1-255 sys_id space")
        width, height = self.area_m
        if width <= 0 or height <= 0:
            bad("area_m dimensions must be positive")
        cmin, cmax = self.consumption_pct_per_s
        if not 0 < cmin <= cmax:
            bad("consumption_pct_per_s must satisfy 0 < min <= max")
        if not 0 <= self.fail_threshold_pct < self.request_threshold_pct <= 100:
            bad("thresholds must satisfy 0 <= fail < request <= 100")
        blo, bhi = self.initial_battery_pct
        if not 0 <= blo <= bhi <= 100:
            bad("initial_battery_pct must satisfy 0 <= low <= high <= 100")
        if self.spawn_radius_m < 0 or self.max_step_m_per_s < 0:
            bad("spawn_radius_m and max_step_m_per_s must be non-negative")
        if self.duration_s < 0:
            bad("duration_s must be non-negative")
        if self.service_duration_s < 0 or self.alignment_duration_s < 0:
            bad("phase durations must be non-negative")
        if self.boarding_timeout_s <= 0:
            bad("boarding_timeout_s must be positive")
        if not 0 <= self.seed < 2**64:
            bad("seed must be an unsigned 64-bit integer")
        if self.lp_positions is not None:
            if len(self.lp_positions) != self.n_lps:
                bad("lp_positions length must equal n_lps")
            for x, y in self.lp_positions:
                if not (0 <= x <= width and 0 <= y <= height):
                    bad(f"LP position ({x}, {y}) lies outside the area")

    def resolved_lp_positions(self) -> list[tuple[float, float]]:
        """Explicit positions, or a deterministic centered grid when AUTO."""
        if self.lp_positions is not None:
            return [(float(x), float(y)) for x, y in self.lp_positions]
        width, height = self.area_m
        n = self.n_lps
        if n == 1:
            return [(width / 2.0, height / 2.0)]
        cols = math.ceil(math.sqrt(n))
        rows = math.ceil(n / cols)
        return [
            ((i % cols + 0.5) * width / cols, (i // cols + 0.5) * height / rows)
            for i in range(n)
        ]


def uav_rng(seed: int, index: int) -> np.random.Generator:
    """The dedicated random stream of vehicle `index` (0-based)."""
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(entropy=seed, spawn_key=(1, index)))
    )


def sample_consumption(rng: np.random.Generator, min_pct: float, max_pct: float) -> float:
    """One battery-consumption draw, uniform in [min_pct, max_pct]."""
    if min_pct > max_pct:
        raise ValueError("min_pct must not exceed max_pct")
    return float(rng.uniform(min_pct, max_pct))


def sample_displacement(
    rng: np.random.Generator, max_step: float
) -> tuple[float, float]:
    """One 2D displacement draw, each component uniform in [-max_step, max_step]."""
    if max_step < 0:
        raise ValueError("max_step must be non-negative")
    dx = float(rng.uniform(-max_step, max_step))
    dy = float(rng.uniform(-max_step, max_step))
    return dx, dy


@dataclass
class SimReport:
    outcome: str
    min_battery_pct: dict[str, float]
    failures: list[dict]
    services_completed: dict[str, int]
    queue_wait_mean_s: float
    queue_wait_max_s: float
    queue_wait_count: int
    config: dict
    rng: str = RNG_DESCRIPTION

    @property
    def passed(self) -> bool:
        return self.outcome == "PASS"

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


class TraceWriter:
    """JSON-lines trace emitter; one record per line, header first.

    Key order is fixed by construction, so records are byte-stable
    without re-sorting.
    """

    def __init__(self, stream: IO[str]):
        self._stream = stream
        self._dumps = json.JSONEncoder(separators=(",", ":")).encode

    def header(self, config: dict) -> None:
        self._write(
            {"header": {"config": config, "rng": RNG_DESCRIPTION, "trace_format": TRACE_FORMAT}}
        )

    def record(self, t: float, actor: str, kind: str, detail: dict) -> None:
        self._write({"t": t, "actor": actor, "kind": kind, "detail": detail})

    def _write(self, obj: dict) -> None:
        self._stream.write(self._dumps(obj) + "\n")


@dataclass
class _UavBody:
    """Simulation-side physical twin of one aerial platform."""

    sys_id: int
    actor: str
    node: ApNode
    rng: np.random.Generator
    battery: float
    position: tuple[float, float]
    min_battery: float
    failed: bool = False


class _Clock:
    def __init__(self) -> None:
        self.now = 0.0

    def timestamp_units(self) -> int:
        return int(self.now * TIMESTAMP_UNITS_PER_S)


def _clamp_to_area(
    x: float, y: float, area: tuple[float, float]
) -> tuple[float, float]:
    return (min(max(x, 0.0), area[0]), min(max(y, 0.0), area[1]))


def run_sim(cfg: SimConfig, trace: IO[str] | None = None) -> SimReport:
    """Run one simulation; optionally stream the trace to a text file."""
    cfg.validate()
    lp_positions = cfg.resolved_lp_positions()
    lp_ids = list(range(1, cfg.n_lps + 1))
    ap_ids = list(range(cfg.n_lps + 1, cfg.n_lps + 1 + cfg.n_uavs))
    roster = list(zip(lp_ids, lp_positions))
    lp_pos_by_id = dict(roster)

    clock = _Clock()
    bus = InMemoryBus(latency_s=1.0)

    lps: list[LpNode] = []
    for lp_id, position in roster:
        lps.append(
            LpNode(
                lp_id,
                position,
                service_duration_s=cfg.service_duration_s,
                alignment_duration_s=cfg.alignment_duration_s,
                boarding_timeout_s=cfg.boarding_timeout_s,
                critical_threshold_pct=cfg.critical_pct,
                lp_roster=roster,
                liveness_window_s=cfg.liveness_window_s,
                liveness_min_count=cfg.liveness_min_count,
            )
        )
        bus.register(
            lp_id,
            "LP",
            signing=SigningContext(NETWORK_SECRET, 0, clock.timestamp_units),
            keystore=Keystore({0: NETWORK_SECRET}),
        )

    uavs: list[_UavBody] = []
    for index, ap_id in enumerate(ap_ids):
        rng = uav_rng(cfg.seed, index)
        home = lp_positions[index % cfg.n_lps]
        radius = cfg.spawn_radius_m * math.sqrt(float(rng.uniform(0.0, 1.0)))
        angle = 2.0 * math.pi * float(rng.uniform(0.0, 1.0))
        position = _clamp_to_area(
            home[0] + radius * math.cos(angle),
            home[1] + radius * math.sin(angle),
            cfg.area_m,
        )
        battery = float(rng.uniform(*cfg.initial_battery_pct))
        node = ApNode(
            ap_id,
            roster,
            request_threshold_pct=cfg.request_threshold_pct,
            reserve_floor_pct=cfg.fail_threshold_pct,
            cruise_speed_m_per_s=cfg.max_step_m_per_s,
            max_consumption_pct_per_s=cfg.consumption_pct_per_s[1],
            service_duration_estimate_s=cfg.service_duration_s,
            departure_clear_s=cfg.departure_clear_s,
        )
        node.battery_pct = battery
        node.position = position
        uavs.append(
            _UavBody(
                sys_id=ap_id,
                actor=f"AP{ap_id}",
                node=node,
                rng=rng,
                battery=battery,
                position=position,
                min_battery=battery,
            )
        )
        bus.register(
            ap_id,
            "AP",
            signing=SigningContext(NETWORK_SECRET, 0, clock.timestamp_units),
            keystore=Keystore({0: NETWORK_SECRET}),
        )

    nodes = {lp.sys_id: lp for lp in lps}
    nodes.update({body.sys_id: body.node for body in uavs})
    bodies = {body.sys_id: body for body in uavs}
    actor_names = {lp.sys_id: f"LP{lp.sys_id}" for lp in lps}
    actor_names.update({body.sys_id: body.actor for body in uavs})

    tracer = TraceWriter(trace) if trace is not None else None
    if tracer is not None:
        tracer.header(cfg.to_dict())

    failures: list[dict] = []

    def flush(sys_id: int, outbound_list, t: float) -> None:
        node = nodes[sys_id]
        for from_state, to_state in node.drain_transitions():
            if tracer is not None:
                tracer.record(
                    t,
                    actor_names[sys_id],
                    "STATE_CHANGE",
                    {"from": from_state.name, "to": to_state.name},
                )
            if (from_state, to_state) == (NodeState.BEING_SERVICED, NodeState.DEPARTING):
                body = bodies[sys_id]
                body.battery = 100.0
                body.node.battery_pct = 100.0
                if tracer is not None:
                    tracer.record(
                        t,
                        actor_names[sys_id],
                        "BATTERY",
                        {"battery_pct": 100.0, "event": "service_complete_restore"},
                    )
        for outbound in outbound_list:
            deliveries = bus.send(sys_id, outbound, t)
            if tracer is not None and deliveries:
                fields = message_to_fields(outbound.msg)
                name = type(outbound.msg).__name__
                for delivery in deliveries:
                    tracer.record(
                        t,
                        actor_names[sys_id],
                        "MSG_SENT",
                        {"msg": name, "fields": fields, "dst": delivery.dest_sys_id},
                    )

    for step in range(int(cfg.duration_s)):
        t = float(step)
        clock.now = t

        # Messages sent last tick arrive now.
        for delivery in bus.pop_due(t):
            header, msg, _sig = bus.decode_for(delivery.dest_sys_id, delivery.frame)
            if tracer is not None:
                tracer.record(
                    t,
                    actor_names[delivery.dest_sys_id],
                    "MSG_RECV",
                    {
                        "msg": type(msg).__name__,
                        "fields": message_to_fields(msg),
                        "src": delivery.src_sys_id,
                    },
                )
            outs = nodes[delivery.dest_sys_id].handle_message(msg, header.sys_id, t)
            flush(delivery.dest_sys_id, outs, t)

        # Physics: consumption, failure detection, motion, arrivals.
        for body in uavs:
            if body.failed:
                continue
            state = body.node.state
            if state in DRAIN_STATES:
                burn = sample_consumption(body.rng, *cfg.consumption_pct_per_s)
                body.battery = max(0.0, body.battery - burn)
                if body.battery < body.min_battery:
                    body.min_battery = body.battery
                if body.battery < cfg.fail_threshold_pct:
                    body.failed = True
                    failures.append(
                        {"uav": body.actor, "t": t, "battery_pct": body.battery}
                    )
                    if tracer is not None:
                        tracer.record(
                            t, body.actor, "FAILURE", {"battery_pct": body.battery}
                        )
                    continue
            if state is NodeState.OPERATING:
                dx, dy = sample_displacement(body.rng, cfg.max_step_m_per_s)
                body.position = _clamp_to_area(
                    body.position[0] + dx, body.position[1] + dy, cfg.area_m
                )
            elif state is NodeState.BOARDING:
                target = lp_pos_by_id[body.node.current_reservation[0]]
                distance = math.dist(body.position, target)
                if distance <= cfg.max_step_m_per_s:
                    body.position = target
                    flush(body.sys_id, body.node.notify_arrival(t), t)
                else:
                    scale = cfg.max_step_m_per_s / distance
                    body.position = (
                        body.position[0] + (target[0] - body.position[0]) * scale,
                        body.position[1] + (target[1] - body.position[1]) * scale,
                    )

        for body in uavs:
            if body.failed:
                continue
            flush(body.sys_id, body.node.tick(t, body.battery, body.position), t)

        for lp in lps:
            flush(lp.sys_id, lp.tick(t), t)

        if tracer is not None:
            for lp in lps:
                tracer.record(
                    t,
                    actor_names[lp.sys_id],
                    "TICK",
                    {
                        "state": lp.state.name,
                        "queue_len": len(lp.queue),
                        "current_ap": lp.current_ap,
                    },
                )
            for body in uavs:
                tracer.record(
                    t,
                    body.actor,
                    "TICK",
                    {
                        "state": body.node.state.name,
                        "battery_pct": body.battery,
                        "x": body.position[0],
                        "y": body.position[1],
                        "failed": body.failed,
                    },
                )

    waits = [wait for lp in lps for wait in lp.wait_samples]
    return SimReport(
        outcome="FAIL" if failures else "PASS",
        min_battery_pct={body.actor: body.min_battery for body in uavs},
        failures=failures,
        services_completed={f"LP{lp.sys_id}": lp.services_completed for lp in lps},
        queue_wait_mean_s=sum(waits) / len(waits) if waits else 0.0,
        queue_wait_max_s=max(waits) if waits else 0.0,
        queue_wait_count=len(waits),
        config=cfg.to_dict(),
    )


@dataclass
class SweepRun:
    seed: int
    outcome: str
    fleet_min_battery_pct: float


@dataclass
class SweepResult:
    runs: list[SweepRun] = field(default_factory=list)

    @property
    def pass_count(self) -> int:
        return sum(1 for run in self.runs if run.outcome == "PASS")

    @property
    def pass_rate(self) -> float:
        return self.pass_count / len(self.runs) if self.runs else 0.0

    def min_battery_values(self) -> list[float]:
        return [run.fleet_min_battery_pct for run in self.runs]

    def to_dict(self) -> dict:
        return {
            "pass_count": self.pass_count,
            "total": len(self.runs),
            "pass_rate": self.pass_rate,
            "runs": [asdict(run) for run in self.runs],
        }


def sweep(cfg: SimConfig, n_seeds: int) -> SweepResult:
    """Run n_seeds consecutive seeds starting at cfg.seed."""
    if n_seeds < 1:
        raise InvalidConfig("n_seeds must be at least 1")
    result = SweepResult()
    for offset in range(n_seeds):
        run_cfg = replace(cfg, seed=cfg.seed + offset)
        report = run_sim(run_cfg)
        result.runs.append(
            SweepRun(
                seed=run_cfg.seed,
                outcome=report.outcome,
                fleet_min_battery_pct=min(report.min_battery_pct.values()),
            )
        )
    return result
