"""Airspace-volume negotiation with a traffic-management authority.

The ground control system asks a UTM authority for exclusive use of a
tubular space-time volume: propose, receive a cost quote, approve,
activate at mission start, complete, and finally release. The authority
here is an in-repo mock with a registry of allocated volumes and time
scoped no-fly zones; conflicting proposals come back with a Conflicts
verdict and the client retries with deterministic adjustments.

Wire format: each frame is a 4-byte big-endian length prefix followed by
one UTF-8 JSON object. Every frame carries three envelope fields --
"session" (client session identifier), "seq" (per-session sequence
number, strictly increasing; stale or repeated numbers are rejected as
OutOfOrderMessage), and "kind" (message tag) -- plus the payload fields
of the message classes below. Volumes are encoded as {"waypoints":
[[east, north, up], ...], "outer_radius": r, "window": [t0, t1]}; no-fly
zones as {"footprint": [[x, y], ...], "alt_min": a0, "alt_max": a1,
"t_start": t0, "t_end": t1, "name": s}.

Concurrency: the authority is a single serialization point; every
message is handled under one lock in arrival order. Approve re-checks
conflicts inside that critical section, so of two racing approvals for
intersecting volumes exactly one succeeds.
"""

from __future__ import annotations

import json
import math
import os
import socket
import socketserver
import struct
import threading
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .geometry import (
    DEFAULT_SAMPLE_STEP,
    CorridorTube,
    GeometryError,
    NoFlyZone,
    Point3,
    Route,
    build_route,
    distance_to_route,
    intersects_nofly,
    windows_overlap,
)

MAX_FRAME_BYTES = 16 * 1024 * 1024


class UtmError(ValueError):
    pass


class OutOfOrderMessage(UtmError):
    pass


class UnknownAllocation(UtmError):
    pass


class ApproveWithoutQuote(UtmError):
    pass


class InvalidTransition(UtmError):
    pass


class MalformedMessage(UtmError):
    pass


class TransportFailure(UtmError):
    pass


# error names that travel in Reject.reasons and re-raise client-side
_WIRE_ERRORS = {
    "OutOfOrderMessage": OutOfOrderMessage,
    "UnknownAllocation": UnknownAllocation,
    "ApproveWithoutQuote": ApproveWithoutQuote,
    "InvalidTransition": InvalidTransition,
    "MalformedMessage": MalformedMessage,
}


# -- domain types ------------------------------------------------------------


@dataclass(frozen=True)
class AirspaceVolume:
    """A corridor tube reserved for a time window."""

    tube: CorridorTube
    window: Tuple[float, float]

    def __post_init__(self):
        if not self.window[0] < self.window[1]:
            raise UtmError("volume window requires t_start < t_end")

    @property
    def duration(self) -> float:
        return self.window[1] - self.window[0]


class AllocationState(Enum):
    PROPOSED = "Proposed"
    COSTED = "Costed"
    APPROVED = "Approved"
    ACTIVE = "Active"
    COMPLETED = "Completed"
    RELEASED = "Released"
    REJECTED = "Rejected"


_ALLOWED_TRANSITIONS = {
    AllocationState.PROPOSED: {AllocationState.COSTED},
    AllocationState.COSTED: {AllocationState.APPROVED, AllocationState.REJECTED},
    AllocationState.APPROVED: {AllocationState.ACTIVE},
    AllocationState.ACTIVE: {AllocationState.COMPLETED, AllocationState.RELEASED},
    AllocationState.COMPLETED: {AllocationState.RELEASED},
    AllocationState.RELEASED: set(),
    AllocationState.REJECTED: set(),
}

# states that exclude other traffic from the volume
_BLOCKING = (AllocationState.APPROVED, AllocationState.ACTIVE)
# states worth persisting across a registry reload
_DURABLE = (AllocationState.APPROVED, AllocationState.ACTIVE, AllocationState.COMPLETED)


@dataclass
class AllocationRecord:
    allocation_id: str
    volume: AirspaceVolume
    state: AllocationState
    cost: float
    negotiation_round: int = 0

    def transition(self, to: AllocationState) -> None:
        if to not in _ALLOWED_TRANSITIONS[self.state]:
            raise InvalidTransition(
                f"{self.allocation_id}: {self.state.value} -> {to.value}"
            )
        self.state = to


class Verdict(Enum):
    ACCEPTABLE = "Acceptable"
    CONFLICTS = "Conflicts"


# -- messages ----------------------------------------------------------------


@dataclass(frozen=True)
class InfoRequest:
    region: AirspaceVolume


@dataclass(frozen=True)
class InfoResponse:
    noflyzones: Tuple[NoFlyZone, ...]
    allocated_volumes: Tuple[AirspaceVolume, ...]


@dataclass(frozen=True)
class Propose:
    volume: AirspaceVolume


@dataclass(frozen=True)
class CostQuote:
    """Reply to a proposal. The allocation id names the quoted record so a
    follow-up Approve can refer to it."""

    allocation_id: str
    cost: float
    verdict: Verdict
    conflicts: Tuple[str, ...] = ()


@dataclass(frozen=True)
class Approve:
    allocation_id: str


@dataclass(frozen=True)
class Activate:
    allocation_id: str


@dataclass(frozen=True)
class Complete:
    allocation_id: str


@dataclass(frozen=True)
class Release:
    allocation_id: str


@dataclass(frozen=True)
class Ack:
    allocation_id: str = ""


@dataclass(frozen=True)
class Reject:
    reasons: Tuple[str, ...]


UtmMessage = Union[
    InfoRequest, InfoResponse, Propose, CostQuote, Approve, Activate,
    Complete, Release, Ack, Reject,
]


# -- wire encoding -----------------------------------------------------------


def volume_to_dict(v: AirspaceVolume) -> dict:
    return {
        "waypoints": [[p.east, p.north, p.up] for p in v.tube.centerline.waypoints],
        "outer_radius": v.tube.outer_radius,
        "window": [v.window[0], v.window[1]],
    }


def volume_from_dict(d: dict) -> AirspaceVolume:
    route = build_route([Point3(*w) for w in d["waypoints"]])
    return AirspaceVolume(
        CorridorTube(route, float(d["outer_radius"])),
        (float(d["window"][0]), float(d["window"][1])),
    )


def zone_to_dict(z: NoFlyZone) -> dict:
    return {
        "footprint": [[x, y] for x, y in z.footprint],
        "alt_min": z.alt_min,
        "alt_max": z.alt_max,
        "t_start": z.t_start,
        "t_end": z.t_end,
        "name": z.name,
    }


def zone_from_dict(d: dict) -> NoFlyZone:
    return NoFlyZone(
        footprint=tuple((float(x), float(y)) for x, y in d["footprint"]),
        alt_min=float(d["alt_min"]),
        alt_max=float(d["alt_max"]),
        t_start=float(d["t_start"]),
        t_end=float(d["t_end"]),
        name=str(d.get("name", "")),
    )


def encode_message(msg: UtmMessage, session: str, seq: int) -> dict:
    frame: dict = {"session": session, "seq": seq, "kind": type(msg).__name__}
    if isinstance(msg, InfoRequest):
        frame["region"] = volume_to_dict(msg.region)
    elif isinstance(msg, InfoResponse):
        frame["noflyzones"] = [zone_to_dict(z) for z in msg.noflyzones]
        frame["allocated_volumes"] = [volume_to_dict(v) for v in msg.allocated_volumes]
    elif isinstance(msg, Propose):
        frame["volume"] = volume_to_dict(msg.volume)
    elif isinstance(msg, CostQuote):
        frame["allocation_id"] = msg.allocation_id
        frame["cost"] = msg.cost
        frame["verdict"] = msg.verdict.value
        frame["conflicts"] = list(msg.conflicts)
    elif isinstance(msg, (Approve, Activate, Complete, Release)):
        frame["allocation_id"] = msg.allocation_id
    elif isinstance(msg, Ack):
        frame["allocation_id"] = msg.allocation_id
    elif isinstance(msg, Reject):
        frame["reasons"] = list(msg.reasons)
    else:
        raise MalformedMessage(f"cannot encode {type(msg).__name__}")
    return frame


def decode_message(frame: dict) -> UtmMessage:
    try:
        kind = frame["kind"]
        if kind == "InfoRequest":
            return InfoRequest(volume_from_dict(frame["region"]))
        if kind == "InfoResponse":
            return InfoResponse(
                tuple(zone_from_dict(z) for z in frame["noflyzones"]),
                tuple(volume_from_dict(v) for v in frame["allocated_volumes"]),
            )
        if kind == "Propose":
            return Propose(volume_from_dict(frame["volume"]))
        if kind == "CostQuote":
            return CostQuote(
                str(frame["allocation_id"]),
                float(frame["cost"]),
                Verdict(frame["verdict"]),
                tuple(str(c) for c in frame.get("conflicts", ())),
            )
        if kind in ("Approve", "Activate", "Complete", "Release"):
            cls = {"Approve": Approve, "Activate": Activate,
                   "Complete": Complete, "Release": Release}[kind]
            return cls(str(frame["allocation_id"]))
        if kind == "Ack":
            return Ack(str(frame.get("allocation_id", "")))
        if kind == "Reject":
            return Reject(tuple(str(r) for r in frame["reasons"]))
    except (KeyError, TypeError, ValueError, GeometryError) as exc:
        raise MalformedMessage(f"bad {frame.get('kind', '?')} frame: {exc}") from None
    raise MalformedMessage(f"unknown message kind: {kind!r}")


# -- geometry of volumes -----------------------------------------------------


def _tube_min_distance(a: CorridorTube, b: CorridorTube,
                       sample_step: float = DEFAULT_SAMPLE_STEP) -> float:
    """Smallest centerline-to-centerline distance, sampled every
    sample_step meters along each tube (error bounded by the step)."""

    def one_sided(src: Route, dst: Route) -> float:
        total = src.total_length
        n = max(2, int(math.ceil(total / sample_step)) + 1)
        best = math.inf
        for i in range(n):
            s = total * i / (n - 1)
            d = distance_to_route(src.point_at(s), dst)
            if d < best:
                best = d
        return best

    return min(
        one_sided(a.centerline, b.centerline),
        one_sided(b.centerline, a.centerline),
    )


def volumes_intersect(a: AirspaceVolume, b: AirspaceVolume,
                      sample_step: float = DEFAULT_SAMPLE_STEP) -> bool:
    """True iff the windows overlap and the tubes come closer than the sum
    of their radii. Touching tubes do not intersect."""
    if not windows_overlap(a.window, b.window):
        return False
    gap = _tube_min_distance(a.tube, b.tube, sample_step)
    return gap < a.tube.outer_radius + b.tube.outer_radius


# -- registry and costing ----------------------------------------------------


@dataclass(frozen=True)
class UtmConfig:
    """Costing and deconfliction constants for the mock authority.

    cost = c0 + alpha * cross_section_area * length * duration
              + beta  * (blocking allocations within buffer_distance)
    """

    c0: float = 100.0
    alpha: float = 1e-6
    beta: float = 25.0
    buffer_distance: float = 200.0
    sample_step: float = DEFAULT_SAMPLE_STEP

    def __post_init__(self):
        if self.alpha <= 0 or self.beta < 0 or self.buffer_distance < 0:
            raise UtmError("cost constants out of range")


class VolumeRegistry:
    """Allocated volumes plus no-fly zones; the authority's source of truth."""

    def __init__(self, noflyzones: Sequence[NoFlyZone] = (),
                 config: UtmConfig = UtmConfig()):
        self.noflyzones: List[NoFlyZone] = list(noflyzones)
        self.config = config
        self.records: Dict[str, AllocationRecord] = {}
        self._counter = 0

    def next_id(self) -> str:
        self._counter += 1
        return f"A{self._counter:04d}"

    def blocking(self) -> List[AllocationRecord]:
        return [r for r in self.records.values() if r.state in _BLOCKING]

    def evaluate(self, volume: AirspaceVolume) -> Tuple[float, List[str]]:
        """Cost and conflict list for a candidate volume, in one scan.

        Conflicts name blocking allocations whose tubes come within the
        sum of radii during an overlapping window, and no-fly zones the
        tube penetrates while the zone is active. The nearby surcharge
        counts blocking allocations with overlapping windows closer than
        buffer_distance.
        """
        cfg = self.config
        conflicts: List[str] = []
        nearby = 0
        for r in self.blocking():
            if not windows_overlap(r.volume.window, volume.window):
                continue
            gap = _tube_min_distance(r.volume.tube, volume.tube, cfg.sample_step)
            if gap < r.volume.tube.outer_radius + volume.tube.outer_radius:
                conflicts.append(r.allocation_id)
            if gap < cfg.buffer_distance:
                nearby += 1
        for zone in self.noflyzones:
            if not windows_overlap((zone.t_start, zone.t_end), volume.window):
                continue
            if intersects_nofly(volume.tube, zone, volume.window, cfg.sample_step):
                conflicts.append(f"nofly:{zone.name}" if zone.name else "nofly")
        area = math.pi * volume.tube.outer_radius ** 2
        length = volume.tube.centerline.total_length
        cost = cfg.c0 + cfg.alpha * area * length * volume.duration + cfg.beta * nearby
        return cost, conflicts

    def conflicts_with(self, volume: AirspaceVolume) -> List[str]:
        return self.evaluate(volume)[1]

    def cost_of(self, volume: AirspaceVolume) -> float:
        return self.evaluate(volume)[0]


def utm_handle(msg: UtmMessage, registry: VolumeRegistry) -> Tuple[UtmMessage, VolumeRegistry]:
    """Process one sequencing-validated message against the registry.

    Mutates the registry in place and returns it alongside the reply.
    Raises UnknownAllocation, ApproveWithoutQuote, or InvalidTransition;
    servers translate those into Reject replies.
    """
    if isinstance(msg, InfoRequest):
        region = msg.region
        step = registry.config.sample_step
        zones = tuple(
            z for z in registry.noflyzones
            if windows_overlap((z.t_start, z.t_end), region.window)
            and intersects_nofly(region.tube, z, region.window, step)
        )
        volumes = tuple(
            r.volume for r in registry.blocking()
            if volumes_intersect(r.volume, region, step)
        )
        return InfoResponse(zones, volumes), registry

    if isinstance(msg, Propose):
        cost, conflicts = registry.evaluate(msg.volume)
        record = AllocationRecord(
            registry.next_id(), msg.volume, AllocationState.PROPOSED, cost
        )
        registry.records[record.allocation_id] = record
        record.transition(AllocationState.COSTED)
        if conflicts:
            record.transition(AllocationState.REJECTED)
            return CostQuote(
                record.allocation_id, cost, Verdict.CONFLICTS, tuple(conflicts)
            ), registry
        return CostQuote(record.allocation_id, cost, Verdict.ACCEPTABLE), registry

    if isinstance(msg, Approve):
        record = registry.records.get(msg.allocation_id)
        if record is None:
            raise UnknownAllocation(msg.allocation_id)
        if record.state is not AllocationState.COSTED:
            raise ApproveWithoutQuote(
                f"{msg.allocation_id} is {record.state.value}, not awaiting approval"
            )
        # the quote may have been raced by another approval: re-check now,
        # inside the authority's critical section
        conflicts = registry.conflicts_with(record.volume)
        if conflicts:
            record.transition(AllocationState.REJECTED)
            return Reject(("Conflict",) + tuple(conflicts)), registry
        record.transition(AllocationState.APPROVED)
        return Ack(record.allocation_id), registry

    if isinstance(msg, (Activate, Complete, Release)):
        record = registry.records.get(msg.allocation_id)
        if record is None:
            raise UnknownAllocation(msg.allocation_id)
        if isinstance(msg, Activate):
            record.transition(AllocationState.ACTIVE)
        elif isinstance(msg, Complete):
            record.transition(AllocationState.COMPLETED)
        else:
            record.transition(AllocationState.RELEASED)
            del registry.records[msg.allocation_id]
        return Ack(msg.allocation_id), registry

    return Reject(("UnexpectedMessage", type(msg).__name__)), registry


# -- registry persistence ----------------------------------------------------


def registry_to_text(registry: VolumeRegistry) -> str:
    """Canonical structured-text form: durable allocations plus zones,
    sorted and minified so equal registries serialize byte-identically."""
    allocations = []
    for record in sorted(registry.records.values(), key=lambda r: r.allocation_id):
        if record.state not in _DURABLE:
            continue
        allocations.append({
            "allocation_id": record.allocation_id,
            "cost": record.cost,
            "negotiation_round": record.negotiation_round,
            "state": record.state.value,
            "volume": volume_to_dict(record.volume),
        })
    doc = {
        "allocations": allocations,
        "noflyzones": [zone_to_dict(z) for z in registry.noflyzones],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def registry_from_text(text: str, config: UtmConfig = UtmConfig()) -> VolumeRegistry:
    doc = json.loads(text)
    registry = VolumeRegistry(
        noflyzones=[zone_from_dict(z) for z in doc.get("noflyzones", [])],
        config=config,
    )
    highest = 0
    for rec in doc.get("allocations", []):
        record = AllocationRecord(
            allocation_id=str(rec["allocation_id"]),
            volume=volume_from_dict(rec["volume"]),
            state=AllocationState(rec["state"]),
            cost=float(rec["cost"]),
            negotiation_round=int(rec.get("negotiation_round", 0)),
        )
        registry.records[record.allocation_id] = record
        suffix = record.allocation_id.lstrip("A")
        if suffix.isdigit():
            highest = max(highest, int(suffix))
    registry._counter = highest
    return registry


def save_registry(registry: VolumeRegistry, path: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(registry_to_text(registry))
    os.replace(tmp, path)


def load_registry(path: str, config: UtmConfig = UtmConfig()) -> VolumeRegistry:
    if not os.path.exists(path):
        return VolumeRegistry(config=config)
    with open(path, "r", encoding="utf-8") as fh:
        return registry_from_text(fh.read(), config)


# -- authority (server side) -------------------------------------------------


class UtmAuthority:
    """Mock UTM: validates session sequencing, serializes all decisions
    through one lock, and optionally persists the registry after every
    mutation."""

    MUTATING = (Propose, Approve, Activate, Complete, Release)

    def __init__(self, registry: Optional[VolumeRegistry] = None,
                 persist_path: Optional[str] = None,
                 check_invariants: bool = False):
        self.registry = registry if registry is not None else VolumeRegistry()
        self.persist_path = persist_path
        self.check_invariants = check_invariants
        self._lock = threading.Lock()
        self._sessions: Dict[str, int] = {}
        # allocation ids are never reused and record volumes never mutate,
        # so pairwise intersection results can be cached across checks
        self._pair_cache: Dict[Tuple[str, str], bool] = {}

    def handle_frame(self, frame: dict) -> dict:
        session = str(frame.get("session", ""))
        seq = frame.get("seq")
        if not isinstance(seq, int):
            return encode_message(Reject(("MalformedMessage", "seq")), session, 0)
        with self._lock:
            last = self._sessions.get(session, 0)
            if seq <= last:
                return encode_message(
                    Reject(("OutOfOrderMessage", f"seq {seq} <= {last}")),
                    session, seq,
                )
            self._sessions[session] = seq
            try:
                msg = decode_message(frame)
                reply, _ = utm_handle(msg, self.registry)
            except UtmError as exc:
                reply = Reject((type(exc).__name__, str(exc)))
            else:
                if isinstance(msg, self.MUTATING):
                    if self.check_invariants:
                        self._assert_registry_safe()
                    if self.persist_path:
                        save_registry(self.registry, self.persist_path)
            return encode_message(reply, session, seq)

    def _assert_registry_safe(self) -> None:
        blocking = self.registry.blocking()
        step = self.registry.config.sample_step
        for i, a in enumerate(blocking):
            for b in blocking[i + 1:]:
                key = (a.allocation_id, b.allocation_id)
                hit = self._pair_cache.get(key)
                if hit is None:
                    hit = volumes_intersect(a.volume, b.volume, step)
                    self._pair_cache[key] = hit
                if hit:
                    raise AssertionError(
                        f"registry invariant broken: {a.allocation_id} "
                        f"intersects {b.allocation_id}"
                    )


# -- transports and client ---------------------------------------------------


class InProcessTransport:
    """Direct function-call transport for tests and embedded use."""

    def __init__(self, authority: UtmAuthority):
        self.authority = authority

    def send(self, frame: dict) -> dict:
        return self.authority.handle_frame(frame)

    def close(self) -> None:
        pass


def write_frame(fh, frame: dict) -> None:
    data = json.dumps(frame, separators=(",", ":")).encode("utf-8")
    if len(data) > MAX_FRAME_BYTES:
        raise TransportFailure("frame too large")
    fh.write(struct.pack(">I", len(data)) + data)
    fh.flush()


def read_frame(fh) -> Optional[dict]:
    header = fh.read(4)
    if len(header) < 4:
        return None
    (n,) = struct.unpack(">I", header)
    if n > MAX_FRAME_BYTES:
        raise TransportFailure("frame too large")
    data = b""
    while len(data) < n:
        chunk = fh.read(n - len(data))
        if not chunk:
            raise TransportFailure("connection closed mid-frame")
        data += chunk
    return json.loads(data.decode("utf-8"))


class TcpTransport:
    """Length-prefixed JSON over a local socket; reconnects per attempt."""

    def __init__(self, host: str, port: int, timeout: float = 5.0):
        self.host = host
        self.port = port
        self.timeout = timeout
        self._sock: Optional[socket.socket] = None
        self._fh = None

    def _connect(self):
        if self._sock is not None:
            return
        try:
            self._sock = socket.create_connection(
                (self.host, self.port), timeout=self.timeout
            )
            self._fh = self._sock.makefile("rwb")
        except OSError as exc:
            self._sock = None
            raise TransportFailure(f"connect to {self.host}:{self.port}: {exc}")

    def send(self, frame: dict) -> dict:
        try:
            self._connect()
            write_frame(self._fh, frame)
            reply = read_frame(self._fh)
        except (OSError, TransportFailure) as exc:
            self.close()
            if isinstance(exc, TransportFailure):
                raise
            raise TransportFailure(str(exc))
        if reply is None:
            self.close()
            raise TransportFailure("server closed the connection")
        return reply

    def close(self) -> None:
        if self._fh is not None:
            try:
                self._fh.close()
            except OSError:
                pass
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass
        self._fh = None
        self._sock = None


class UtmClient:
    """GCS-side protocol driver for one session.

    Replies that carry a known error name re-raise as the matching
    exception; transport failures retry the same frame a bounded number
    of times before surfacing."""

    def __init__(self, transport, session: str = "gcs", retries: int = 2):
        self.transport = transport
        self.session = session
        self.retries = retries
        self._seq = 0

    def call(self, msg: UtmMessage) -> UtmMessage:
        self._seq += 1
        frame = encode_message(msg, self.session, self._seq)
        failure: Optional[TransportFailure] = None
        for _ in range(self.retries + 1):
            try:
                reply_frame = self.transport.send(frame)
                break
            except TransportFailure as exc:
                failure = exc
        else:
            assert failure is not None
            raise failure
        reply = decode_message(reply_frame)
        if isinstance(reply, Reject) and reply.reasons:
            error = _WIRE_ERRORS.get(reply.reasons[0])
            if error is not None:
                raise error("; ".join(reply.reasons[1:]) or reply.reasons[0])
        return reply

    def info(self, region: AirspaceVolume) -> InfoResponse:
        reply = self.call(InfoRequest(region))
        if not isinstance(reply, InfoResponse):
            raise UtmError(f"expected InfoResponse, got {type(reply).__name__}")
        return reply

    def propose(self, volume: AirspaceVolume) -> CostQuote:
        reply = self.call(Propose(volume))
        if not isinstance(reply, CostQuote):
            raise UtmError(f"expected CostQuote, got {type(reply).__name__}")
        return reply

    def approve(self, allocation_id: str) -> UtmMessage:
        return self.call(Approve(allocation_id))

    def activate(self, allocation_id: str) -> UtmMessage:
        return self.call(Activate(allocation_id))

    def complete(self, allocation_id: str) -> UtmMessage:
        return self.call(Complete(allocation_id))

    def release(self, allocation_id: str) -> UtmMessage:
        return self.call(Release(allocation_id))

    def close(self) -> None:
        self.transport.close()


# -- negotiation loop --------------------------------------------------------


@dataclass(frozen=True)
class AdjustmentPolicy:
    """Deterministic retry adjustments, applied in fixed order: shift the
    time window, then shift altitude, then shrink the radius. A zero shift
    disables that slot; repeated cycles apply growing multiples."""

    time_shift: float = 300.0
    altitude_shift: float = 10.0
    radius_factor: float = 0.8
    radius_min: float = 5.0

    def steps(self) -> Tuple[str, ...]:
        out: List[str] = []
        if self.time_shift > 0:
            out.append("time")
        if self.altitude_shift > 0:
            out.append("altitude")
        if 0 < self.radius_factor < 1:
            out.append("radius")
        return tuple(out)


@dataclass(frozen=True)
class RoundOutcome:
    round_index: int
    volume: AirspaceVolume
    verdict: Verdict
    conflicts: Tuple[str, ...]
    cost: float


@dataclass(frozen=True)
class NegotiationFailure:
    reason: str
    rounds: Tuple[RoundOutcome, ...]


def adjusted_volume(base: AirspaceVolume, policy: AdjustmentPolicy,
                     round_index: int) -> AirspaceVolume:
    """Volume to propose in a given round; round 1 is the original ask."""
    if round_index <= 1:
        return base
    steps = policy.steps()
    if not steps:
        return base
    i = round_index - 2
    step = steps[i % len(steps)]
    multiple = i // len(steps) + 1
    tube, window = base.tube, base.window
    if step == "time":
        shift = multiple * policy.time_shift
        window = (window[0] + shift, window[1] + shift)
    elif step == "altitude":
        shift = multiple * policy.altitude_shift
        route = build_route([
            Point3(p.east, p.north, p.up + shift)
            for p in tube.centerline.waypoints
        ])
        tube = CorridorTube(route, tube.outer_radius)
    else:
        radius = max(policy.radius_min, tube.outer_radius * policy.radius_factor ** multiple)
        tube = CorridorTube(tube.centerline, radius)
    return AirspaceVolume(tube, window)


def negotiate(
    client: UtmClient,
    mission_volume: AirspaceVolume,
    adjust: AdjustmentPolicy = AdjustmentPolicy(),
    max_rounds: int = 4,
) -> Union[AllocationRecord, NegotiationFailure]:
    """Propose-and-adjust loop: returns an Approved record, or a failure
    carrying the full round history after exactly max_rounds conflicts."""
    if max_rounds < 1:
        raise UtmError("max_rounds must be >= 1")
    client.info(mission_volume)
    history: List[RoundOutcome] = []
    for round_index in range(1, max_rounds + 1):
        volume = adjusted_volume(mission_volume, adjust, round_index)
        quote = client.propose(volume)
        history.append(RoundOutcome(
            round_index, volume, quote.verdict, quote.conflicts, quote.cost
        ))
        if quote.verdict is not Verdict.ACCEPTABLE:
            continue
        reply = client.approve(quote.allocation_id)
        if isinstance(reply, Ack):
            return AllocationRecord(
                allocation_id=quote.allocation_id,
                volume=volume,
                state=AllocationState.APPROVED,
                cost=quote.cost,
                negotiation_round=round_index,
            )
        # lost an approval race: treat like a conflict and keep adjusting
    return NegotiationFailure("rounds_exhausted", tuple(history))


# -- TCP server --------------------------------------------------------------


class _UtmRequestHandler(socketserver.StreamRequestHandler):
    def handle(self):
        while True:
            try:
                frame = read_frame(self.rfile)
            except (TransportFailure, json.JSONDecodeError):
                return
            if frame is None:
                return
            try:
                reply = self.server.authority.handle_frame(frame)
            except Exception as exc:  # never kill the connection loop
                reply = encode_message(
                    Reject(("InternalError", str(exc))),
                    str(frame.get("session", "")), int(frame.get("seq", 0)),
                )
            write_frame(self.wfile, reply)


class UtmServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, authority: UtmAuthority, host: str = "127.0.0.1",
                 port: int = 0):
        super().__init__((host, port), _UtmRequestHandler)
        self.authority = authority

    @property
    def port(self) -> int:
        return self.server_address[1]


def start_utm_server(authority: UtmAuthority, host: str = "127.0.0.1",
                     port: int = 0) -> Tuple[UtmServer, threading.Thread]:
    """Run the authority on a background thread; returns (server, thread).
    Stop with server.shutdown()."""
    server = UtmServer(authority, host, port)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, thread
