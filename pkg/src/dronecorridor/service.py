"""Mission lifecycle orchestration for the ground control system.

A mission moves through: ingest request -> generate ranked corridor
options -> select and negotiate an airspace allocation -> activate and
run the traffic simulation -> complete (or abort) -> release the volume.
Every state change is appended to a per-mission journal (JSON lines);
replaying a journal reconstructs the MissionRecord, and a service
restarted over the same data directory recovers all missions, resuming
active simulations from their last journaled world snapshot.

Concurrency: each mission owns a lock; every mutation (API command or
simulation step) runs under it, which serializes commands against the
stepping loop. Missions share no mutable state except the UTM client,
which serializes its own calls.
"""

from __future__ import annotations

import json
import math
import os
import queue
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

from .fencing import (
    ComplianceLevel,
    EligibilityPolicy,
    core_fence_dims,
    min_headway,
    mission_eligibility,
)
from .geometry import (
    CorridorTube,
    CrossSectionOffset,
    NoFlyZone,
    Point3,
    build_route,
)
from .lanes import (
    DISTRIBUTION_A,
    DISTRIBUTION_B,
    DISTRIBUTION_BASIC_B,
    CrossSectionLayout,
    CustomLayout,
    Distribution,
    FlowDirection,
    Grid2x2,
    LanePlan,
    PlanningError,
    VerticalStack,
    ViolationKind,
    custom_distribution,
    plan_lanes,
    throughput_capacity,
    validate_plan,
)
from .scenario import GeodeticOrigin, ScenarioConfig, parse_point
from .sim import SimConfig, SimReport, TrafficWorld
from .utm import (
    AirspaceVolume,
    AllocationRecord,
    AllocationState,
    InProcessTransport,
    NegotiationFailure,
    UtmAuthority,
    UtmClient,
    load_registry,
    negotiate,
    volume_from_dict,
    volume_to_dict,
)


class ServiceError(ValueError):
    pass


class ValidationFailed(ServiceError):
    def __init__(self, fields: Sequence[str]):
        super().__init__(f"invalid request fields: {', '.join(fields)}")
        self.fields = tuple(fields)


class UnknownMission(ServiceError):
    pass


class Infeasible(ServiceError):
    def __init__(self, reasons: Sequence[str]):
        super().__init__(f"no feasible corridor option: {', '.join(reasons)}")
        self.reasons = tuple(reasons)


class NegotiationFailed(ServiceError):
    def __init__(self, failure: NegotiationFailure):
        super().__init__(f"negotiation failed: {failure.reason}")
        self.failure = failure


class IncompatibleStatus(ServiceError):
    pass


class NotAllocated(ServiceError):
    pass


class OutsideWindow(ServiceError):
    pass


class UAVsStillActive(ServiceError):
    pass


class UnknownEvent(ServiceError):
    pass


class AlreadyAcknowledged(ServiceError):
    pass


# -- domain types ------------------------------------------------------------


class MissionUtility(Enum):
    FACTORY = "Factory"
    SHORE_TO_SHIP = "ShoreToShip"
    BORDER_PATROL = "BorderPatrol"
    LAST_MILE = "LastMile"
    EMERGENCY = "Emergency"
    AGRICULTURE = "Agriculture"


def time_of_day_seconds(value: Union[str, float, int]) -> float:
    """Clock time as seconds since midnight; accepts 'HH:MM[:SS]' or a
    number of seconds."""
    if isinstance(value, (int, float)):
        return float(value)
    parts = value.split(":")
    if len(parts) not in (2, 3):
        raise ValidationFailed(("time_of_day",))
    try:
        h, m = int(parts[0]), int(parts[1])
        s = int(parts[2]) if len(parts) == 3 else 0
    except ValueError:
        raise ValidationFailed(("time_of_day",)) from None
    if not (0 <= h < 24 and 0 <= m < 60 and 0 <= s < 60):
        raise ValidationFailed(("time_of_day",))
    return h * 3600.0 + m * 60.0 + s


@dataclass(frozen=True)
class MissionRequest:
    start: Point3
    destination: Point3
    altitude: float
    expected_throughput: float
    utility: MissionUtility
    desired_duration: float
    time_of_day: float
    available_cls: Tuple[ComplianceLevel, ...] = (
        ComplianceLevel.CL1, ComplianceLevel.CL2, ComplianceLevel.CL3,
    )

    def validate(self) -> None:
        bad: List[str] = []
        if (self.start.east, self.start.north) == (
                self.destination.east, self.destination.north):
            bad += ["start", "destination"]
        if self.expected_throughput <= 0:
            bad.append("expected_throughput")
        if self.desired_duration <= 0:
            bad.append("desired_duration")
        if self.altitude <= 0:
            bad.append("altitude")
        if not self.available_cls:
            bad.append("available_cls")
        if self.time_of_day < 0 or self.time_of_day >= 86400:
            bad.append("time_of_day")
        if bad:
            raise ValidationFailed(bad)

    def to_dict(self) -> dict:
        return {
            "start": [self.start.east, self.start.north, self.start.up],
            "destination": [self.destination.east, self.destination.north,
                            self.destination.up],
            "altitude": self.altitude,
            "expected_throughput": self.expected_throughput,
            "utility": self.utility.value,
            "desired_duration": self.desired_duration,
            "time_of_day": self.time_of_day,
            "available_cls": [cl.value for cl in self.available_cls],
        }

    @staticmethod
    def from_dict(d: dict) -> "MissionRequest":
        return MissionRequest(
            start=Point3(*d["start"]),
            destination=Point3(*d["destination"]),
            altitude=float(d["altitude"]),
            expected_throughput=float(d["expected_throughput"]),
            utility=MissionUtility(d["utility"]),
            desired_duration=float(d["desired_duration"]),
            time_of_day=float(d["time_of_day"]),
            available_cls=tuple(ComplianceLevel(c) for c in d["available_cls"]),
        )


def request_from_raw(raw: dict, origin: Optional[GeodeticOrigin]) -> MissionRequest:
    """Build a request from a parsed request file, converting geodetic
    points through the scenario origin."""
    try:
        cls_raw = raw.get("available_cls", ["CL1", "CL2", "CL3"])
        return MissionRequest(
            start=parse_point(raw["start"], origin),
            destination=parse_point(raw["destination"], origin),
            altitude=float(raw["altitude"]),
            expected_throughput=float(raw["expected_throughput"]),
            utility=MissionUtility(raw.get("utility", "LastMile")),
            desired_duration=float(raw["desired_duration"]),
            time_of_day=time_of_day_seconds(raw.get("time_of_day", 0.0)),
            available_cls=tuple(ComplianceLevel(c) for c in cls_raw),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ValidationFailed):
            raise
        raise ValidationFailed((str(exc),)) from None


@dataclass(frozen=True)
class CorridorOption:
    option_id: str
    corridor: CorridorTube
    lane_plan: LanePlan
    v_bounds: Tuple[float, float]
    required_cl: ComplianceLevel
    active_window: Tuple[float, float]
    score: float
    rationale: str
    coupled_pairs: Tuple[Tuple[str, str], ...] = ()

    def to_dict(self) -> dict:
        return {
            "option_id": self.option_id,
            "volume": volume_to_dict(
                AirspaceVolume(self.corridor, self.active_window)),
            "plan": _plan_to_dict(self.lane_plan),
            "v_bounds": list(self.v_bounds),
            "required_cl": self.required_cl.value,
            "score": self.score,
            "rationale": self.rationale,
            "coupled_pairs": [list(p) for p in self.coupled_pairs],
        }

    @staticmethod
    def from_dict(d: dict) -> "CorridorOption":
        volume = volume_from_dict(d["volume"])
        return CorridorOption(
            option_id=d["option_id"],
            corridor=volume.tube,
            lane_plan=_plan_from_dict(d["plan"]),
            v_bounds=(float(d["v_bounds"][0]), float(d["v_bounds"][1])),
            required_cl=ComplianceLevel(d["required_cl"]),
            active_window=volume.window,
            score=float(d["score"]),
            rationale=d["rationale"],
            coupled_pairs=tuple(
                (a, b) for a, b in d.get("coupled_pairs", [])),
        )


def _layout_to_dict(layout: CrossSectionLayout) -> dict:
    if isinstance(layout, VerticalStack):
        return {"type": "VerticalStack", "spacing": layout.spacing}
    if isinstance(layout, Grid2x2):
        return {"type": "Grid2x2", "h_spacing": layout.h_spacing,
                "v_spacing": layout.v_spacing}
    return {"type": "Custom",
            "offsets": [[o.lateral, o.vertical] for o in layout.offsets]}


def _layout_from_dict(d: dict) -> CrossSectionLayout:
    if d["type"] == "VerticalStack":
        return VerticalStack(float(d["spacing"]))
    if d["type"] == "Grid2x2":
        return Grid2x2(float(d["h_spacing"]), float(d["v_spacing"]))
    return CustomLayout(tuple(
        CrossSectionOffset(float(a), float(b)) for a, b in d["offsets"]))


def _distribution_to_dict(dist: Distribution) -> dict:
    return {"name": dist.name,
            "assignments": [[lane, direction.value]
                            for lane, direction in dist.assignments]}


def _distribution_from_dict(d: dict) -> Distribution:
    assignments = tuple(
        (lane, FlowDirection(direction)) for lane, direction in d["assignments"])
    if d["name"] == "Custom":
        return custom_distribution(assignments)
    return Distribution(d["name"], assignments)


def _plan_to_dict(plan: LanePlan) -> dict:
    return {
        "corridor": {
            "waypoints": [[p.east, p.north, p.up]
                          for p in plan.corridor.centerline.waypoints],
            "outer_radius": plan.corridor.outer_radius,
        },
        "layout": _layout_to_dict(plan.layout),
        "distribution": _distribution_to_dict(plan.distribution),
        "lane_radius": plan.lanes[0].radius if plan.lanes else 3.0,
    }


def _plan_from_dict(d: dict) -> LanePlan:
    corridor = CorridorTube(
        build_route([Point3(*w) for w in d["corridor"]["waypoints"]]),
        float(d["corridor"]["outer_radius"]),
    )
    return plan_lanes(
        corridor,
        _layout_from_dict(d["layout"]),
        _distribution_from_dict(d["distribution"]),
        float(d["lane_radius"]),
    )


class MissionStatus(Enum):
    DRAFT = "Draft"
    OPTIONS_READY = "OptionsReady"
    NEGOTIATING = "Negotiating"
    ALLOCATED = "Allocated"
    ACTIVE = "Active"
    COMPLETED = "Completed"
    ABORTED = "Aborted"
    RELEASED = "Released"


_LIFECYCLE = {
    MissionStatus.DRAFT: {MissionStatus.OPTIONS_READY},
    MissionStatus.OPTIONS_READY: {MissionStatus.NEGOTIATING},
    MissionStatus.NEGOTIATING: {MissionStatus.ALLOCATED,
                                MissionStatus.OPTIONS_READY},
    MissionStatus.ALLOCATED: {MissionStatus.ACTIVE},
    MissionStatus.ACTIVE: {MissionStatus.COMPLETED, MissionStatus.ABORTED},
    MissionStatus.COMPLETED: {MissionStatus.RELEASED},
    MissionStatus.ABORTED: {MissionStatus.RELEASED},
    MissionStatus.RELEASED: set(),
}


@dataclass(frozen=True)
class JournalEvent:
    seq: int
    kind: str
    data: dict

    def to_json(self) -> str:
        return json.dumps({"seq": self.seq, "kind": self.kind, "data": self.data},
                          separators=(",", ":"), sort_keys=True)

    @staticmethod
    def from_json(line: str) -> "JournalEvent":
        d = json.loads(line)
        return JournalEvent(int(d["seq"]), str(d["kind"]), d["data"])


# operator commands


@dataclass(frozen=True)
class SelectOption:
    option_id: str


@dataclass(frozen=True)
class StartMission:
    pass


@dataclass(frozen=True)
class AbortMission:
    pass


@dataclass(frozen=True)
class CommandLanding:
    uav_id: str


@dataclass(frozen=True)
class AcknowledgeWarning:
    event_id: int


OperatorCommand = Union[SelectOption, StartMission, AbortMission,
                        CommandLanding, AcknowledgeWarning]


@dataclass
class MissionRecord:
    id: str
    request: MissionRequest
    status: MissionStatus = MissionStatus.DRAFT
    options: Tuple[CorridorOption, ...] = ()
    selected_option_id: Optional[str] = None
    allocation: Optional[AllocationRecord] = None
    journal: List[JournalEvent] = field(default_factory=list)
    acknowledged: List[int] = field(default_factory=list)
    status_history: List[MissionStatus] = field(
        default_factory=lambda: [MissionStatus.DRAFT])
    metrics: dict = field(default_factory=dict)

    def selected_option(self) -> CorridorOption:
        for opt in self.options:
            if opt.option_id == self.selected_option_id:
                return opt
        raise ServiceError(f"no option selected for {self.id}")

    def set_status(self, to: MissionStatus) -> None:
        if to not in _LIFECYCLE[self.status]:
            raise IncompatibleStatus(
                f"{self.id}: cannot move {self.status.value} -> {to.value}")
        self.status = to
        self.status_history.append(to)


# -- option generation -------------------------------------------------------


_CANDIDATE_CONFIGS: Tuple[Tuple[Distribution, str], ...] = (
    (DISTRIBUTION_BASIC_B, "VerticalStack"),
    (DISTRIBUTION_BASIC_B, "Grid2x2"),
    (DISTRIBUTION_A, "VerticalStack"),
    (DISTRIBUTION_A, "Grid2x2"),
    (DISTRIBUTION_B, "VerticalStack"),
    (DISTRIBUTION_B, "Grid2x2"),
)


def mission_buffer(duration: float) -> float:
    """Window slack after the planned mission end."""
    return max(0.1 * duration, 60.0)


def _fitted_outer_radius(layout: CrossSectionLayout, dist: Distribution,
                         lane_radius: float, fit_margin: float) -> float:
    seats = layout.seats()
    named = {lane for lane, _ in dist.assignments}
    reach = max(
        math.hypot(off.lateral, off.vertical) + lane_radius
        for lane, off in seats.items() if lane in named
    )
    return reach + fit_margin


def generate_candidate_options(
    request: MissionRequest,
    scenario: ScenarioConfig,
    wind: Optional[float] = None,
    zones: Optional[Sequence[NoFlyZone]] = None,
) -> List[CorridorOption]:
    """Enumerate, filter, and rank corridor options for a request.

    Ranking is lexicographic and deterministic: smallest sufficient
    capacity margin first (right-sizing the corridor to demand), then
    fewest Coupled downwash pairs, then smallest swept tube volume, then
    enumeration order.
    """
    wind = scenario.wind if wind is None else wind
    zones = scenario.zones if zones is None else tuple(zones)
    geometry = scenario.corridor

    route = build_route([
        Point3(request.start.east, request.start.north, request.altitude),
        Point3(request.destination.east, request.destination.north,
               request.altitude),
    ])
    length = route.total_length
    duration = request.desired_duration

    v_min = length / duration
    v_max = min(scenario.limits.max_speed, geometry.v_cruise_max - wind)
    if v_min > v_max + 1e-9:
        raise Infeasible(("VMinExceedsVMax",))
    v_mid = (v_min + v_max) / 2.0

    eligible = [
        cl for cl in (ComplianceLevel.CL1, ComplianceLevel.CL2,
                      ComplianceLevel.CL3)
        if cl in request.available_cls
        and mission_eligibility(cl, length, duration, scenario.eligibility).eligible
    ]
    if not eligible:
        raise Infeasible(("NoEligibleCL",))

    t0 = request.time_of_day
    window = (t0, t0 + duration + mission_buffer(duration))

    ranked: List[Tuple[Tuple[float, int, float, int], CorridorOption]] = []
    filter_reasons: set = set()
    for index, (dist, layout_name) in enumerate(_CANDIDATE_CONFIGS):
        layout: CrossSectionLayout
        if layout_name == "VerticalStack":
            layout = VerticalStack(geometry.stack_spacing)
        else:
            layout = Grid2x2(geometry.grid_h_spacing, geometry.grid_v_spacing)
        outer_radius = _fitted_outer_radius(
            layout, dist, geometry.lane_radius, geometry.fit_margin)
        corridor = CorridorTube(route, outer_radius)
        plan = plan_lanes(corridor, layout, dist, geometry.lane_radius)
        report = validate_plan(plan, zones, window)
        if not report.valid:
            for violation in report.violations:
                if violation.kind is ViolationKind.NOFLY_CONFLICT:
                    filter_reasons.add("AllPlansConflictWithZones")
                else:
                    filter_reasons.add(violation.kind.value)
            continue

        required_cl = None
        capacity = 0.0
        for cl in eligible:
            fence = core_fence_dims(v_mid, cl, 0.5, 1.0, scenario.fence)
            headway = min_headway(fence, fence)
            cap = len(plan.lanes) * throughput_capacity(None, v_mid, headway)
            if cap >= request.expected_throughput:
                required_cl = cl
                capacity = cap
                break
        if required_cl is None:
            filter_reasons.add("InsufficientCapacity")
            continue

        margin = capacity / request.expected_throughput
        coupled = report.coupled_pairs()
        tube_volume = math.pi * outer_radius ** 2 * length
        rationale = (
            f"{len(plan.lanes)} lanes ({dist.name}/{layout_name}), "
            f"capacity {capacity:.0f}/h for {request.expected_throughput:.0f}/h "
            f"requested, {len(coupled)} coupled pair(s), "
            f"outer radius {outer_radius:.1f} m, {required_cl.value}"
        )
        option = CorridorOption(
            option_id="",  # assigned after ranking
            corridor=corridor,
            lane_plan=plan,
            v_bounds=(v_min, v_max),
            required_cl=required_cl,
            active_window=window,
            score=margin,
            rationale=rationale,
            coupled_pairs=tuple(coupled),
        )
        ranked.append(((margin, len(coupled), tube_volume, index), option))

    if not ranked:
        raise Infeasible(tuple(sorted(filter_reasons)) or ("NoViableConfiguration",))

    ranked.sort(key=lambda pair: pair[0])
    options = []
    for i, (_, option) in enumerate(ranked):
        options.append(CorridorOption(
            option_id=f"OPT{i + 1}",
            corridor=option.corridor,
            lane_plan=option.lane_plan,
            v_bounds=option.v_bounds,
            required_cl=option.required_cl,
            active_window=option.active_window,
            score=option.score,
            rationale=option.rationale,
            coupled_pairs=option.coupled_pairs,
        ))
    return options


# -- the service -------------------------------------------------------------


@dataclass
class _Mission:
    record: MissionRecord
    lock: threading.RLock = field(default_factory=threading.RLock)
    world: Optional[TrafficWorld] = None
    sim_cfg: Optional[SimConfig] = None
    abort_requested: bool = False
    journal_path: str = ""
    subscribers: List["queue.Queue[JournalEvent]"] = field(default_factory=list)
    events_seen: int = 0  # world.events entries already journaled
    telemetry_seen: int = 0  # world.telemetry rows already journaled
    last_snapshot_step: int = -1


class MissionRunner:
    """Steps one active mission's simulation; journal and subscribers see
    every step's telemetry and events immediately after it happens."""

    def __init__(self, service: "GcsService", mission: _Mission):
        self._service = service
        self._mission = mission

    @property
    def mission_id(self) -> str:
        return self._mission.record.id

    def done(self) -> bool:
        with self._mission.lock:
            return self._mission.record.status is not MissionStatus.ACTIVE

    def step(self) -> bool:
        """Advance one sim step; returns False once the mission left
        Active (drained or aborted)."""
        return self._service._step_mission(self._mission)

    def run(self) -> MissionRecord:
        """Step to completion (or aborted drain), then return the record."""
        while self.step():
            pass
        return self._mission.record


class GcsService:
    """Mission orchestration over a scenario, a UTM client, and a data
    directory of per-mission journals."""

    def __init__(self, scenario: ScenarioConfig, data_dir: str,
                 utm_client: Optional[UtmClient] = None,
                 clock: Optional[Callable[[], float]] = None):
        self.scenario = scenario
        self.data_dir = data_dir
        self.missions_dir = os.path.join(data_dir, "missions")
        os.makedirs(self.missions_dir, exist_ok=True)
        self.clock = clock
        if utm_client is None:
            registry = (load_registry(scenario.utm.registry)
                        if scenario.utm.registry else None)
            authority = UtmAuthority(registry,
                                     persist_path=scenario.utm.registry)
            utm_client = UtmClient(InProcessTransport(authority))
        self.utm = utm_client
        self._missions: Dict[str, _Mission] = {}
        self._lock = threading.Lock()
        self._counter = 0
        self._recover()

    # -- plumbing ----------------------------------------------------------

    def _mission(self, mission_id: str) -> _Mission:
        with self._lock:
            m = self._missions.get(mission_id)
        if m is None:
            raise UnknownMission(mission_id)
        return m

    def list_missions(self) -> List[MissionRecord]:
        with self._lock:
            return [m.record for m in self._missions.values()]

    def get_record(self, mission_id: str) -> MissionRecord:
        return self._mission(mission_id).record

    def _append(self, mission: _Mission, kind: str, data: dict) -> JournalEvent:
        record = mission.record
        event = JournalEvent(len(record.journal) + 1, kind, data)
        record.journal.append(event)
        with open(mission.journal_path, "a", encoding="utf-8") as fh:
            fh.write(event.to_json() + "\n")
        for q in list(mission.subscribers):
            q.put(event)
        return event

    def subscribe(self, mission_id: str,
                  since: int = 0) -> Tuple[List[JournalEvent],
                                           "queue.Queue[JournalEvent]"]:
        """Journal backlog after `since` plus a live queue, atomically, so
        a consumer sees every event exactly once and in order."""
        mission = self._mission(mission_id)
        with mission.lock:
            backlog = [e for e in mission.record.journal if e.seq > since]
            q: "queue.Queue[JournalEvent]" = queue.Queue()
            mission.subscribers.append(q)
            return backlog, q

    def unsubscribe(self, mission_id: str,
                    q: "queue.Queue[JournalEvent]") -> None:
        mission = self._mission(mission_id)
        with mission.lock:
            if q in mission.subscribers:
                mission.subscribers.remove(q)

    # -- lifecycle operations ----------------------------------------------

    def ingest_mission(self, request: MissionRequest) -> str:
        request.validate()
        with self._lock:
            self._counter += 1
            mission_id = f"M{self._counter:04d}"
            mission = _Mission(
                record=MissionRecord(id=mission_id, request=request),
                journal_path=os.path.join(self.missions_dir,
                                          f"{mission_id}.journal"),
            )
            self._missions[mission_id] = mission
        with mission.lock:
            self._append(mission, "mission_created", {
                "mission_id": mission_id,
                "request": request.to_dict(),
                "priority": request.utility is MissionUtility.EMERGENCY,
            })
        return mission_id

    def generate_options(self, mission_id: str,
                         wind: Optional[float] = None,
                         zones: Optional[Sequence[NoFlyZone]] = None,
                         ) -> List[CorridorOption]:
        mission = self._mission(mission_id)
        with mission.lock:
            record = mission.record
            if record.status is not MissionStatus.DRAFT:
                raise IncompatibleStatus(
                    f"options can only be generated in Draft, "
                    f"mission is {record.status.value}")
            try:
                options = generate_candidate_options(
                    record.request, self.scenario, wind, zones)
            except Infeasible as exc:
                self._append(mission, "options_failed",
                             {"reasons": list(exc.reasons)})
                raise
            record.options = tuple(options)
            record.set_status(MissionStatus.OPTIONS_READY)
            self._append(mission, "options_generated", {
                "options": [o.to_dict() for o in options],
            })
            return options

    def select_and_negotiate(self, mission_id: str,
                             option_id: Optional[str] = None) -> AllocationRecord:
        mission = self._mission(mission_id)
        with mission.lock:
            record = mission.record
            if record.status is not MissionStatus.OPTIONS_READY:
                raise IncompatibleStatus(
                    f"selection requires OptionsReady, mission is "
                    f"{record.status.value}")
            option_id = option_id or record.selected_option_id
            if option_id is None:
                raise ServiceError("no option selected")
            matches = [o for o in record.options if o.option_id == option_id]
            if not matches:
                raise ServiceError(f"unknown option {option_id}")
            option = matches[0]
            record.selected_option_id = option_id
            record.set_status(MissionStatus.NEGOTIATING)
            self._append(mission, "negotiation_started",
                         {"option_id": option_id})

            volume = AirspaceVolume(option.corridor, option.active_window)
            outcome = negotiate(self.utm, volume, self.scenario.utm.adjust,
                                self.scenario.utm.max_rounds)
            if isinstance(outcome, NegotiationFailure):
                record.set_status(MissionStatus.OPTIONS_READY)
                self._append(mission, "negotiation_failed", {
                    "reason": outcome.reason,
                    "rounds": [
                        {"round": r.round_index, "verdict": r.verdict.value,
                         "conflicts": list(r.conflicts), "cost": r.cost}
                        for r in outcome.rounds
                    ],
                })
                raise NegotiationFailed(outcome)

            allocation = outcome
            # the authority may have granted an adjusted volume; replan the
            # lanes inside whatever was actually allocated and re-validate
            if allocation.negotiation_round > 1:
                option = self._replan_into(mission, option, allocation)
            record.allocation = allocation
            record.set_status(MissionStatus.ALLOCATED)
            self._append(mission, "allocated", {
                "allocation_id": allocation.allocation_id,
                "cost": allocation.cost,
                "negotiation_round": allocation.negotiation_round,
                "volume": volume_to_dict(allocation.volume),
                "option": option.to_dict(),
            })
            return allocation

    def _replan_into(self, mission: _Mission, option: CorridorOption,
                     allocation: AllocationRecord) -> CorridorOption:
        granted = allocation.volume
        try:
            plan = plan_lanes(
                granted.tube,
                option.lane_plan.layout,
                option.lane_plan.distribution,
                self.scenario.corridor.lane_radius,
            )
            report = validate_plan(plan, self.scenario.zones, granted.window)
        except PlanningError:
            report = None
        if report is None or not report.valid:
            # releasing an approved volume walks the allowed state graph:
            # Approved -> Active -> Released
            self.utm.activate(allocation.allocation_id)
            self.utm.release(allocation.allocation_id)
            raise NegotiationFailed(NegotiationFailure(
                "replan_failed_in_allocated_volume", ()))
        replanned = CorridorOption(
            option_id=option.option_id,
            corridor=granted.tube,
            lane_plan=plan,
            v_bounds=option.v_bounds,
            required_cl=option.required_cl,
            active_window=granted.window,
            score=option.score,
            rationale=option.rationale + " (replanned into allocated volume)",
            coupled_pairs=tuple(report.coupled_pairs()),
        )
        record = mission.record
        record.options = tuple(
            replanned if o.option_id == option.option_id else o
            for o in record.options
        )
        return replanned

    def activate_and_run(self, mission_id: str,
                         sim_cfg: Optional[SimConfig] = None) -> MissionRunner:
        mission = self._mission(mission_id)
        with mission.lock:
            record = mission.record
            if record.status is not MissionStatus.ALLOCATED:
                raise NotAllocated(
                    f"activation requires Allocated, mission is "
                    f"{record.status.value}")
            option = record.selected_option()
            window = option.active_window
            now = self.clock() if self.clock is not None else window[0]
            if not window[0] <= now < window[1]:
                raise OutsideWindow(
                    f"now={now:.0f}s is outside [{window[0]:.0f}, "
                    f"{window[1]:.0f})")

            cfg = sim_cfg or self._sim_config_for(record.request, option)
            world = TrafficWorld(option.lane_plan, cfg)
            assert record.allocation is not None
            self.utm.activate(record.allocation.allocation_id)
            record.allocation.transition(AllocationState.ACTIVE)
            mission.world = world
            mission.sim_cfg = cfg
            mission.events_seen = 0
            mission.telemetry_seen = 0
            mission.abort_requested = False
            record.set_status(MissionStatus.ACTIVE)
            self._append(mission, "activated", {
                "sim": {
                    "duration": cfg.duration, "dt": cfg.dt, "seed": cfg.seed,
                    "spawn_schedule": [[lane, rate]
                                       for lane, rate in cfg.spawn_schedule],
                    "v_bounds": list(cfg.v_bounds),
                    "v_target": cfg.v_target,
                    "stagger_min": cfg.stagger_min,
                    "cls": [cl.value for cl in cfg.cls],
                    "headwind": cfg.headwind,
                },
            })
            return MissionRunner(self, mission)

    def _sim_config_for(self, request: MissionRequest,
                        option: CorridorOption) -> SimConfig:
        lanes = option.lane_plan.lanes
        rate = request.expected_throughput / len(lanes)
        # the option's v_bounds already carry the wind penalty, so the sim
        # runs with headwind zero rather than double-counting it
        return SimConfig(
            duration=request.desired_duration,
            dt=self.scenario.sim.dt,
            seed=self.scenario.sim.seed,
            spawn_schedule=tuple((spec.id, rate) for spec in lanes),
            v_bounds=option.v_bounds,
            cls=(option.required_cl,),
            fence=self.scenario.fence,
            limits=self.scenario.limits,
            eligibility=self.scenario.eligibility,
        )

    def _step_mission(self, mission: _Mission) -> bool:
        with mission.lock:
            record = mission.record
            if record.status is not MissionStatus.ACTIVE:
                return False
            world = mission.world
            cfg = mission.sim_cfg
            assert world is not None and cfg is not None
            nominal_steps = int(round(cfg.duration / cfg.dt))
            drain_cap = nominal_steps + int(round(600.0 / cfg.dt))

            world.step()
            self._journal_step(mission, world)

            schedule_done = world.step_index >= nominal_steps
            pending_spawns = any(world.arrivals.values())
            drained = (schedule_done and not pending_spawns
                       and not any(u.active() for u in world.uavs.values()))
            if mission.abort_requested:
                drained = not any(u.active() for u in world.uavs.values())
            if not drained and world.step_index >= drain_cap:
                raise ServiceError(
                    f"{record.id}: simulation failed to drain within "
                    f"{drain_cap} steps")
            if drained:
                self._finish_sim(mission)
                return False
            return True

    def _journal_step(self, mission: _Mission, world: TrafficWorld) -> None:
        events = world.events
        new_events = events[mission.events_seen:]
        mission.events_seen = len(events)
        for event in new_events:
            self._append(mission, "sim_event", json.loads(event.to_json()))
        new_rows = world.telemetry[mission.telemetry_seen:]
        mission.telemetry_seen = len(world.telemetry)
        if new_rows:
            self._append(mission, "telemetry",
                         {"t": f"{world.t:.3f}", "rows": new_rows})
        every = self.scenario.sim.snapshot_every
        if (world.step_index % every == 0
                and world.step_index != mission.last_snapshot_step):
            mission.last_snapshot_step = world.step_index
            self._append(mission, "snapshot", {
                "step_index": world.step_index,
                "world": world.to_snapshot(),
            })

    def _finish_sim(self, mission: _Mission) -> None:
        record = mission.record
        world = mission.world
        assert world is not None
        metrics = json.loads(json.dumps(world.metrics))
        record.metrics = metrics
        aborted = mission.abort_requested
        self._append(mission, "sim_finished",
                     {"aborted": aborted, "metrics": metrics})
        if aborted:
            record.set_status(MissionStatus.ABORTED)
            self._append(mission, "mission_aborted", {})
            self._release(mission)
        else:
            record.set_status(MissionStatus.COMPLETED)
            self._append(mission, "mission_completed", {})
        self._write_report(mission)

    def _write_report(self, mission: _Mission) -> None:
        world = mission.world
        if world is None:
            return
        report = SimReport(events=list(world.events),
                           telemetry=list(world.telemetry),
                           metrics=mission.record.metrics)
        base = os.path.join(self.missions_dir, mission.record.id)
        with open(base + ".events.jsonl", "w", encoding="utf-8") as fh:
            fh.write(report.event_log_text())
        with open(base + ".telemetry.csv", "w", encoding="utf-8") as fh:
            fh.write(report.telemetry_text())
        with open(base + ".report.json", "w", encoding="utf-8") as fh:
            json.dump({"mission_id": mission.record.id,
                       "status": mission.record.status.value,
                       "metrics": mission.record.metrics},
                      fh, indent=2, sort_keys=True)
            fh.write("\n")

    def _release(self, mission: _Mission) -> None:
        record = mission.record
        if record.allocation is not None:
            allocation_id = record.allocation.allocation_id
            if record.status is MissionStatus.COMPLETED:
                self.utm.complete(allocation_id)
                record.allocation.transition(AllocationState.COMPLETED)
            self.utm.release(allocation_id)
            record.allocation.transition(AllocationState.RELEASED)
        record.set_status(MissionStatus.RELEASED)
        self._append(mission, "released", {})
        self._write_report(mission)

    def handle_command(self, mission_id: str, command: OperatorCommand):
        mission = self._mission(mission_id)
        with mission.lock:
            record = mission.record
            if isinstance(command, SelectOption):
                if record.status is not MissionStatus.OPTIONS_READY:
                    raise IncompatibleStatus(
                        f"SelectOption requires OptionsReady, mission is "
                        f"{record.status.value}")
                if not any(o.option_id == command.option_id
                           for o in record.options):
                    raise ServiceError(f"unknown option {command.option_id}")
                record.selected_option_id = command.option_id
                self._append(mission, "option_selected",
                             {"option_id": command.option_id})
                return None
            if isinstance(command, StartMission):
                return self.activate_and_run(mission_id)
            if isinstance(command, AbortMission):
                if record.status is not MissionStatus.ACTIVE:
                    raise IncompatibleStatus(
                        f"AbortMission requires Active, mission is "
                        f"{record.status.value}")
                mission.abort_requested = True
                assert mission.world is not None
                mission.world.command_abort_all()
                for pending in mission.world.arrivals.values():
                    pending.clear()  # no new entries once aborting
                self._journal_step(mission, mission.world)
                self._append(mission, "abort_requested", {})
                return None
            if isinstance(command, CommandLanding):
                if record.status is not MissionStatus.ACTIVE:
                    raise IncompatibleStatus(
                        f"CommandLanding requires Active, mission is "
                        f"{record.status.value}")
                assert mission.world is not None
                mission.world.command_landing(command.uav_id)
                self._journal_step(mission, mission.world)
                self._append(mission, "landing_commanded",
                             {"uav_id": command.uav_id})
                return None
            if isinstance(command, AcknowledgeWarning):
                event = next((e for e in record.journal
                              if e.seq == command.event_id), None)
                if event is None or event.kind != "sim_event":
                    raise UnknownEvent(f"no warning event {command.event_id}")
                if command.event_id in record.acknowledged:
                    raise AlreadyAcknowledged(
                        f"event {command.event_id} already acknowledged")
                record.acknowledged.append(command.event_id)
                self._append(mission, "warning_acknowledged",
                             {"event_id": command.event_id})
                return None
        raise ServiceError(f"unsupported command {type(command).__name__}")

    def complete_and_release(self, mission_id: str) -> MissionRecord:
        mission = self._mission(mission_id)
        with mission.lock:
            record = mission.record
            if record.status is MissionStatus.ACTIVE:
                raise UAVsStillActive(
                    f"{mission_id} still has an active simulation")
            if record.status is MissionStatus.ABORTED:
                self._release(mission)
                return record
            if record.status is not MissionStatus.COMPLETED:
                raise IncompatibleStatus(
                    f"release requires Completed or Aborted, mission is "
                    f"{record.status.value}")
            self._release(mission)
            return record

    def abort_and_release(self, mission_id: str) -> MissionRecord:
        """Convenience for the abort path: request abort, drain, release."""
        mission = self._mission(mission_id)
        self.handle_command(mission_id, AbortMission())
        MissionRunner(self, mission).run()
        return mission.record

    # -- recovery and replay -------------------------------------------------

    def _recover(self) -> None:
        names = sorted(
            n for n in os.listdir(self.missions_dir) if n.endswith(".journal"))
        for name in names:
            path = os.path.join(self.missions_dir, name)
            with open(path, "r", encoding="utf-8") as fh:
                lines = [line for line in fh.read().splitlines() if line]
            if not lines:
                continue
            record = replay_journal(lines)
            mission = _Mission(record=record, journal_path=path)
            if record.status is MissionStatus.ACTIVE:
                self._resume_world(mission, lines)
            with self._lock:
                self._missions[record.id] = mission
                number = int(record.id.lstrip("M"))
                self._counter = max(self._counter, number)

    def _resume_world(self, mission: _Mission, lines: List[str]) -> None:
        """Rebuild the world for a mission that was Active at shutdown,
        restoring the last journaled snapshot. Steps after that snapshot
        are re-simulated; operator commands issued after it are not
        replayed."""
        record = mission.record
        snapshot = None
        sim_data = None
        for line in lines:
            event = JournalEvent.from_json(line)
            if event.kind == "activated":
                sim_data = event.data["sim"]
            elif event.kind == "snapshot":
                snapshot = event.data
        option = record.selected_option()
        assert sim_data is not None
        v_target = sim_data.get("v_target")
        stagger_min = sim_data.get("stagger_min")
        cfg = SimConfig(
            duration=float(sim_data["duration"]),
            dt=float(sim_data["dt"]),
            seed=int(sim_data["seed"]),
            spawn_schedule=tuple(
                (lane, float(rate)) for lane, rate in sim_data["spawn_schedule"]),
            v_bounds=(float(sim_data["v_bounds"][0]),
                      float(sim_data["v_bounds"][1])),
            v_target=None if v_target is None else float(v_target),
            stagger_min=None if stagger_min is None else float(stagger_min),
            cls=tuple(ComplianceLevel(c) for c in sim_data["cls"]),
            fence=self.scenario.fence,
            limits=self.scenario.limits,
            eligibility=self.scenario.eligibility,
            headwind=float(sim_data.get("headwind", 0.0)),
        )
        world = TrafficWorld(option.lane_plan, cfg)
        if snapshot is not None:
            world.restore_snapshot(snapshot["world"])
            mission.last_snapshot_step = int(snapshot["step_index"])
        mission.world = world
        mission.sim_cfg = cfg
        mission.events_seen = len(world.events)
        self._append(mission, "resumed", {"step_index": world.step_index})


def replay_journal(lines: Sequence[str]) -> MissionRecord:
    """Fold a journal back into its MissionRecord (event sourcing). The
    status history must be a path in the mission lifecycle graph."""
    record: Optional[MissionRecord] = None
    for line in lines:
        event = JournalEvent.from_json(line) if isinstance(line, str) else line
        kind, data = event.kind, event.data
        if kind == "mission_created":
            record = MissionRecord(
                id=data["mission_id"],
                request=MissionRequest.from_dict(data["request"]),
            )
        elif record is None:
            raise ServiceError("journal does not start with mission_created")
        elif kind == "options_generated":
            record.options = tuple(
                CorridorOption.from_dict(o) for o in data["options"])
            record.set_status(MissionStatus.OPTIONS_READY)
        elif kind == "options_failed":
            pass
        elif kind == "option_selected":
            record.selected_option_id = data["option_id"]
        elif kind == "negotiation_started":
            record.selected_option_id = data["option_id"]
            record.set_status(MissionStatus.NEGOTIATING)
        elif kind == "negotiation_failed":
            record.set_status(MissionStatus.OPTIONS_READY)
        elif kind == "allocated":
            option = CorridorOption.from_dict(data["option"])
            record.options = tuple(
                option if o.option_id == option.option_id else o
                for o in record.options)
            record.allocation = AllocationRecord(
                allocation_id=data["allocation_id"],
                volume=volume_from_dict(data["volume"]),
                state=AllocationState.APPROVED,
                cost=float(data["cost"]),
                negotiation_round=int(data["negotiation_round"]),
            )
            record.set_status(MissionStatus.ALLOCATED)
        elif kind == "activated":
            record.set_status(MissionStatus.ACTIVE)
            if record.allocation is not None:
                record.allocation.state = AllocationState.ACTIVE
        elif kind in ("sim_event", "telemetry", "snapshot", "resumed",
                      "abort_requested", "landing_commanded"):
            pass
        elif kind == "sim_finished":
            record.metrics = data["metrics"]
        elif kind == "mission_completed":
            record.set_status(MissionStatus.COMPLETED)
            if record.allocation is not None:
                record.allocation.state = AllocationState.COMPLETED
        elif kind == "mission_aborted":
            record.set_status(MissionStatus.ABORTED)
        elif kind == "warning_acknowledged":
            record.acknowledged.append(int(data["event_id"]))
        elif kind == "released":
            record.set_status(MissionStatus.RELEASED)
            if record.allocation is not None:
                record.allocation.state = AllocationState.RELEASED
        else:
            raise ServiceError(f"unknown journal event kind {kind!r}")
        record.journal.append(event)
    if record is None:
        raise ServiceError("empty journal")
    return record


def load_mission(path: str) -> MissionRecord:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line for line in fh.read().splitlines() if line]
    return replay_journal(lines)
