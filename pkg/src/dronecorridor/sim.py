"""Deterministic discrete-time traffic simulation through a planned corridor.

Position bookkeeping uses a per-lane travel coordinate u in [0, lane_length]
that always increases in the direction of flow (outflow lanes travel along
the route, inflow lanes against it), plus cross-section offsets (lateral,
vertical) in the corridor frame. Containment is evaluated in that frame,
which is exact on straight segments and the standard approximation near
bends.

Safety design: within a step, each lane processes its vehicles leaders
first, and a follower's new speed is capped by the closed-form bound
v_safe = (gap_to_moved_leader - A) / (dt + k_f * tau_f), where A collects
the speed-independent headway terms. Because required headway is affine in
the follower's speed, respecting v_safe makes post-step spacing >=
min_headway exactly, so nominal runs can never produce a core overlap.
Braking is not comfort-limited: the safety cap wins over the acceleration
band.

Determinism: all arrival times are pre-drawn from the seed at world
construction; stepping itself draws no randomness, and every collection is
iterated in insertion order.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .fencing import (
    BreachKind,
    ComplianceLevel,
    CoreGeofence,
    EligibilityPolicy,
    FaultResponse,
    FenceConfig,
    Severity,
    core_fence_dims,
    min_headway,
    mission_eligibility,
)
from .geometry import Point3, arc_to_point, ArcPosition
from .lanes import (
    DownwashRisk,
    FlowDirection,
    KinematicLimits,
    LanePlan,
    LaneSpec,
    PlanningError,
    lane_change_path,
    validate_plan,
)


class SimError(ValueError):
    pass


class UnknownUAV(SimError):
    def __init__(self, uav_id: str):
        super().__init__(f"no such UAV: {uav_id}")
        self.uav_id = uav_id


class InvalidPlan(SimError):
    pass


class Mode(Enum):
    CRUISE = "Cruise"
    LANE_CHANGE = "LaneChange"
    LANDING = "Landing"
    ABORTED = "Aborted"
    DONE = "Done"


class Health(Enum):
    NOMINAL = "Nominal"
    FAULTED = "Faulted"


@dataclass
class UAVState:
    """One vehicle. u is the travel coordinate along its lane; lateral and
    vertical are corridor cross-section offsets."""

    id: str
    cl: ComplianceLevel
    lane_id: str
    u: float
    speed: float
    lateral: float
    vertical: float
    mode: Mode = Mode.CRUISE
    health: Health = Health.NOMINAL
    uav_length: float = 0.5
    uav_span: float = 1.0
    spawn_seq: int = 0
    v_cap: float = math.inf
    change_path: Optional[List[ArcPosition]] = None
    change_target: str = ""

    def active(self) -> bool:
        return self.mode not in (Mode.ABORTED, Mode.DONE)


@dataclass(frozen=True)
class SimConfig:
    """Scenario knobs for one simulation run."""

    duration: float
    dt: float = 0.1
    seed: int = 0
    spawn_schedule: Tuple[Tuple[str, float], ...] = ()
    v_bounds: Tuple[float, float] = (5.0, 12.0)
    v_target: Optional[float] = None
    stagger_min: Optional[float] = None
    uav_length: float = 0.5
    uav_span: float = 1.0
    cls: Tuple[ComplianceLevel, ...] = (ComplianceLevel.CL3,)
    fence: FenceConfig = FenceConfig()
    limits: KinematicLimits = KinematicLimits()
    eligibility: EligibilityPolicy = EligibilityPolicy()
    headwind: float = 0.0
    degraded_speed_factor: float = 0.5
    stagger_yield: float = 0.5
    band: float = 0.2

    def __post_init__(self):
        if self.dt <= 0 or self.duration <= 0:
            raise SimError("dt and duration must be positive")
        if self.v_bounds[0] > self.v_bounds[1]:
            raise SimError("v_min must be <= v_max")
        for _, rate in self.spawn_schedule:
            if rate < 0:
                raise SimError("spawn rates must be >= 0")

    @property
    def target_speed(self) -> float:
        if self.v_target is not None:
            return self.v_target
        return (self.v_bounds[0] + self.v_bounds[1]) / 2.0

    @property
    def effective_v_max(self) -> float:
        return max(0.0, min(self.v_bounds[1], self.limits.max_speed) - self.headwind)


@dataclass(frozen=True)
class SimEvent:
    """One event-log line. seq breaks ties within a time stamp."""

    t: float
    seq: int
    kind: str
    uav_id: str
    data: Tuple[Tuple[str, str], ...] = ()

    def to_json(self) -> str:
        record = {"t": f"{self.t:.3f}", "seq": self.seq, "kind": self.kind,
                  "uav": self.uav_id}
        for key, value in self.data:
            record[key] = value
        return json.dumps(record, separators=(",", ":"))


TELEMETRY_HEADER = "t,uav_id,lane,s,lateral,vertical,speed,mode,health"


@dataclass
class SimReport:
    events: List[SimEvent]
    telemetry: List[str]
    metrics: Dict[str, object]

    def event_log_text(self) -> str:
        return "\n".join(e.to_json() for e in self.events) + ("\n" if self.events else "")

    def telemetry_text(self) -> str:
        return "\n".join([TELEMETRY_HEADER] + self.telemetry) + "\n"


def _poisson_arrivals(rate_per_hour: float, duration: float, rng: random.Random) -> List[float]:
    """Arrival times on [0, duration) with exponential gaps (seeded)."""
    times: List[float] = []
    if rate_per_hour <= 0:
        return times
    mean_gap = 3600.0 / rate_per_hour
    t = rng.expovariate(1.0 / mean_gap)
    while t < duration:
        times.append(t)
        t += rng.expovariate(1.0 / mean_gap)
    return times


class TrafficWorld:
    """Mutable simulation state for one lane plan. Step with step()."""

    def __init__(self, plan: LanePlan, cfg: SimConfig, validate: bool = True):
        if validate:
            report = validate_plan(plan)
            if not report.valid:
                raise InvalidPlan(f"plan has violations: {report.violations}")
            self.risk_matrix = report.risk_matrix
        else:
            self.risk_matrix = validate_plan(plan, ()).risk_matrix
        self.plan = plan
        self.cfg = cfg
        self.t = 0.0
        self.step_index = 0
        self.uavs: Dict[str, UAVState] = {}
        self.events: List[SimEvent] = []
        self.telemetry: List[str] = []
        self._spawn_count = 0
        self._event_seq = 0
        self._breach_active: Dict[Tuple[str, str], bool] = {}
        self._overlap_active: Dict[Tuple[str, str], bool] = {}
        self._stagger_active: Dict[str, bool] = {}
        self._moved_lanes: set = set()
        self._pending_events: List[Tuple[str, str, Tuple[Tuple[str, str], ...]]] = []
        self.metrics: Dict[str, object] = {
            "spawned": {}, "completed": {}, "deferred": 0,
            "min_spacing": {}, "breaches": {k.value: 0 for k in BreachKind},
            "stagger_interventions": 0, "faults": 0,
        }
        rng = random.Random(cfg.seed)
        self.arrivals: Dict[str, List[float]] = {}
        for lane_id, rate in cfg.spawn_schedule:
            self.plan.lane(lane_id)  # raises KeyError on unknown lane
            self.arrivals[lane_id] = _poisson_arrivals(rate, cfg.duration, rng)
        self._lane_length = {
            spec.id: cyl.centerline.total_length
            for spec, cyl in zip(plan.lanes, plan.cylinders)
        }
        self._coupled: Dict[str, List[str]] = {}
        for a, b, risk in self.risk_matrix:
            if risk is DownwashRisk.COUPLED:
                self._coupled.setdefault(a, []).append(b)
                self._coupled.setdefault(b, []).append(a)
        if cfg.stagger_min is not None:
            self.stagger_min = cfg.stagger_min
        else:
            worst = max(
                core_fence_dims(cfg.effective_v_max, cl, cfg.uav_length,
                                cfg.uav_span, cfg.fence).d_t
                for cl in cfg.cls
            )
            self.stagger_min = 2.0 * worst

    # -- helpers -----------------------------------------------------------

    def lane_length(self, lane_id: str) -> float:
        return self._lane_length[lane_id]

    def _seat(self, lane_id: str) -> LaneSpec:
        return self.plan.lane(lane_id)

    def _fence(self, uav: UAVState) -> CoreGeofence:
        return core_fence_dims(
            uav.speed, uav.cl, uav.uav_length, uav.uav_span, self.cfg.fence
        )

    def _s_of(self, uav: UAVState) -> float:
        length = self._lane_length[uav.lane_id]
        if self._seat(uav.lane_id).direction is FlowDirection.OUTFLOW:
            return min(max(uav.u, 0.0), length)
        return length - min(max(uav.u, 0.0), length)

    def position_of(self, uav: UAVState) -> Point3:
        """3D position from corridor-frame coordinates."""
        route = self.plan.corridor.centerline
        frac = self._s_of(uav) / self._lane_length[uav.lane_id]
        s = frac * route.total_length
        return arc_to_point(route, ArcPosition(s, uav.lateral, uav.vertical))

    def _emit(self, kind: str, uav_id: str, **data: object) -> None:
        fields = tuple((k, str(v)) for k, v in data.items())
        self._pending_events.append((kind, uav_id, fields))

    def _lane_order(self, lane_id: str) -> List[UAVState]:
        """Active UAVs in this lane, leader (largest u) first."""
        members = [
            u for u in self.uavs.values()
            if u.lane_id == lane_id and u.active()
        ]
        members.sort(key=lambda u: (-u.u, u.id))
        return members

    # -- spawning ----------------------------------------------------------

    def _next_id(self) -> str:
        self._spawn_count += 1
        return f"U{self._spawn_count:03d}"

    def try_spawn(self, lane_id: str, cl: Optional[ComplianceLevel] = None,
                  speed: Optional[float] = None) -> Tuple[str, Optional[str]]:
        """Attempt a spawn at the lane entry.

        Returns (status, uav_id): ("spawned", id) on success, ("deferred",
        None) when the entry gap is too small (caller may retry later), and
        ("rejected", None) when the compliance level is ineligible for a
        lane-length mission (permanent)."""
        cfg = self.cfg
        if cl is None:
            cl = cfg.cls[self._spawn_count % len(cfg.cls)]
        v = min(speed if speed is not None else cfg.target_speed,
                cfg.effective_v_max)
        length = self._lane_length[lane_id]
        elig = mission_eligibility(
            cl, length, length / max(v, 1e-9), cfg.eligibility
        )
        if not elig.eligible:
            self._emit("spawn_rejected", "", lane=lane_id, cl=cl.value,
                       reasons=",".join(r.value for r in elig.reasons))
            return "rejected", None
        spawn_fence = core_fence_dims(v, cl, cfg.uav_length, cfg.uav_span, cfg.fence)
        members = self._lane_order(lane_id)
        if members:
            tail = members[-1]
            need = min_headway(self._fence(tail), spawn_fence)
            if tail.u < need:
                return "deferred", None
        # entering a coupled lane requires the stagger offset from the start
        for partner in self._coupled.get(lane_id, ()):
            for other in self._lane_order(partner):
                if other.u < self.stagger_min:
                    return "deferred", None
        seat = self._seat(lane_id)
        uav = UAVState(
            id=self._next_id(), cl=cl, lane_id=lane_id, u=0.0, speed=v,
            lateral=seat.offset.lateral, vertical=seat.offset.vertical,
            uav_length=cfg.uav_length, uav_span=cfg.uav_span,
            spawn_seq=self._spawn_count,
        )
        self.uavs[uav.id] = uav
        spawned: Dict[str, int] = self.metrics["spawned"]  # type: ignore[assignment]
        spawned[lane_id] = spawned.get(lane_id, 0) + 1
        self._emit("spawn", uav.id, lane=lane_id, cl=cl.value, speed=f"{v:.3f}")
        return "spawned", uav.id

    # -- commands ----------------------------------------------------------

    def _get(self, uav_id: str) -> UAVState:
        try:
            return self.uavs[uav_id]
        except KeyError:
            raise UnknownUAV(uav_id) from None

    def inject_fault(self, uav_id: str) -> None:
        uav = self._get(uav_id)
        if uav.health is Health.FAULTED:
            return
        uav.health = Health.FAULTED
        self.metrics["faults"] = int(self.metrics["faults"]) + 1
        self._emit("fault", uav_id, cl=uav.cl.value)
        self._flush_events()

    def inject_disturbance(self, uav_id: str, lateral_offset: float,
                           vertical_offset: float = 0.0) -> None:
        """Displace a vehicle in the cross-section; detection happens on the
        next step's containment pass."""
        uav = self._get(uav_id)
        uav.lateral += lateral_offset
        uav.vertical += vertical_offset

    def command_landing(self, uav_id: str) -> None:
        uav = self._get(uav_id)
        if uav.active() and uav.mode is not Mode.LANDING:
            self._set_mode(uav, Mode.LANDING)
            self._flush_events()

    def command_abort_all(self) -> None:
        for uav in self.uavs.values():
            if uav.active() and uav.mode is not Mode.LANDING:
                self._set_mode(uav, Mode.LANDING)
        self._flush_events()

    def request_lane_change(self, uav_id: str, to_lane: str) -> bool:
        """Start a lane change if directions are compatible and the target
        lane has headway room at the current along-track position."""
        uav = self._get(uav_id)
        if uav.mode is not Mode.CRUISE:
            return False
        frm = self._seat(uav.lane_id)
        to = self._seat(to_lane)
        try:
            path = lane_change_path(
                frm, to, uav.u, max(uav.speed, 0.1), self.cfg.limits,
                self.plan.corridor,
            )
        except PlanningError:
            return False
        if not path:
            return False
        own_fence = self._fence(uav)
        for other in self._lane_order(to_lane):
            gap = abs(other.u - uav.u)
            fence_o = self._fence(other)
            if other.u >= uav.u:
                need = min_headway(fence_o, own_fence)
            else:
                need = min_headway(own_fence, fence_o)
            if gap < need:
                return False
        self._set_mode(uav, Mode.LANE_CHANGE)
        uav.change_path = path
        uav.change_target = to_lane
        uav.lane_id = to_lane
        self._emit("lane_change", uav_id, frm=frm.id, to=to_lane)
        return True

    def _set_mode(self, uav: UAVState, mode: Mode) -> None:
        if uav.mode is mode:
            return
        uav.mode = mode
        self._emit("mode", uav.id, mode=mode.value)

    # -- stepping ----------------------------------------------------------

    def step(self) -> None:
        cfg = self.cfg
        dt = cfg.dt
        self.step_index += 1
        self.t = round(self.step_index * dt, 9)
        transitioned = self._apply_fault_policies()
        transitioned += self._move_all(dt)
        self._process_spawns()
        self._check_containment()
        self._check_overlaps()
        self._flush_events()
        self._record_telemetry(transitioned)

    def _apply_fault_policies(self) -> List[str]:
        """Mode changes demanded by pending faults: no tolerance aborts,
        GCS-monitored vehicles land, fault-tolerant ones cap their speed."""
        aborted: List[str] = []
        for uav in self.uavs.values():
            if not uav.active() or uav.health is not Health.FAULTED:
                continue
            response = uav.cl.fault_response
            if response is FaultResponse.ABORT:
                self._set_mode(uav, Mode.ABORTED)
                aborted.append(uav.id)
            elif response is FaultResponse.LAND and uav.mode is not Mode.LANDING:
                self._set_mode(uav, Mode.LANDING)
            elif response is FaultResponse.DEGRADED_CRUISE:
                uav.v_cap = min(
                    uav.v_cap,
                    self.cfg.degraded_speed_factor * self.cfg.target_speed,
                )
        return aborted

    def _desired_speed(self, uav: UAVState) -> float:
        cfg = self.cfg
        v = min(cfg.target_speed, cfg.effective_v_max, uav.v_cap)
        return max(v, 0.0)

    def _stagger_cap(self, uav: UAVState, v_candidate: float, dt: float) -> float:
        """Speed cap from stagger enforcement against coupled lanes.

        Offsets are projected to end-of-step positions (partner lanes
        processed earlier this step have already moved; later ones get dead
        reckoning). The later-spawned vehicle yields until the projected
        offset clears 1.2x the floor; the hysteresis band keeps it from
        oscillating at the boundary."""
        partners = self._coupled.get(uav.lane_id)
        if not partners or uav.mode is not Mode.CRUISE:
            return math.inf
        cap = math.inf
        was_active = self._stagger_active.get(uav.id, False)
        threshold = self.stagger_min * (1.2 if was_active else 1.0)
        own_u = uav.u + v_candidate * dt
        for lane_id in partners:
            moved = lane_id in self._moved_lanes
            for other in self._lane_order(lane_id):
                if other.spawn_seq >= uav.spawn_seq:
                    continue
                other_u = other.u if moved else other.u + other.speed * dt
                if abs(other_u - own_u) < threshold:
                    cap = min(cap, max(0.0, other.speed - self.cfg.stagger_yield))
        if cap is not math.inf and not was_active:
            self._stagger_active[uav.id] = True
            self.metrics["stagger_interventions"] = (
                int(self.metrics["stagger_interventions"]) + 1
            )
            self._emit("stagger", uav.id, lane=uav.lane_id)
        elif cap is math.inf and was_active:
            self._stagger_active[uav.id] = False
        return cap

    def _move_all(self, dt: float) -> List[str]:
        """Advance every active UAV, leaders first per lane. Returns ids that
        finished (Done) this step so telemetry shows their final row."""
        cfg = self.cfg
        transitioned: List[str] = []
        self._moved_lanes = set()
        for spec in self.plan.lanes:
            leader: Optional[UAVState] = None
            for uav in self._lane_order(spec.id):
                if uav.mode is Mode.LANDING:
                    uav.speed = max(0.0, uav.speed - cfg.limits.max_accel * dt)
                    if uav.speed == 0.0:
                        self._set_mode(uav, Mode.DONE)
                        transitioned.append(uav.id)
                        continue
                else:
                    v_des = self._desired_speed(uav)
                    v_new = min(v_des, uav.speed + cfg.limits.max_accel * dt)
                    if leader is not None:
                        v_new = min(
                            v_new,
                            self._band_speed(uav, leader, v_new),
                            self._safe_speed(uav, leader, dt),
                        )
                    v_new = min(v_new, self._stagger_cap(uav, v_new, dt))
                    uav.speed = max(0.0, v_new)
                uav.u += uav.speed * dt
                self._progress_lane_change(uav)
                self._recover_cross_position(uav, dt)
                length = self._lane_length[uav.lane_id]
                if uav.u >= length:
                    uav.u = length
                    self._set_mode(uav, Mode.DONE)
                    completed: Dict[str, int] = self.metrics["completed"]  # type: ignore[assignment]
                    completed[uav.lane_id] = completed.get(uav.lane_id, 0) + 1
                    transitioned.append(uav.id)
                    continue
                leader = uav
            self._moved_lanes.add(spec.id)
        return transitioned

    def _band_speed(self, uav: UAVState, leader: UAVState, v_des: float) -> float:
        """Proportional slowdown toward the leader's speed inside the
        comfort band (1.0 to 1 + band times required headway)."""
        need = min_headway(self._fence(leader), self._fence(uav))
        gap = leader.u - uav.u
        band = self.cfg.band
        if gap >= need * (1.0 + band):
            return v_des
        frac = max(0.0, (gap - need) / (need * band))
        return leader.speed + (v_des - leader.speed) * frac

    def _safe_speed(self, uav: UAVState, leader: UAVState, dt: float) -> float:
        """Closed-form cap keeping post-step spacing >= min_headway, given
        the leader already moved this step."""
        cfg_f = self.cfg.fence
        k_f = cfg_f.k_of(uav.cl)
        k_l = cfg_f.k_of(leader.cl)
        fixed = (
            k_f * cfg_f.d0
            + uav.uav_length / 2.0
            + k_l * (leader.speed * cfg_f.tau_r + cfg_f.d0)
            + leader.uav_length / 2.0
        )
        v_safe = (leader.u - uav.u - fixed) / (dt + k_f * cfg_f.tau_f)
        return max(0.0, v_safe)

    def _progress_lane_change(self, uav: UAVState) -> None:
        if uav.mode is not Mode.LANE_CHANGE or not uav.change_path:
            return
        path = uav.change_path
        if uav.u >= path[-1].s:
            uav.lateral = path[-1].lateral
            uav.vertical = path[-1].vertical
            uav.change_path = None
            uav.change_target = ""
            self._set_mode(uav, Mode.CRUISE)
            return
        for a, b in zip(path[:-1], path[1:]):
            if a.s <= uav.u <= b.s:
                span = b.s - a.s
                f = 0.0 if span <= 0 else (uav.u - a.s) / span
                uav.lateral = a.lateral + f * (b.lateral - a.lateral)
                uav.vertical = a.vertical + f * (b.vertical - a.vertical)
                return

    def _recover_cross_position(self, uav: UAVState, dt: float) -> None:
        """Disturbed vehicles steer back to their seat at max cross speed."""
        if uav.mode is not Mode.CRUISE:
            return
        seat = self._seat(uav.lane_id).offset
        d_lat = seat.lateral - uav.lateral
        d_vert = seat.vertical - uav.vertical
        dist = math.hypot(d_lat, d_vert)
        if dist == 0.0:
            return
        move = min(dist, self.cfg.limits.max_cross_speed * dt)
        uav.lateral += d_lat / dist * move
        uav.vertical += d_vert / dist * move

    def _process_spawns(self) -> None:
        for lane_id, queue in self.arrivals.items():
            while queue and queue[0] <= self.t:
                status, _ = self.try_spawn(lane_id)
                if status == "deferred":
                    self.metrics["deferred"] = int(self.metrics["deferred"]) + 1
                    break  # keep FIFO order; retry next step
                queue.pop(0)

    def _check_containment(self) -> None:
        for uav in self.uavs.values():
            if not uav.active():
                continue
            seat = self._seat(uav.lane_id)
            in_lane = True
            if uav.mode is not Mode.LANE_CHANGE:
                off = math.hypot(
                    uav.lateral - seat.offset.lateral,
                    uav.vertical - seat.offset.vertical,
                )
                in_lane = off <= seat.radius
            in_corridor = (
                math.hypot(uav.lateral, uav.vertical)
                <= self.plan.corridor.outer_radius
            )
            self._edge_breach(uav, BreachKind.LANE_BREACH, not in_lane)
            self._edge_breach(uav, BreachKind.CORRIDOR_BREACH, not in_corridor)

    def _edge_breach(self, uav: UAVState, kind: BreachKind, breached: bool) -> None:
        key = (uav.id, kind.value)
        was = self._breach_active.get(key, False)
        if breached and not was:
            counts: Dict[str, int] = self.metrics["breaches"]  # type: ignore[assignment]
            counts[kind.value] += 1
            severity = (
                Severity.WARNING if kind is BreachKind.LANE_BREACH else Severity.SAFETY
            )
            p = self.position_of(uav)
            self._emit(
                "breach", uav.id, breach=kind.value, severity=severity.value,
                east=f"{p.east:.3f}", north=f"{p.north:.3f}", up=f"{p.up:.3f}",
            )
        self._breach_active[key] = breached

    def _check_overlaps(self) -> None:
        min_spacing: Dict[str, float] = self.metrics["min_spacing"]  # type: ignore[assignment]
        for spec in self.plan.lanes:
            members = self._lane_order(spec.id)
            fences = [self._fence(m) for m in members]
            for i, a in enumerate(members):
                fence_a = fences[i]
                for j in range(i + 1, len(members)):
                    b = members[j]
                    fence_b = fences[j]
                    lo_a, hi_a = a.u - fence_a.d_r - a.uav_length / 2, a.u + fence_a.d_f + a.uav_length / 2
                    lo_b, hi_b = b.u - fence_b.d_r - b.uav_length / 2, b.u + fence_b.d_f + b.uav_length / 2
                    overlap = lo_a < hi_b and lo_b < hi_a
                    key = (a.id, b.id) if a.id < b.id else (b.id, a.id)
                    was = self._overlap_active.get(key, False)
                    if overlap and not was:
                        counts: Dict[str, int] = self.metrics["breaches"]  # type: ignore[assignment]
                        counts[BreachKind.CORE_OVERLAP.value] += 1
                        self._emit(
                            "breach", key[0], breach=BreachKind.CORE_OVERLAP.value,
                            severity=Severity.SAFETY.value, other=key[1],
                        )
                    self._overlap_active[key] = overlap
                cur = min_spacing.get(spec.id, math.inf)
                nxt = members[i + 1] if i + 1 < len(members) else None
                if nxt is not None:
                    min_spacing[spec.id] = min(cur, a.u - nxt.u)

    def _flush_events(self) -> None:
        pending = sorted(
            self._pending_events, key=lambda item: item[1]
        )
        for kind, uav_id, data in pending:
            self._event_seq += 1
            self.events.append(
                SimEvent(self.t, self._event_seq, kind, uav_id, data)
            )
        self._pending_events = []

    def _record_telemetry(self, transitioned: Iterable[str]) -> None:
        final_rows = set(transitioned)
        for uav in self.uavs.values():
            if not uav.active() and uav.id not in final_rows:
                continue
            s = self._s_of(uav)
            row = (
                f"{self.t:.3f},{uav.id},{uav.lane_id},{s:.6f},"
                f"{uav.lateral:.6f},{uav.vertical:.6f},{uav.speed:.6f},"
                f"{uav.mode.value},{uav.health.value}"
            )
            self.telemetry.append(row)

    # -- snapshots ---------------------------------------------------------

    def to_snapshot(self) -> Dict[str, object]:
        return {
            "t": self.t,
            "step_index": self.step_index,
            "spawn_count": self._spawn_count,
            "event_seq": self._event_seq,
            "uavs": [
                {
                    "id": u.id, "cl": u.cl.value, "lane_id": u.lane_id,
                    "u": u.u, "speed": u.speed, "lateral": u.lateral,
                    "vertical": u.vertical, "mode": u.mode.value,
                    "health": u.health.value, "uav_length": u.uav_length,
                    "uav_span": u.uav_span, "spawn_seq": u.spawn_seq,
                    "v_cap": None if u.v_cap == math.inf else u.v_cap,
                }
                for u in self.uavs.values()
            ],
            "arrivals": {k: list(v) for k, v in self.arrivals.items()},
            "breach_active": [
                [k[0], k[1]] for k, v in self._breach_active.items() if v
            ],
            "overlap_active": [
                [k[0], k[1]] for k, v in self._overlap_active.items() if v
            ],
            "stagger_active": [
                k for k, v in self._stagger_active.items() if v
            ],
            "metrics": json.loads(json.dumps(self.metrics)),
        }

    def restore_snapshot(self, snap: Dict[str, object]) -> None:
        self.t = float(snap["t"])  # type: ignore[arg-type]
        self.step_index = int(snap["step_index"])  # type: ignore[arg-type]
        self._spawn_count = int(snap["spawn_count"])  # type: ignore[arg-type]
        self._event_seq = int(snap["event_seq"])  # type: ignore[arg-type]
        self.uavs = {}
        for rec in snap["uavs"]:  # type: ignore[union-attr]
            uav = UAVState(
                id=rec["id"], cl=ComplianceLevel(rec["cl"]),
                lane_id=rec["lane_id"], u=float(rec["u"]),
                speed=float(rec["speed"]), lateral=float(rec["lateral"]),
                vertical=float(rec["vertical"]), mode=Mode(rec["mode"]),
                health=Health(rec["health"]),
                uav_length=float(rec["uav_length"]),
                uav_span=float(rec["uav_span"]),
                spawn_seq=int(rec["spawn_seq"]),
                v_cap=math.inf if rec["v_cap"] is None else float(rec["v_cap"]),
            )
            self.uavs[uav.id] = uav
        self.arrivals = {
            k: [float(x) for x in v]
            for k, v in snap["arrivals"].items()  # type: ignore[union-attr]
        }
        self._breach_active = {
            (a, b): True for a, b in snap.get("breach_active", [])  # type: ignore[union-attr]
        }
        self._overlap_active = {
            (a, b): True for a, b in snap.get("overlap_active", [])  # type: ignore[union-attr]
        }
        self._stagger_active = {
            k: True for k in snap.get("stagger_active", [])  # type: ignore[union-attr]
        }
        self.metrics = snap["metrics"]  # type: ignore[assignment]


# -- module-level operation wrappers ---------------------------------------


def step(world: TrafficWorld, dt: Optional[float] = None) -> TrafficWorld:
    """Advance one step. dt, if given, must equal the configured step."""
    if dt is not None and abs(dt - world.cfg.dt) > 1e-12:
        raise SimError("variable step sizes are not supported")
    world.step()
    return world


def inject_fault(world: TrafficWorld, uav_id: str) -> TrafficWorld:
    world.inject_fault(uav_id)
    return world


def inject_disturbance(
    world: TrafficWorld, uav_id: str, lateral_offset: float,
    vertical_offset: float = 0.0,
) -> TrafficWorld:
    world.inject_disturbance(uav_id, lateral_offset, vertical_offset)
    return world


def spawn(world: TrafficWorld, lane_id: str,
          cl: Optional[ComplianceLevel] = None,
          speed: Optional[float] = None) -> Optional[str]:
    _, uav_id = world.try_spawn(lane_id, cl, speed)
    world._flush_events()
    return uav_id


@dataclass(frozen=True)
class ScheduledFault:
    t: float
    uav_id: str


@dataclass(frozen=True)
class ScheduledDisturbance:
    t: float
    uav_id: str
    lateral: float
    vertical: float = 0.0


def run_scenario(
    plan: LanePlan,
    cfg: SimConfig,
    faults: Sequence[ScheduledFault] = (),
    disturbances: Sequence[ScheduledDisturbance] = (),
) -> SimReport:
    """Run a full scenario deterministically and collect the report."""
    world = TrafficWorld(plan, cfg)
    fault_queue = sorted(faults, key=lambda f: (f.t, f.uav_id))
    dist_queue = sorted(disturbances, key=lambda d: (d.t, d.uav_id))
    steps = int(round(cfg.duration / cfg.dt))
    for _ in range(steps):
        next_t = round((world.step_index + 1) * cfg.dt, 9)
        # injections due now wait for their target to spawn before firing
        remaining = []
        for item in fault_queue:
            if item.t <= next_t and item.uav_id in world.uavs:
                world.inject_fault(item.uav_id)
            else:
                remaining.append(item)
        fault_queue = remaining
        remaining = []
        for item in dist_queue:
            if item.t <= next_t and item.uav_id in world.uavs:
                world.inject_disturbance(item.uav_id, item.lateral, item.vertical)
            else:
                remaining.append(item)
        dist_queue = remaining
        world.step()
    metrics = dict(world.metrics)
    completed: Dict[str, int] = metrics.get("completed", {})  # type: ignore[assignment]
    metrics["achieved_throughput"] = {
        lane: count * 3600.0 / cfg.duration for lane, count in completed.items()
    }
    return SimReport(
        events=list(world.events),
        telemetry=list(world.telemetry),
        metrics=metrics,
    )
