"""Three-layer geofencing: compliance-level capability table, per-UAV core
fence sizing, layered containment checks, breach events, and headway math.

Layers, inside out: the moving core fence around each UAV, the lane
cylinder, and the outer corridor tube. A UAV exactly on a fence surface is
compliant; breach requires strict exteriority, and core fences may touch
but not overlap.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Dict, List, Optional, Tuple

from .geometry import (
    ArcPosition,
    CorridorTube,
    LaneCylinder,
    Point3,
    distance_to_route,
)


class FencingError(ValueError):
    pass


class DetectionRange(Enum):
    SHORT = "Short"
    MID = "Mid"
    HIGH = "High"


class HealthMonitoring(Enum):
    NONE = "None"
    GCS_BASED = "GCSBased"
    ONBOARD = "Onboard"


class FaultResponse(Enum):
    ABORT = "Abort"
    LAND = "Land"
    DEGRADED_CRUISE = "DegradedCruise"


@dataclass(frozen=True)
class ComplianceFlags:
    v2x: bool
    v2v: bool
    conflict_detection_range: DetectionRange
    health_monitoring: HealthMonitoring
    endurance_round_trip: bool
    warning_module: bool
    fault_tolerance: bool


class ComplianceLevel(Enum):
    CL1 = "CL1"
    CL2 = "CL2"
    CL3 = "CL3"

    @property
    def flags(self) -> ComplianceFlags:
        return COMPLIANCE_TABLE[self]

    @property
    def fault_response(self) -> FaultResponse:
        """Behavior on a health fault: no tolerance aborts, GCS-monitored
        vehicles land immediately, fault-tolerant vehicles keep cruising
        degraded."""
        if self is ComplianceLevel.CL1:
            return FaultResponse.ABORT
        if self is ComplianceLevel.CL2:
            return FaultResponse.LAND
        return FaultResponse.DEGRADED_CRUISE


# CL1: lowest compliance -- basic V2X, short detection, no health feed, no
# warning module, no fault tolerance. CL2 adds mid-range detection, GCS
# health monitoring, and fence-violation warnings; it lands on any fault.
# CL3 adds V2V, onboard monitoring, round-trip endurance, the full warning
# module, and fault tolerance.
COMPLIANCE_TABLE: Dict[ComplianceLevel, ComplianceFlags] = {
    ComplianceLevel.CL1: ComplianceFlags(
        v2x=True,
        v2v=False,
        conflict_detection_range=DetectionRange.SHORT,
        health_monitoring=HealthMonitoring.NONE,
        endurance_round_trip=False,
        warning_module=False,
        fault_tolerance=False,
    ),
    ComplianceLevel.CL2: ComplianceFlags(
        v2x=True,
        v2v=False,
        conflict_detection_range=DetectionRange.MID,
        health_monitoring=HealthMonitoring.GCS_BASED,
        endurance_round_trip=False,
        warning_module=True,
        fault_tolerance=False,
    ),
    ComplianceLevel.CL3: ComplianceFlags(
        v2x=True,
        v2v=True,
        conflict_detection_range=DetectionRange.HIGH,
        health_monitoring=HealthMonitoring.ONBOARD,
        endurance_round_trip=True,
        warning_module=True,
        fault_tolerance=True,
    ),
}


@dataclass(frozen=True)
class FenceConfig:
    """Constants for core fence sizing: d = k(cl) * (v * tau + d0)."""

    tau_f: float = 2.0
    tau_r: float = 1.0
    d0: float = 1.0
    k: Tuple[Tuple[ComplianceLevel, float], ...] = (
        (ComplianceLevel.CL1, 2.0),
        (ComplianceLevel.CL2, 1.5),
        (ComplianceLevel.CL3, 1.0),
    )
    cross_margin: float = 0.5

    def __post_init__(self):
        if not self.tau_f >= self.tau_r > 0:
            raise FencingError("require tau_f >= tau_r > 0")
        if self.d0 <= 0:
            raise FencingError("require d0 > 0")
        ks = dict(self.k)
        if not (
            ks[ComplianceLevel.CL1] > ks[ComplianceLevel.CL2] > ks[ComplianceLevel.CL3] > 0
        ):
            raise FencingError("require k(CL1) > k(CL2) > k(CL3) > 0")

    def k_of(self, cl: ComplianceLevel) -> float:
        return dict(self.k)[cl]


@dataclass(frozen=True)
class CoreGeofence:
    """Moving protection volume around one UAV (a box in the lane frame).

    The airframe length it was sized for is kept so the total-length
    invariant d_t = d_f + uav_length + d_r is checkable and headway math
    needs no extra arguments.
    """

    d_f: float
    d_r: float
    d_t: float
    width: float
    height: float
    uav_length: float

    def __post_init__(self):
        for name in ("d_f", "d_r", "d_t", "width", "height", "uav_length"):
            if getattr(self, name) <= 0:
                raise FencingError(f"{name} must be positive")
        if abs(self.d_t - (self.d_f + self.uav_length + self.d_r)) > 1e-9:
            raise FencingError("d_t must equal d_f + uav_length + d_r")
        if self.d_f < self.d_r:
            raise FencingError("forward clearance must be >= rear clearance")


class BreachKind(Enum):
    LANE_BREACH = "LaneBreach"
    CORRIDOR_BREACH = "CorridorBreach"
    CORE_OVERLAP = "CoreOverlap"


class Severity(Enum):
    WARNING = "Warning"
    SAFETY = "Safety"


# Lane breach is a warning (the corridor still contains the vehicle);
# leaving the corridor or overlapping core fences is a safety event.
BREACH_SEVERITY: Dict[BreachKind, Severity] = {
    BreachKind.LANE_BREACH: Severity.WARNING,
    BreachKind.CORRIDOR_BREACH: Severity.SAFETY,
    BreachKind.CORE_OVERLAP: Severity.SAFETY,
}


@dataclass(frozen=True)
class BreachEvent:
    uav_id: str
    kind: BreachKind
    t: float
    position: Point3
    severity: Optional[Severity] = None

    def __post_init__(self):
        expected = BREACH_SEVERITY[self.kind]
        if self.severity is None:
            object.__setattr__(self, "severity", expected)
        elif self.severity is not expected:
            raise FencingError(f"{self.kind.value} events are always {expected.value}")


def breach_event(uav_id: str, kind: BreachKind, t: float, position: Point3) -> BreachEvent:
    return BreachEvent(uav_id, kind, t, position, BREACH_SEVERITY[kind])


@lru_cache(maxsize=8192)
def core_fence_dims(
    v: float,
    cl: ComplianceLevel,
    uav_length: float,
    uav_span: float,
    cfg: FenceConfig = FenceConfig(),
) -> CoreGeofence:
    """Size the core fence for speed v and compliance level cl.

    Clearances grow linearly with speed (reaction distance) scaled by the
    compliance multiplier: lower compliance, larger fence. Results are
    memoized; simulation loops call this with recurring speeds.
    """
    if v < 0:
        raise FencingError("speed must be >= 0")
    if uav_length <= 0 or uav_span <= 0:
        raise FencingError("airframe dimensions must be positive")
    k = cfg.k_of(cl)
    d_f = k * (v * cfg.tau_f + cfg.d0)
    d_r = k * (v * cfg.tau_r + cfg.d0)
    cross = uav_span + 2.0 * cfg.cross_margin
    return CoreGeofence(
        d_f=d_f,
        d_r=d_r,
        d_t=d_f + uav_length + d_r,
        width=cross,
        height=cross,
        uav_length=uav_length,
    )


def check_containment(
    uav_id: str,
    uav_pos: Point3,
    lane: LaneCylinder,
    corridor: CorridorTube,
    t: float,
) -> List[BreachEvent]:
    """Layered containment: empty if inside the lane; LaneBreach if only the
    corridor still contains the vehicle; LaneBreach plus CorridorBreach if
    even the outer fence is violated."""
    if distance_to_route(uav_pos, lane.centerline) <= lane.radius:
        return []
    events = [breach_event(uav_id, BreachKind.LANE_BREACH, t, uav_pos)]
    if distance_to_route(uav_pos, corridor.centerline) > corridor.outer_radius:
        events.append(breach_event(uav_id, BreachKind.CORRIDOR_BREACH, t, uav_pos))
    return events


def min_headway(leader: CoreGeofence, follower: CoreGeofence) -> float:
    """Required centroid spacing so the fences may touch but not overlap:
    follower's forward clearance + both half-airframes + leader's rear
    clearance."""
    return (
        follower.d_f
        + follower.uav_length / 2.0
        + leader.d_r
        + leader.uav_length / 2.0
    )


def _along_interval(arc: ArcPosition, fence: CoreGeofence) -> Tuple[float, float]:
    half = fence.uav_length / 2.0
    return (arc.s - fence.d_r - half, arc.s + fence.d_f + half)


def core_overlap(
    a: Tuple[ArcPosition, CoreGeofence], b: Tuple[ArcPosition, CoreGeofence]
) -> bool:
    """True iff two core fences overlap in the shared lane frame.

    Along-track intervals and cross-section boxes must both strictly
    overlap; touching surfaces are compliant.
    """
    arc_a, fence_a = a
    arc_b, fence_b = b
    lo_a, hi_a = _along_interval(arc_a, fence_a)
    lo_b, hi_b = _along_interval(arc_b, fence_b)
    if not (lo_a < hi_b and lo_b < hi_a):
        return False
    if abs(arc_a.lateral - arc_b.lateral) >= (fence_a.width + fence_b.width) / 2.0:
        return False
    if abs(arc_a.vertical - arc_b.vertical) >= (fence_a.height + fence_b.height) / 2.0:
        return False
    return True


@dataclass(frozen=True)
class EligibilityPolicy:
    """Mission-size ceilings for the lower compliance levels."""

    cl1_max_length: float = 2000.0
    cl1_max_duration: float = 600.0
    cl2_max_length: float = 10000.0
    cl2_max_duration: float = 1800.0

    def __post_init__(self):
        for name in (
            "cl1_max_length",
            "cl1_max_duration",
            "cl2_max_length",
            "cl2_max_duration",
        ):
            if getattr(self, name) <= 0:
                raise FencingError(f"{name} must be positive")


class IneligibilityReason(Enum):
    EXCEEDS_LENGTH = "ExceedsLength"
    EXCEEDS_DURATION = "ExceedsDuration"


@dataclass(frozen=True)
class EligibilityResult:
    eligible: bool
    reasons: Tuple[IneligibilityReason, ...] = ()


def mission_eligibility(
    cl: ComplianceLevel,
    mission_length: float,
    duration: float,
    policy: EligibilityPolicy = EligibilityPolicy(),
) -> EligibilityResult:
    """Whether a compliance level may fly a mission of this size. CL3 has
    round-trip endurance and fault tolerance, so it is always eligible;
    CL1/CL2 are capped by the policy thresholds."""
    if cl is ComplianceLevel.CL3:
        return EligibilityResult(True)
    if cl is ComplianceLevel.CL1:
        max_length, max_duration = policy.cl1_max_length, policy.cl1_max_duration
    else:
        max_length, max_duration = policy.cl2_max_length, policy.cl2_max_duration
    reasons: List[IneligibilityReason] = []
    if mission_length > max_length:
        reasons.append(IneligibilityReason.EXCEEDS_LENGTH)
    if duration > max_duration:
        reasons.append(IneligibilityReason.EXCEEDS_DURATION)
    return EligibilityResult(not reasons, tuple(reasons))
