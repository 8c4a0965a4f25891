"""Lane planning inside a corridor: cross-section layouts, flow-direction
distributions, downwash risk classification, lane-change maneuvers, and
capacity arithmetic.

Named distributions follow the standard multi-lane patterns: A sends the
outer stack lanes one way and the middle pair the other; B alternates
directions between vertically adjacent lanes, which keeps every adjacent
pair counter-flowing; BasicB is the two-lane minimum (L2 out, L3 in).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .geometry import (
    ArcPosition,
    CorridorTube,
    CrossSectionOffset,
    LaneCylinder,
    NoFlyZone,
    distance_to_route,
    intersects_nofly,
    lane_clearance,
    make_lane,
)

# Vertical reach of wake coupling between overlapping lane footprints.
# Lanes separated by more than this are aerodynamically independent.
DOWNWASH_COUPLING_RANGE = 10.0
# Minimum fence-to-fence gap between lanes in a valid plan.
MIN_LANE_GAP = 1.0


class PlanningError(ValueError):
    """Base class for lane planning failures."""


class LayoutTooLargeForCorridor(PlanningError):
    pass


class DistributionLaneMismatch(PlanningError):
    pass


class IncompatibleDirections(PlanningError):
    pass


class ManeuverExitsCorridor(PlanningError):
    pass


class FlowDirection(Enum):
    INFLOW = "Inflow"
    OUTFLOW = "Outflow"


class LaneRole(Enum):
    TRAFFIC = "Traffic"
    SERVICE = "Service"
    EMERGENCY = "Emergency"


class DownwashRisk(Enum):
    NONE = "None"
    MITIGATED = "Mitigated"
    COUPLED = "Coupled"


@dataclass(frozen=True)
class LaneSpec:
    """One lane: seat position in the cross-section, size, and flow direction."""

    id: str
    offset: CrossSectionOffset
    radius: float
    direction: FlowDirection
    role: LaneRole = LaneRole.TRAFFIC

    def __post_init__(self):
        if self.radius <= 0:
            raise PlanningError(f"lane {self.id}: radius must be positive")


@dataclass(frozen=True)
class Distribution:
    """Assignment of flow directions to named lane seats."""

    name: str
    assignments: Tuple[Tuple[str, FlowDirection], ...]

    def __post_init__(self):
        ids = [lane_id for lane_id, _ in self.assignments]
        if len(set(ids)) != len(ids):
            raise PlanningError(f"distribution {self.name}: duplicate lane ids")
        if not ids:
            raise PlanningError(f"distribution {self.name}: no lanes assigned")

    def direction_of(self, lane_id: str) -> FlowDirection:
        for lid, d in self.assignments:
            if lid == lane_id:
                return d
        raise KeyError(lane_id)


DISTRIBUTION_A = Distribution(
    "A",
    (
        ("L1", FlowDirection.INFLOW),
        ("L2", FlowDirection.OUTFLOW),
        ("L3", FlowDirection.OUTFLOW),
        ("L4", FlowDirection.INFLOW),
    ),
)
DISTRIBUTION_B = Distribution(
    "B",
    (
        ("L1", FlowDirection.INFLOW),
        ("L2", FlowDirection.OUTFLOW),
        ("L3", FlowDirection.INFLOW),
        ("L4", FlowDirection.OUTFLOW),
    ),
)
DISTRIBUTION_BASIC_B = Distribution(
    "BasicB",
    (
        ("L2", FlowDirection.OUTFLOW),
        ("L3", FlowDirection.INFLOW),
    ),
)

NAMED_DISTRIBUTIONS: Dict[str, Distribution] = {
    "A": DISTRIBUTION_A,
    "B": DISTRIBUTION_B,
    "BasicB": DISTRIBUTION_BASIC_B,
}


def custom_distribution(assignments: Sequence[Tuple[str, FlowDirection]]) -> Distribution:
    return Distribution("Custom", tuple(assignments))


@dataclass(frozen=True)
class VerticalStack:
    """Lanes stacked on the centerline vertical, L1 on top."""

    spacing: float

    def __post_init__(self):
        if self.spacing <= 0:
            raise PlanningError("stack spacing must be positive")

    def seats(self) -> Dict[str, CrossSectionOffset]:
        s = self.spacing
        return {
            "L1": CrossSectionOffset(0.0, 1.5 * s),
            "L2": CrossSectionOffset(0.0, 0.5 * s),
            "L3": CrossSectionOffset(0.0, -0.5 * s),
            "L4": CrossSectionOffset(0.0, -1.5 * s),
        }


@dataclass(frozen=True)
class Grid2x2:
    """Two columns, two rows. Looking along travel: L1 top-left, L2 top-right,
    L3 bottom-left, L4 bottom-right (left of travel is positive lateral)."""

    h_spacing: float
    v_spacing: float

    def __post_init__(self):
        if self.h_spacing <= 0 or self.v_spacing <= 0:
            raise PlanningError("grid spacings must be positive")

    def seats(self) -> Dict[str, CrossSectionOffset]:
        h, v = self.h_spacing / 2.0, self.v_spacing / 2.0
        return {
            "L1": CrossSectionOffset(h, v),
            "L2": CrossSectionOffset(-h, v),
            "L3": CrossSectionOffset(h, -v),
            "L4": CrossSectionOffset(-h, -v),
        }


@dataclass(frozen=True)
class CustomLayout:
    """Explicit seat offsets, numbered L1..Ln in the order given."""

    offsets: Tuple[CrossSectionOffset, ...]

    def __post_init__(self):
        if not self.offsets:
            raise PlanningError("custom layout needs at least one seat")

    def seats(self) -> Dict[str, CrossSectionOffset]:
        return {f"L{i + 1}": off for i, off in enumerate(self.offsets)}


CrossSectionLayout = Union[VerticalStack, Grid2x2, CustomLayout]


@dataclass(frozen=True)
class LanePlan:
    """A corridor with its planned lanes. Built by plan_lanes."""

    corridor: CorridorTube
    lanes: Tuple[LaneSpec, ...]
    layout: CrossSectionLayout
    distribution: Distribution
    cylinders: Tuple[LaneCylinder, ...]

    def lane(self, lane_id: str) -> LaneSpec:
        for spec in self.lanes:
            if spec.id == lane_id:
                return spec
        raise KeyError(lane_id)

    def cylinder(self, lane_id: str) -> LaneCylinder:
        for spec, cyl in zip(self.lanes, self.cylinders):
            if spec.id == lane_id:
                return cyl
        raise KeyError(lane_id)


@dataclass(frozen=True)
class KinematicLimits:
    """Vehicle envelope used for lane changes and the speed controller."""

    max_speed: float = 15.0
    max_cross_speed: float = 1.0
    max_accel: float = 2.0

    def __post_init__(self):
        if self.max_speed <= 0 or self.max_cross_speed <= 0 or self.max_accel <= 0:
            raise PlanningError("kinematic limits must be positive")


def plan_lanes(
    corridor: CorridorTube,
    layout: CrossSectionLayout,
    dist: Distribution,
    lane_radius: float,
    roles: Optional[Dict[str, LaneRole]] = None,
) -> LanePlan:
    """Build the lane plan: one lane per distribution-named seat, in layout
    order (stack: top to bottom; grid: L1..L4 row-major).

    Raises DistributionLaneMismatch if the distribution names a seat the
    layout does not provide, LayoutTooLargeForCorridor if any lane cannot
    fit inside the outer fence.
    """
    if lane_radius <= 0:
        raise PlanningError("lane_radius must be positive")
    seats = layout.seats()
    named = {lane_id for lane_id, _ in dist.assignments}
    missing = sorted(named - set(seats))
    if missing:
        raise DistributionLaneMismatch(
            f"distribution {dist.name} names seats {missing} absent from the layout"
        )
    specs: List[LaneSpec] = []
    for lane_id, offset in seats.items():
        if lane_id not in named:
            continue
        reach = math.hypot(offset.lateral, offset.vertical) + lane_radius
        if reach > corridor.outer_radius:
            raise LayoutTooLargeForCorridor(
                f"lane {lane_id} extends {reach:.2f} m from the centerline, "
                f"outer radius is {corridor.outer_radius:.2f} m"
            )
        role = (roles or {}).get(lane_id, LaneRole.TRAFFIC)
        specs.append(
            LaneSpec(
                id=lane_id,
                offset=offset,
                radius=lane_radius,
                direction=dist.direction_of(lane_id),
                role=role,
            )
        )
    cylinders = tuple(
        make_lane(corridor.centerline, spec.offset, spec.radius) for spec in specs
    )
    return LanePlan(
        corridor=corridor,
        lanes=tuple(specs),
        layout=layout,
        distribution=dist,
        cylinders=cylinders,
    )


def downwash_risk(
    a: LaneSpec, b: LaneSpec, coupling_range: float = DOWNWASH_COUPLING_RANGE
) -> DownwashRisk:
    """Wake interaction class for a lane pair.

    Coupled: horizontal footprints overlap, vertical separation within the
    coupling range, same flow direction (runtime stagger required).
    Mitigated: same geometry but counter-flowing traffic. None: footprints
    do not overlap horizontally, or the lanes are too far apart vertically
    for wake to carry.
    """
    d_lat = abs(a.offset.lateral - b.offset.lateral)
    if d_lat >= a.radius + b.radius:
        return DownwashRisk.NONE
    d_vert = abs(a.offset.vertical - b.offset.vertical)
    if d_vert == 0.0 or d_vert > coupling_range:
        return DownwashRisk.NONE
    if a.direction == b.direction:
        return DownwashRisk.COUPLED
    return DownwashRisk.MITIGATED


class ViolationKind(Enum):
    LANE_OVERLAP = "LaneOverlap"
    LANE_OUTSIDE_CORRIDOR = "LaneOutsideCorridor"
    NOFLY_CONFLICT = "NoFlyConflict"


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    lanes: Tuple[str, ...]
    zone: str = ""


@dataclass(frozen=True)
class ValidationReport:
    violations: Tuple[Violation, ...]
    risk_matrix: Tuple[Tuple[str, str, DownwashRisk], ...]

    @property
    def valid(self) -> bool:
        return not self.violations

    def risk_of(self, a: str, b: str) -> DownwashRisk:
        for la, lb, risk in self.risk_matrix:
            if {la, lb} == {a, b}:
                return risk
        raise KeyError((a, b))

    def coupled_pairs(self) -> List[Tuple[str, str]]:
        return [
            (a, b) for a, b, r in self.risk_matrix if r is DownwashRisk.COUPLED
        ]


def validate_plan(
    plan: LanePlan,
    zones: Sequence[NoFlyZone] = (),
    window: Tuple[float, float] = (0.0, float(10 ** 9)),
    min_lane_gap: float = MIN_LANE_GAP,
    coupling_range: float = DOWNWASH_COUPLING_RANGE,
    sample_step: float = 1.0,
) -> ValidationReport:
    """Check lane separation, corridor containment, and no-fly conflicts.

    Coupled downwash pairs are reported in the risk matrix but are not
    violations: the simulator enforces stagger on them at runtime.
    """
    violations: List[Violation] = []
    lanes, cyls = plan.lanes, plan.cylinders
    for i in range(len(lanes)):
        for j in range(i + 1, len(lanes)):
            if lane_clearance(cyls[i], cyls[j], sample_step) < min_lane_gap:
                violations.append(
                    Violation(ViolationKind.LANE_OVERLAP, (lanes[i].id, lanes[j].id))
                )
    corridor = plan.corridor
    for spec, cyl in zip(lanes, cyls):
        route = cyl.centerline
        n = max(2, int(math.ceil(route.total_length / sample_step)) + 1)
        worst = 0.0
        for k in range(n):
            s = route.total_length * k / (n - 1)
            p = route.point_at(s)
            worst = max(worst, distance_to_route(p, corridor.centerline))
        if worst + spec.radius > corridor.outer_radius + 1e-9:
            violations.append(
                Violation(ViolationKind.LANE_OUTSIDE_CORRIDOR, (spec.id,))
            )
    for spec, cyl in zip(lanes, cyls):
        for zone in zones:
            if intersects_nofly(cyl, zone, window, sample_step):
                violations.append(
                    Violation(
                        ViolationKind.NOFLY_CONFLICT, (spec.id,), zone=zone.name
                    )
                )
    matrix: List[Tuple[str, str, DownwashRisk]] = []
    for i in range(len(lanes)):
        for j in range(i + 1, len(lanes)):
            matrix.append(
                (lanes[i].id, lanes[j].id, downwash_risk(lanes[i], lanes[j], coupling_range))
            )
    return ValidationReport(violations=tuple(violations), risk_matrix=tuple(matrix))


def lane_change_path(
    frm: LaneSpec,
    to: LaneSpec,
    s_start: float,
    v: float,
    limits: KinematicLimits,
    corridor: CorridorTube,
    sample_step: float = 1.0,
) -> List[ArcPosition]:
    """Transition path between two lane seats in cross-section coordinates.

    The vehicle keeps along-track speed v while crabbing at max_cross_speed,
    so each leg spans v * |delta| / max_cross_speed meters of arc. Diagonal
    moves decompose into a horizontal leg followed by a vertical leg.
    """
    if v <= 0:
        raise PlanningError("lane change requires positive along-track speed")
    if frm.direction != to.direction and to.role is not LaneRole.EMERGENCY:
        raise IncompatibleDirections(
            f"{frm.id} ({frm.direction.value}) cannot merge into "
            f"{to.id} ({to.direction.value})"
        )
    d_lat = to.offset.lateral - frm.offset.lateral
    d_vert = to.offset.vertical - frm.offset.vertical
    if d_lat == 0.0 and d_vert == 0.0:
        return []
    legs: List[Tuple[float, float]] = []
    if d_lat != 0.0:
        legs.append((d_lat, 0.0))
    if d_vert != 0.0:
        legs.append((0.0, d_vert))
    path: List[ArcPosition] = []
    s = s_start
    lat, vert = frm.offset.lateral, frm.offset.vertical
    path.append(ArcPosition(s, lat, vert))
    for leg_lat, leg_vert in legs:
        magnitude = abs(leg_lat) + abs(leg_vert)
        span = v * magnitude / limits.max_cross_speed
        n = max(1, int(math.ceil(span / sample_step)))
        for k in range(1, n + 1):
            f = k / n
            path.append(
                ArcPosition(s + f * span, lat + f * leg_lat, vert + f * leg_vert)
            )
        s += span
        lat += leg_lat
        vert += leg_vert
    for ap in path:
        if math.hypot(ap.lateral, ap.vertical) > corridor.outer_radius + 1e-9:
            raise ManeuverExitsCorridor(
                f"lane change {frm.id}->{to.id} leaves the corridor at s={ap.s:.1f}"
            )
    return path


def throughput_capacity(lane: Optional[LaneSpec], v: float, headway: float) -> float:
    """Vehicles per hour a lane sustains at speed v and centroid headway."""
    if v <= 0:
        raise PlanningError("throughput requires v > 0")
    if headway <= 0:
        raise PlanningError("throughput requires headway > 0")
    return 3600.0 * v / headway
