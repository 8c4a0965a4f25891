"""Corridor geometry: routes, tubes, lane cylinders, no-fly zones, containment.

All coordinates are local East-North-Up meters relative to a scenario-level
geodetic origin. Routes are 3D polylines; corridors and lanes are tubes of
constant radius around a polyline centerline. Containment is closed: a point
exactly on a fence surface is still inside.

Cross-section frame convention: looking along the direction of travel,
positive `lateral` is left of travel and positive `vertical` is up. The
vertical cross-section axis is orthogonal to the local tangent (it coincides
with world-up on level segments).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple, Union

import numpy as np

# Segments steeper than |up| > PITCH_RATIO_MAX * |horizontal| are rejected:
# the horizontal-lateral axis degenerates on near-vertical runs.
PITCH_RATIO_MAX = 0.5
# Consecutive waypoints closer than this are degenerate.
MIN_SEGMENT_LENGTH = 0.01
# Default arc-length sampling step for intersection / clearance queries.
DEFAULT_SAMPLE_STEP = 1.0


class GeometryError(ValueError):
    """Base class for geometry construction/validation failures."""


class TooFewWaypoints(GeometryError):
    def __init__(self, count: int):
        super().__init__(f"route needs at least 2 waypoints, got {count}")
        self.count = count


class DegenerateSegment(GeometryError):
    def __init__(self, index: int):
        super().__init__(
            f"segment {index} shorter than {MIN_SEGMENT_LENGTH} m"
        )
        self.index = index


class PitchLimitExceeded(GeometryError):
    def __init__(self, index: int):
        super().__init__(
            f"segment {index} steeper than {PITCH_RATIO_MAX}:1 (up:horizontal)"
        )
        self.index = index


@dataclass(frozen=True)
class Point3:
    """Position in the local East-North-Up frame, meters."""

    east: float
    north: float
    up: float

    def __post_init__(self):
        for v in (self.east, self.north, self.up):
            if not math.isfinite(v):
                raise GeometryError(f"non-finite coordinate in {self!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.east, self.north, self.up], dtype=float)

    @staticmethod
    def from_array(a: Sequence[float]) -> "Point3":
        return Point3(float(a[0]), float(a[1]), float(a[2]))


@dataclass(frozen=True)
class CrossSectionOffset:
    """Displacement in the corridor cross-section plane (meters)."""

    lateral: float = 0.0
    vertical: float = 0.0


@dataclass(frozen=True)
class ArcPosition:
    """Position in route coordinates: arc length plus cross-section offsets."""

    s: float
    lateral: float = 0.0
    vertical: float = 0.0


@dataclass(frozen=True)
class Route:
    """3D polyline centerline with cached segment lengths.

    Construct through build_route / offset_route; they enforce the waypoint,
    degeneracy, and pitch invariants.
    """

    waypoints: Tuple[Point3, ...]
    segment_lengths: Tuple[float, ...]
    total_length: float
    _pts: np.ndarray = field(repr=False, compare=False)
    _cum: np.ndarray = field(repr=False, compare=False)

    def point_at(self, s: float) -> Point3:
        """Centerline point at arc length s (clamped to [0, total])."""
        seg, t = self._locate(s)
        p = self._pts[seg] + t * (self._pts[seg + 1] - self._pts[seg])
        return Point3.from_array(p)

    def _locate(self, s: float) -> Tuple[int, float]:
        s = min(max(s, 0.0), self.total_length)
        seg = int(np.searchsorted(self._cum, s, side="right")) - 1
        seg = min(max(seg, 0), len(self.segment_lengths) - 1)
        ds = s - self._cum[seg]
        return seg, ds / self.segment_lengths[seg]

    def tangent_at(self, s: float) -> np.ndarray:
        seg, _ = self._locate(s)
        v = self._pts[seg + 1] - self._pts[seg]
        return v / np.linalg.norm(v)

    def frame_at(self, s: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Orthonormal (tangent, left, vertical) frame at arc length s."""
        t = self.tangent_at(s)
        return _frame_from_tangent(t)


def _frame_from_tangent(t: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    h = math.hypot(t[0], t[1])
    left = np.array([-t[1] / h, t[0] / h, 0.0])
    vert = np.cross(t, left)
    return t, left, vert


def _vertex_tangent(pts: np.ndarray, i: int) -> np.ndarray:
    """Unit tangent at vertex i: average of adjacent segment tangents."""
    n = len(pts)
    tangents = []
    if i > 0:
        v = pts[i] - pts[i - 1]
        tangents.append(v / np.linalg.norm(v))
    if i < n - 1:
        v = pts[i + 1] - pts[i]
        tangents.append(v / np.linalg.norm(v))
    t = np.mean(tangents, axis=0)
    return t / np.linalg.norm(t)


def build_route(waypoints: Sequence[Point3]) -> Route:
    """Validate waypoints and build a Route with cached segment lengths.

    Raises TooFewWaypoints, DegenerateSegment, or PitchLimitExceeded.
    """
    if len(waypoints) < 2:
        raise TooFewWaypoints(len(waypoints))
    pts = np.array([w.as_array() for w in waypoints], dtype=float)
    vecs = np.diff(pts, axis=0)
    lengths = np.linalg.norm(vecs, axis=1)
    for i, length in enumerate(lengths):
        if length < MIN_SEGMENT_LENGTH:
            raise DegenerateSegment(i)
        horizontal = math.hypot(vecs[i][0], vecs[i][1])
        if abs(vecs[i][2]) > PITCH_RATIO_MAX * horizontal:
            raise PitchLimitExceeded(i)
    cum = np.concatenate(([0.0], np.cumsum(lengths)))
    return Route(
        waypoints=tuple(waypoints),
        segment_lengths=tuple(float(x) for x in lengths),
        total_length=float(cum[-1]),
        _pts=pts,
        _cum=cum,
    )


def _closest_on_route(r: Route, p: np.ndarray) -> Tuple[float, float, int, np.ndarray]:
    """Closest centerline point to p: (s, distance, segment index, point).

    Nearest segment wins; exact ties go to the smaller arc length.
    """
    a = r._pts[:-1]
    vecs = r._pts[1:] - a
    seg_len2 = np.einsum("ij,ij->i", vecs, vecs)
    t = np.clip(np.einsum("ij,ij->i", p - a, vecs) / seg_len2, 0.0, 1.0)
    proj = a + t[:, None] * vecs
    d2 = np.einsum("ij,ij->i", p - proj, p - proj)
    dmin = float(np.min(d2))
    # ties (shared vertices reached from both segments) go to the smaller s
    seg = int(np.nonzero(d2 <= dmin + 1e-12 * (1.0 + dmin))[0][0])
    s = float(r._cum[seg] + t[seg] * r.segment_lengths[seg])
    return s, float(math.sqrt(d2[seg])), seg, proj[seg]


def distance_to_route(p: Point3, r: Route) -> float:
    """Euclidean distance from p to the route polyline."""
    return _closest_on_route(r, p.as_array())[1]


def project_to_route(p: Point3, r: Route) -> ArcPosition:
    """Arc position of the closest centerline point, with signed cross-section
    coordinates of p in that point's (left, vertical) frame."""
    pa = p.as_array()
    s, _, seg, proj = _closest_on_route(r, pa)
    v = r._pts[seg + 1] - r._pts[seg]
    _, left, vert = _frame_from_tangent(v / np.linalg.norm(v))
    d = pa - proj
    return ArcPosition(s=s, lateral=float(d @ left), vertical=float(d @ vert))


def arc_to_point(r: Route, arc: ArcPosition) -> Point3:
    """Map route coordinates back to 3D (inverse of project_to_route on
    segment interiors)."""
    seg, t = r._locate(arc.s)
    base = r._pts[seg] + t * (r._pts[seg + 1] - r._pts[seg])
    v = r._pts[seg + 1] - r._pts[seg]
    _, left, vert = _frame_from_tangent(v / np.linalg.norm(v))
    return Point3.from_array(base + arc.lateral * left + arc.vertical * vert)


def offset_route(r: Route, offset: CrossSectionOffset) -> Route:
    """Displace every waypoint by `lateral` along the horizontal-lateral axis
    of its local (averaged) tangent and by `vertical` along world up.

    A zero offset returns a route with identical waypoints.
    """
    new_wps: List[Point3] = []
    for i, wp in enumerate(r.waypoints):
        t = _vertex_tangent(r._pts, i)
        h = math.hypot(t[0], t[1])
        if abs(t[2]) > PITCH_RATIO_MAX * h:
            raise PitchLimitExceeded(i)
        left = np.array([-t[1] / h, t[0] / h, 0.0])
        p = wp.as_array() + offset.lateral * left
        p[2] += offset.vertical
        new_wps.append(Point3.from_array(p))
    return build_route(new_wps)


@dataclass(frozen=True)
class CorridorTube:
    """Outer fence: the allocated airspace volume around the main centerline."""

    centerline: Route
    outer_radius: float

    def __post_init__(self):
        if self.outer_radius <= 0:
            raise GeometryError("outer_radius must be positive")


@dataclass(frozen=True)
class LaneCylinder:
    """One cylindrical sub-lane, offset from the corridor centerline."""

    offset: CrossSectionOffset
    radius: float
    centerline: Route

    def __post_init__(self):
        if self.radius <= 0:
            raise GeometryError("lane radius must be positive")


def make_lane(parent: Route, offset: CrossSectionOffset, radius: float) -> LaneCylinder:
    return LaneCylinder(offset=offset, radius=radius, centerline=offset_route(parent, offset))


def contains(tube: CorridorTube, p: Point3) -> bool:
    """True iff p is within outer_radius of the corridor centerline (closed)."""
    return distance_to_route(p, tube.centerline) <= tube.outer_radius


def lane_contains(lane: LaneCylinder, p: Point3) -> bool:
    """True iff p is within the lane cylinder (closed boundary)."""
    return distance_to_route(p, lane.centerline) <= lane.radius


# ---------------------------------------------------------------------------
# No-fly zones


def _segments_intersect(p1, p2, p3, p4) -> bool:
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return 0 if abs(v) < 1e-12 else (1 if v > 0 else -1)

    def on_seg(a, b, c):
        return (
            min(a[0], b[0]) - 1e-12 <= c[0] <= max(a[0], b[0]) + 1e-12
            and min(a[1], b[1]) - 1e-12 <= c[1] <= max(a[1], b[1]) + 1e-12
        )

    o1, o2 = orient(p1, p2, p3), orient(p1, p2, p4)
    o3, o4 = orient(p3, p4, p1), orient(p3, p4, p2)
    if o1 != o2 and o3 != o4:
        return True
    if o1 == 0 and on_seg(p1, p2, p3):
        return True
    if o2 == 0 and on_seg(p1, p2, p4):
        return True
    if o3 == 0 and on_seg(p3, p4, p1):
        return True
    if o4 == 0 and on_seg(p3, p4, p2):
        return True
    return False


@dataclass(frozen=True)
class NoFlyZone:
    """Time-scoped prohibited prism: a 2D footprint between two altitudes."""

    footprint: Tuple[Tuple[float, float], ...]
    alt_min: float
    alt_max: float
    t_start: float
    t_end: float
    name: str = ""

    def __post_init__(self):
        if len(self.footprint) < 3:
            raise GeometryError("no-fly footprint needs at least 3 vertices")
        if not self.alt_min < self.alt_max:
            raise GeometryError("no-fly zone requires alt_min < alt_max")
        if not self.t_start < self.t_end:
            raise GeometryError("no-fly zone requires t_start < t_end")
        n = len(self.footprint)
        for i in range(n):
            for j in range(i + 1, n):
                if j == i or (j + 1) % n == i or (i + 1) % n == j:
                    continue  # adjacent edges share a vertex
                if _segments_intersect(
                    self.footprint[i],
                    self.footprint[(i + 1) % n],
                    self.footprint[j],
                    self.footprint[(j + 1) % n],
                ):
                    raise GeometryError("no-fly footprint must be a simple polygon")

    @property
    def active_window(self) -> Tuple[float, float]:
        return (self.t_start, self.t_end)


def point_in_polygon(x: float, y: float, polygon: Sequence[Tuple[float, float]]) -> bool:
    """Even-odd ray casting test; boundary points count as inside."""
    inside = False
    n = len(polygon)
    for i in range(n):
        x1, y1 = polygon[i]
        x2, y2 = polygon[(i + 1) % n]
        if _point_on_segment(x, y, x1, y1, x2, y2):
            return True
        if (y1 > y) != (y2 > y):
            xs = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < xs:
                inside = not inside
    return inside


def _point_on_segment(x, y, x1, y1, x2, y2) -> bool:
    cross = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1)
    if abs(cross) > 1e-9:
        return False
    dot = (x - x1) * (x2 - x1) + (y - y1) * (y2 - y1)
    return -1e-12 <= dot <= (x2 - x1) ** 2 + (y2 - y1) ** 2 + 1e-12


def distance_to_polygon(x: float, y: float, polygon: Sequence[Tuple[float, float]]) -> float:
    """Horizontal distance from (x, y) to the polygon; 0 if inside."""
    if point_in_polygon(x, y, polygon):
        return 0.0
    best = math.inf
    n = len(polygon)
    for i in range(n):
        x1, y1 = polygon[i]
        x2, y2 = polygon[(i + 1) % n]
        dx, dy = x2 - x1, y2 - y1
        t = ((x - x1) * dx + (y - y1) * dy) / (dx * dx + dy * dy)
        t = min(max(t, 0.0), 1.0)
        best = min(best, math.hypot(x - (x1 + t * dx), y - (y1 + t * dy)))
    return best


def windows_overlap(a: Tuple[float, float], b: Tuple[float, float]) -> bool:
    """Half-open interval overlap: touching windows do not overlap."""
    return a[0] < b[1] and b[0] < a[1]


def intersects_nofly(
    volume: Union[CorridorTube, LaneCylinder],
    zone: NoFlyZone,
    window: Tuple[float, float],
    sample_step: float = DEFAULT_SAMPLE_STEP,
) -> bool:
    """True iff the tube, active during `window`, penetrates the zone prism.

    The centerline is sampled every `sample_step` meters of arc; at each
    sample the tube cross-section (a ball of the tube radius) is tested
    against the prism by combined horizontal/vertical distance. Accuracy is
    bounded by the sampling step; monotone in the tube radius.
    """
    t0, t1 = window
    if not t0 < t1:
        raise GeometryError("query window requires t0 < t1")
    if not windows_overlap(window, zone.active_window):
        return False
    if isinstance(volume, CorridorTube):
        route, radius = volume.centerline, volume.outer_radius
    else:
        route, radius = volume.centerline, volume.radius
    n = max(2, int(math.ceil(route.total_length / sample_step)) + 1)
    svals = np.linspace(0.0, route.total_length, n)
    for s in svals:
        p = route.point_at(float(s))
        dv = max(zone.alt_min - p.up, p.up - zone.alt_max, 0.0)
        if dv > radius:
            continue
        dh = distance_to_polygon(p.east, p.north, zone.footprint)
        if math.hypot(dh, dv) <= radius:
            return True
    return False


def lane_clearance(
    a: LaneCylinder, b: LaneCylinder, sample_step: float = DEFAULT_SAMPLE_STEP
) -> float:
    """Minimum surface-to-surface separation of two lanes in one corridor.

    Sampled at matched arc-length fractions of each lane's centerline:
    min over samples of center distance, minus the radius sum. Negative
    values mean the fences overlap somewhere.
    """
    la, lb = a.centerline.total_length, b.centerline.total_length
    n = max(2, int(math.ceil(max(la, lb) / sample_step)) + 1)
    fracs = np.linspace(0.0, 1.0, n)
    best = math.inf
    for f in fracs:
        pa = a.centerline.point_at(float(f) * la).as_array()
        pb = b.centerline.point_at(float(f) * lb).as_array()
        best = min(best, float(np.linalg.norm(pa - pb)))
    return best - (a.radius + b.radius)
