"""Scenario configuration: the structured-text file that fixes the world a
ground control service operates in -- geodetic origin, no-fly zones, fence
and eligibility policy, kinematic limits, corridor cross-section geometry,
simulation defaults, and the UTM endpoint.

Schema (YAML, version 1):

    version: 1
    origin: {lat: 17.4450, lon: 78.3490, alt: 500.0}
    environment:
      wind: 0.0                  # headwind magnitude, m/s
    zones:                       # optional
      - name: hospital
        footprint: [[e, n], ...] # ENU meters, >= 3 vertices
        alt_min: 0.0
        alt_max: 200.0
        window: [0.0, 86400.0]   # seconds
    fence:                       # optional, defaults below
      tau_f: 2.0
      tau_r: 1.0
      d0: 1.0
      k: {CL1: 2.0, CL2: 1.5, CL3: 1.0}
      cross_margin: 0.5
    eligibility:                 # optional
      cl1_max_length: 2000.0
      cl1_max_duration: 600.0
      cl2_max_length: 10000.0
      cl2_max_duration: 1800.0
    limits:                      # optional
      max_speed: 15.0
      max_cross_speed: 1.0
      max_accel: 2.0
    corridor:                    # optional cross-section geometry
      lane_radius: 3.0
      stack_spacing: 7.0
      grid_h_spacing: 8.0
      grid_v_spacing: 8.0
      fit_margin: 1.0            # outer radius beyond the farthest lane
      v_cruise_max: 12.0         # corridor speed limit before wind penalty
    sim:                         # optional simulation defaults
      dt: 0.1
      seed: 7
      snapshot_every: 100        # steps between journaled world snapshots
    utm:                         # optional; in-process authority if absent
      mode: tcp                  # or inprocess
      host: 127.0.0.1
      port: 7700
      registry: utm_registry.json
      max_rounds: 4
      adjust: {time_shift: 300.0, altitude_shift: 10.0,
               radius_factor: 1.0, radius_min: 5.0}

Points elsewhere (mission requests) may be geodetic ({lat, lon, alt}) or
ENU ({east, north, up}); geodetic points convert through the configured
origin with a flat-earth equirectangular projection, which is accurate to
centimeters at the few-kilometer scale these corridors span.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import yaml

from .fencing import ComplianceLevel, EligibilityPolicy, FenceConfig
from .geometry import NoFlyZone, Point3
from .lanes import KinematicLimits
from .utm import AdjustmentPolicy

EARTH_RADIUS_M = 6371000.0

SCHEMA_VERSION = 1


class ScenarioError(ValueError):
    """Malformed or inconsistent scenario file."""

    def __init__(self, message: str, fields: Tuple[str, ...] = ()):
        super().__init__(message)
        self.fields = fields


@dataclass(frozen=True)
class GeodeticOrigin:
    lat: float
    lon: float
    alt: float = 0.0

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0 or not -180.0 <= self.lon <= 180.0:
            raise ScenarioError("origin lat/lon out of range", ("origin",))


def enu_from_geodetic(lat: float, lon: float, alt: float,
                      origin: GeodeticOrigin) -> Point3:
    """Equirectangular flat-earth projection around the origin."""
    lat0 = math.radians(origin.lat)
    east = EARTH_RADIUS_M * math.cos(lat0) * math.radians(lon - origin.lon)
    north = EARTH_RADIUS_M * math.radians(lat - origin.lat)
    return Point3(east, north, alt - origin.alt)


def parse_point(raw: Dict[str, float], origin: Optional[GeodeticOrigin]) -> Point3:
    """Accept {east, north, up} meters or {lat, lon, alt} degrees."""
    if not isinstance(raw, dict):
        raise ScenarioError(f"point must be a mapping, got {type(raw).__name__}")
    if {"east", "north"} <= set(raw):
        return Point3(float(raw["east"]), float(raw["north"]),
                      float(raw.get("up", 0.0)))
    if {"lat", "lon"} <= set(raw):
        if origin is None:
            raise ScenarioError("geodetic point given but no origin configured",
                                ("origin",))
        return enu_from_geodetic(float(raw["lat"]), float(raw["lon"]),
                                 float(raw.get("alt", origin.alt)), origin)
    raise ScenarioError(f"point needs east/north or lat/lon keys, got {sorted(raw)}")


@dataclass(frozen=True)
class CorridorGeometry:
    """Cross-section sizing shared by every generated option."""

    lane_radius: float = 3.0
    stack_spacing: float = 7.0
    grid_h_spacing: float = 8.0
    grid_v_spacing: float = 8.0
    fit_margin: float = 1.0
    v_cruise_max: float = 12.0

    def __post_init__(self):
        if min(self.lane_radius, self.stack_spacing, self.grid_h_spacing,
               self.grid_v_spacing, self.v_cruise_max) <= 0 or self.fit_margin < 0:
            raise ScenarioError("corridor geometry values out of range",
                                ("corridor",))


@dataclass(frozen=True)
class SimDefaults:
    dt: float = 0.1
    seed: int = 7
    snapshot_every: int = 100

    def __post_init__(self):
        if self.dt <= 0 or self.snapshot_every <= 0:
            raise ScenarioError("sim defaults out of range", ("sim",))


@dataclass(frozen=True)
class UtmEndpoint:
    mode: str = "inprocess"
    host: str = "127.0.0.1"
    port: int = 7700
    registry: Optional[str] = None
    max_rounds: int = 4
    adjust: AdjustmentPolicy = AdjustmentPolicy(
        time_shift=300.0, altitude_shift=10.0, radius_factor=1.0, radius_min=5.0
    )

    def __post_init__(self):
        if self.mode not in ("inprocess", "tcp"):
            raise ScenarioError(f"utm mode must be inprocess or tcp, got {self.mode}",
                                ("utm.mode",))
        if self.max_rounds < 1:
            raise ScenarioError("utm max_rounds must be >= 1", ("utm.max_rounds",))


@dataclass(frozen=True)
class ScenarioConfig:
    origin: Optional[GeodeticOrigin] = None
    wind: float = 0.0
    zones: Tuple[NoFlyZone, ...] = ()
    fence: FenceConfig = FenceConfig()
    eligibility: EligibilityPolicy = EligibilityPolicy()
    limits: KinematicLimits = KinematicLimits()
    corridor: CorridorGeometry = CorridorGeometry()
    sim: SimDefaults = SimDefaults()
    utm: UtmEndpoint = UtmEndpoint()

    def __post_init__(self):
        if self.wind < 0:
            raise ScenarioError("wind magnitude must be >= 0",
                                ("environment.wind",))


def _parse_fence(raw: Dict) -> FenceConfig:
    k_raw = raw.get("k", {})
    defaults = dict(FenceConfig().k)
    for name, value in k_raw.items():
        level = ComplianceLevel(name)
        defaults[level] = float(value)
    return FenceConfig(
        tau_f=float(raw.get("tau_f", 2.0)),
        tau_r=float(raw.get("tau_r", 1.0)),
        d0=float(raw.get("d0", 1.0)),
        k=tuple(sorted(defaults.items(), key=lambda kv: kv[0].value)),
        cross_margin=float(raw.get("cross_margin", 0.5)),
    )


def _parse_zone(raw: Dict, index: int) -> NoFlyZone:
    try:
        footprint = tuple((float(x), float(y)) for x, y in raw["footprint"])
        window = raw.get("window", (0.0, 86400.0))
        return NoFlyZone(
            footprint=footprint,
            alt_min=float(raw.get("alt_min", 0.0)),
            alt_max=float(raw["alt_max"]),
            t_start=float(window[0]),
            t_end=float(window[1]),
            name=str(raw.get("name", f"zone{index}")),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"zones[{index}]: {exc}", (f"zones[{index}]",)) from None


def scenario_from_dict(doc: Dict) -> ScenarioConfig:
    if not isinstance(doc, dict):
        raise ScenarioError("scenario file must contain a mapping")
    version = doc.get("version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ScenarioError(f"unsupported scenario schema version {version}",
                            ("version",))
    origin = None
    if "origin" in doc:
        o = doc["origin"]
        origin = GeodeticOrigin(float(o["lat"]), float(o["lon"]),
                                float(o.get("alt", 0.0)))
    env = doc.get("environment", {}) or {}
    zones = tuple(
        _parse_zone(z, i) for i, z in enumerate(doc.get("zones", []) or [])
    )
    fence = _parse_fence(doc.get("fence", {}) or {})
    el = doc.get("eligibility", {}) or {}
    eligibility = EligibilityPolicy(
        cl1_max_length=float(el.get("cl1_max_length", 2000.0)),
        cl1_max_duration=float(el.get("cl1_max_duration", 600.0)),
        cl2_max_length=float(el.get("cl2_max_length", 10000.0)),
        cl2_max_duration=float(el.get("cl2_max_duration", 1800.0)),
    )
    lim = doc.get("limits", {}) or {}
    limits = KinematicLimits(
        max_speed=float(lim.get("max_speed", 15.0)),
        max_cross_speed=float(lim.get("max_cross_speed", 1.0)),
        max_accel=float(lim.get("max_accel", 2.0)),
    )
    cor = doc.get("corridor", {}) or {}
    corridor = CorridorGeometry(
        lane_radius=float(cor.get("lane_radius", 3.0)),
        stack_spacing=float(cor.get("stack_spacing", 7.0)),
        grid_h_spacing=float(cor.get("grid_h_spacing", 8.0)),
        grid_v_spacing=float(cor.get("grid_v_spacing", 8.0)),
        fit_margin=float(cor.get("fit_margin", 1.0)),
        v_cruise_max=float(cor.get("v_cruise_max", 12.0)),
    )
    sim_raw = doc.get("sim", {}) or {}
    sim = SimDefaults(
        dt=float(sim_raw.get("dt", 0.1)),
        seed=int(sim_raw.get("seed", 7)),
        snapshot_every=int(sim_raw.get("snapshot_every", 100)),
    )
    utm_raw = doc.get("utm", {}) or {}
    adj_raw = utm_raw.get("adjust", {}) or {}
    adjust = AdjustmentPolicy(
        time_shift=float(adj_raw.get("time_shift", 300.0)),
        altitude_shift=float(adj_raw.get("altitude_shift", 10.0)),
        radius_factor=float(adj_raw.get("radius_factor", 1.0)),
        radius_min=float(adj_raw.get("radius_min", 5.0)),
    )
    utm = UtmEndpoint(
        mode=str(utm_raw.get("mode", "inprocess")),
        host=str(utm_raw.get("host", "127.0.0.1")),
        port=int(utm_raw.get("port", 7700)),
        registry=utm_raw.get("registry"),
        max_rounds=int(utm_raw.get("max_rounds", 4)),
        adjust=adjust,
    )
    return ScenarioConfig(
        origin=origin,
        wind=float(env.get("wind", 0.0)),
        zones=zones,
        fence=fence,
        eligibility=eligibility,
        limits=limits,
        corridor=corridor,
        sim=sim,
        utm=utm,
    )


def load_scenario(path: str) -> ScenarioConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file: {exc}") from None
    except yaml.YAMLError as exc:
        raise ScenarioError(f"scenario file is not valid YAML: {exc}") from None
    return scenario_from_dict(doc or {})
