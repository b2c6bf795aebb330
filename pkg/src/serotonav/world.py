"""Simulated park: unicycle kinematics, GPS and compass sensor models,
road geometry and terrain-dependent energy accounting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .geo import GeoPoint, Steering, enu_unproject, normalize_compass


@dataclass(frozen=True)
class Road:
    points: tuple[tuple[float, float], ...]
    width: float = 2.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "points", tuple((float(e), float(n)) for e, n in self.points))
        if len(self.points) < 2:
            raise ValueError("a road needs at least two points")
        if self.width <= 0.0:
            raise ValueError("road width must be positive")


@dataclass(frozen=True)
class GpsShadow:
    """Circular area where fixes arrive only every ``fix_interval`` seconds on average."""

    east: float
    north: float
    radius: float
    fix_interval: float

    def contains(self, east: float, north: float) -> bool:
        return math.hypot(east - self.east, north - self.north) <= self.radius


@dataclass(frozen=True)
class WorldConfig:
    origin: GeoPoint
    roads: tuple[Road, ...] = ()
    gps_sigma: float = 3.0
    gps_bias_walk_sigma: float = 0.0
    gps_period: float = 1.0
    gps_shadows: tuple[GpsShadow, ...] = ()
    compass_sigma: float = 3.0
    declination: float = 11.5
    energy_road: float = 1.0
    energy_offroad: float = 2.5
    robot_speed: float = 1.4
    turn_rate: float = 45.0
    dt: float = 0.1

    def __post_init__(self) -> None:
        object.__setattr__(self, "roads", tuple(self.roads))
        object.__setattr__(self, "gps_shadows", tuple(self.gps_shadows))
        for name in ("gps_sigma", "gps_bias_walk_sigma", "compass_sigma", "gps_period"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative")
        if self.energy_offroad < self.energy_road:
            raise ValueError("off-road energy cost must not be below the road cost")
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "_geometry", RoadGeometry(self.roads))

    @property
    def geometry(self) -> RoadGeometry:
        return self._geometry  # type: ignore[attr-defined]

    def noiseless(self) -> WorldConfig:
        """Same site with perfect sensing."""
        return replace(self, gps_sigma=0.0, gps_bias_walk_sigma=0.0, gps_shadows=(), compass_sigma=0.0)


@dataclass(frozen=True)
class Pose:
    east: float
    north: float
    heading: float

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in (self.east, self.north, self.heading)):
            raise ValueError("pose must be finite")
        object.__setattr__(self, "heading", normalize_compass(self.heading))

    @property
    def xy(self) -> tuple[float, float]:
        return self.east, self.north


@dataclass(frozen=True)
class SensorFrame:
    gps_fix: GeoPoint
    fresh_fix: bool
    compass_magnetic: float
    on_road: bool


class RoadGeometry:
    """Flattened segment arrays for vectorised point-to-road queries."""

    def __init__(self, roads: tuple[Road, ...]) -> None:
        a, b, half = [], [], []
        for road in roads:
            pts = np.asarray(road.points, dtype=float)
            a.append(pts[:-1])
            b.append(pts[1:])
            half.append(np.full(len(pts) - 1, road.width / 2.0))
        if a:
            self.a = np.concatenate(a)
            self.b = np.concatenate(b)
            self.half_width = np.concatenate(half)
        else:
            self.a = self.b = np.zeros((0, 2))
            self.half_width = np.zeros(0)
        self.d = self.b - self.a
        self.len2 = np.einsum("ij,ij->i", self.d, self.d)

    def __len__(self) -> int:
        return len(self.a)

    def _distances(self, pts: np.ndarray, seg: np.ndarray | slice = slice(None)) -> np.ndarray:
        """(P, M) distances from P points to the selected segments."""
        a, d, len2 = self.a[seg], self.d[seg], self.len2[seg]
        rel = pts[:, None, :] - a[None, :, :]
        with np.errstate(invalid="ignore", divide="ignore"):
            t = np.einsum("pmk,mk->pm", rel, d) / len2
        t = np.clip(np.nan_to_num(t, nan=0.0), 0.0, 1.0)
        diff = rel - t[..., None] * d[None, :, :]
        return np.sqrt(np.einsum("pmk,pmk->pm", diff, diff))

    def distance(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if len(self) == 0:
            return np.full(len(pts), np.inf)
        return self._distances(pts).min(axis=1)

    def on_road(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if len(self) == 0:
            return np.zeros(len(pts), dtype=bool)
        # A point within w/2 of a segment puts the cloud centre within radius + w/2 of it.
        centre = pts.mean(axis=0)
        radius = float(np.sqrt(((pts - centre) ** 2).sum(axis=1).max()))
        near = self._distances(centre[None, :])[0] <= radius + self.half_width + 1e-9
        if not near.any():
            return np.zeros(len(pts), dtype=bool)
        idx = np.flatnonzero(near)
        return (self._distances(pts, idx) <= self.half_width[idx][None, :]).any(axis=1)


def distance_to_road(pose: Pose, config: WorldConfig) -> float:
    return float(config.geometry.distance(np.array([pose.xy]))[0])


def on_road(pose: Pose, config: WorldConfig) -> bool:
    return bool(config.geometry.on_road(np.array([pose.xy]))[0])


def kinematics_step(pose: Pose, steering: Steering, config: WorldConfig, speed: float | None = None) -> Pose:
    """Unicycle update: turn toward the commanded side (rate-limited), then drive."""
    dt = config.dt
    turn = min(config.turn_rate * dt, steering.magnitude)
    if steering.direction == "right":
        heading = pose.heading + turn
    elif steering.direction == "left":
        heading = pose.heading - turn
    else:
        heading = pose.heading
    return _drive(pose, heading, config.robot_speed if speed is None else speed, dt)


def rate_step(pose: Pose, heading_rate: float, speed: float, dt: float) -> Pose:
    """Apply a fixed heading rate (deg/s, positive = clockwise) for ``dt``."""
    return _drive(pose, pose.heading + heading_rate * dt, speed, dt)


def _drive(pose: Pose, heading: float, speed: float, dt: float) -> Pose:
    h = math.radians(heading)
    return Pose(pose.east + speed * math.sin(h) * dt, pose.north + speed * math.cos(h) * dt, heading)


def accrue_energy(before: Pose, after: Pose, config: WorldConfig) -> float:
    """Path energy of one straight step, priced by the terrain at its midpoint."""
    length = math.hypot(after.east - before.east, after.north - before.north)
    if length == 0.0:
        return 0.0
    mid = np.array([[(before.east + after.east) / 2.0, (before.north + after.north) / 2.0]])
    rate = config.energy_road if config.geometry.on_road(mid)[0] else config.energy_offroad
    return length * rate


@dataclass
class GpsSensor:
    """Stateful GPS: white noise per fix, a slow bias random walk, and fix loss in shadows.

    Every call draws the same five variates from ``rng`` (two bias steps, two
    white-noise values, one availability uniform), whether or not a fix is
    due, so the stream position only depends on the tick index.
    """

    config: WorldConfig
    rng: np.random.Generator
    bias: np.ndarray = field(default_factory=lambda: np.zeros(2))
    last_fix: GeoPoint | None = None
    time: float = 0.0
    next_fix_time: float = 0.0

    def _fix_interval(self, pose: Pose) -> float:
        interval = self.config.gps_period
        for zone in self.config.gps_shadows:
            if zone.contains(pose.east, pose.north):
                interval = max(interval, zone.fix_interval)
        return interval

    def sample(self, pose: Pose) -> tuple[GeoPoint, bool]:
        cfg = self.config
        walk = self.rng.standard_normal(2)
        white = self.rng.standard_normal(2)
        u = float(self.rng.random())
        self.bias = self.bias + cfg.gps_bias_walk_sigma * math.sqrt(cfg.dt) * walk

        due = self.last_fix is None or self.time + 1e-9 >= self.next_fix_time
        fresh = False
        if due:
            interval = self._fix_interval(pose)
            period = cfg.gps_period
            # Inside a shadow each scheduled fix only survives with probability period/interval.
            keep = interval <= period or period <= 0.0 or u < period / interval
            if keep or self.last_fix is None:
                east = pose.east + self.bias[0] + cfg.gps_sigma * white[0]
                north = pose.north + self.bias[1] + cfg.gps_sigma * white[1]
                self.last_fix = enu_unproject(cfg.origin, east, north)
                fresh = True
            self.next_fix_time = round(self.next_fix_time + period, 9) if period > 0.0 else self.time
        self.time = round(self.time + cfg.dt, 9)
        assert self.last_fix is not None
        return self.last_fix, fresh


def sample_gps(pose: Pose, config: WorldConfig, rng: np.random.Generator) -> GeoPoint:
    """One fresh fix with white noise only (no bias state, no shadowing)."""
    e, n = rng.standard_normal(2)
    return enu_unproject(config.origin, pose.east + config.gps_sigma * e, pose.north + config.gps_sigma * n)


def sample_compass(pose: Pose, config: WorldConfig, rng: np.random.Generator) -> float:
    """Magnetic heading reading, the exact inverse of :func:`geo.true_heading` at zero noise."""
    noise = config.compass_sigma * float(rng.standard_normal())
    return normalize_compass(pose.heading - config.declination + noise)


@dataclass(frozen=True)
class Polyline:
    """Arc-length parameterised polyline (a route along the road network)."""

    points: np.ndarray

    @classmethod
    def from_points(cls, points) -> Polyline:
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise ValueError("polyline needs an (N>=2, 2) point array")
        return cls(pts)

    @cached_property
    def cumulative(self) -> np.ndarray:
        seg = np.hypot(*np.diff(self.points, axis=0).T)
        return np.concatenate([[0.0], np.cumsum(seg)])

    @property
    def length(self) -> float:
        return float(self.cumulative[-1])

    def project(self, east: float, north: float, near: float | None = None, window: float = 30.0) -> tuple[float, float]:
        """Arc length and distance of the closest point on the polyline.

        With ``near`` set, only segments overlapping ``near +- window`` are
        considered, which keeps progress monotone on routes that double back.
        """
        a, b = self.points[:-1], self.points[1:]
        cum = self.cumulative
        if near is not None:
            mask = (cum[1:] >= near - window) & (cum[:-1] <= near + window)
            if not mask.any():
                mask[:] = True
        else:
            mask = np.ones(len(a), dtype=bool)
        d = b - a
        len2 = np.einsum("ij,ij->i", d, d)
        p = np.array([east, north])
        with np.errstate(invalid="ignore", divide="ignore"):
            t = np.clip(np.nan_to_num(((p - a) * d).sum(axis=1) / len2), 0.0, 1.0)
        closest = a + t[:, None] * d
        dist = np.hypot(*(closest - p).T)
        dist = np.where(mask, dist, np.inf)
        k = int(np.argmin(dist))
        return float(cum[k] + t[k] * math.sqrt(len2[k])), float(dist[k])

    def point_at(self, s: float) -> tuple[float, float]:
        cum = self.cumulative
        s = min(max(s, 0.0), cum[-1])
        k = int(np.searchsorted(cum, s, side="right") - 1)
        k = min(k, len(self.points) - 2)
        seg = cum[k + 1] - cum[k]
        t = 0.0 if seg == 0.0 else (s - cum[k]) / seg
        e, n = self.points[k] + t * (self.points[k + 1] - self.points[k])
        return float(e), float(n)

    def heading_at(self, s: float) -> float:
        cum = self.cumulative
        s = min(max(s, 0.0), cum[-1])
        k = min(int(np.searchsorted(cum, s, side="right") - 1), len(self.points) - 2)
        de, dn = self.points[k + 1] - self.points[k]
        return normalize_compass(math.degrees(math.atan2(de, dn)))
