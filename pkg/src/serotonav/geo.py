"""Spherical-Earth geodesy helpers: distances, bearings, angle wrapping,
declination correction, steering decisions and a local ENU projection."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, NamedTuple

EARTH_RADIUS_M = 6_371_000.0
DEFAULT_DEADBAND_DEG = 2.0
# Equirectangular projection is only trusted over a small area.
MAX_PROJECTION_RANGE_M = 10_000.0


class GeoError(ValueError):
    """Invalid geodetic input."""


class DegenerateBearingError(GeoError):
    """Bearing requested between two identical points."""


class ProjectionRangeError(GeoError):
    """Point too far from the projection origin."""


def _check_finite(*values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise GeoError(f"non-finite value: {v!r}")


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self) -> None:
        _check_finite(self.lat, self.lon)
        if not -90.0 <= self.lat <= 90.0:
            raise GeoError(f"latitude out of range: {self.lat}")
        if not -180.0 <= self.lon < 180.0:
            raise GeoError(f"longitude out of range: {self.lon}")


def normalize_compass(deg: float) -> float:
    """Wrap an angle into [0, 360)."""
    _check_finite(deg)
    out = math.fmod(deg, 360.0)
    if out < 0.0:
        out += 360.0
    # fmod of a tiny negative number can round to exactly 360.0
    return 0.0 if out >= 360.0 else out


def wrap_signed(deg: float) -> float:
    """Wrap an angle into (-180, 180]."""
    _check_finite(deg)
    out = math.fmod(deg, 360.0)
    if out > 180.0:
        out -= 360.0
    elif out <= -180.0:
        out += 360.0
    return out


def haversine_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters."""
    phi1, phi2 = math.radians(a.lat), math.radians(b.lat)
    dphi = phi2 - phi1
    dlmb = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2.0) ** 2
    h = min(1.0, max(0.0, h))
    return 2.0 * EARTH_RADIUS_M * math.asin(math.sqrt(h))


def initial_bearing(origin: GeoPoint, target: GeoPoint) -> float:
    """Great-circle initial bearing from ``origin`` to ``target``.

    Returns degrees in [0, 360) clockwise from true north. Identical points
    raise :class:`DegenerateBearingError`; callers treat that as arrival.
    """
    if origin == target:
        raise DegenerateBearingError("bearing between identical points")
    phi1, phi2 = math.radians(origin.lat), math.radians(target.lat)
    dlmb = math.radians(target.lon - origin.lon)
    x = math.sin(dlmb) * math.cos(phi2)
    y = math.cos(phi1) * math.sin(phi2) - math.sin(phi1) * math.cos(phi2) * math.cos(dlmb)
    return normalize_compass(math.degrees(math.atan2(x, y)))


class Steering(NamedTuple):
    direction: Literal["left", "right", "straight"]
    magnitude: float


def steering_command(bearing: float, heading: float, deadband: float = DEFAULT_DEADBAND_DEG) -> Steering:
    """Turn the short way round to bring ``heading`` onto ``bearing``."""
    delta = wrap_signed(bearing - heading)
    if delta > deadband:
        return Steering("right", abs(delta))
    if delta < -deadband:
        return Steering("left", abs(delta))
    return Steering("straight", abs(delta))


def true_heading(magnetic: float, declination: float) -> float:
    """Magnetic compass reading to true heading; declination is east-positive."""
    return normalize_compass(magnetic + declination)


def enu_project(origin: GeoPoint, p: GeoPoint) -> tuple[float, float]:
    """Local (east, north) meters of ``p`` relative to ``origin``."""
    dlat = math.radians(p.lat - origin.lat)
    dlon = math.radians(wrap_signed(p.lon - origin.lon))
    north = EARTH_RADIUS_M * dlat
    east = EARTH_RADIUS_M * math.cos(math.radians(origin.lat)) * dlon
    if math.hypot(east, north) >= MAX_PROJECTION_RANGE_M:
        raise ProjectionRangeError(f"point {p} is outside the local projection range")
    return east, north


def enu_unproject(origin: GeoPoint, east: float, north: float) -> GeoPoint:
    """Inverse of :func:`enu_project`."""
    _check_finite(east, north)
    if math.hypot(east, north) >= MAX_PROJECTION_RANGE_M:
        raise ProjectionRangeError(f"offset ({east}, {north}) is outside the local projection range")
    lat = origin.lat + math.degrees(north / EARTH_RADIUS_M)
    lon = origin.lon + math.degrees(east / (EARTH_RADIUS_M * math.cos(math.radians(origin.lat))))
    if lon >= 180.0:
        lon -= 360.0
    elif lon < -180.0:
        lon += 360.0
    return GeoPoint(lat, lon)
