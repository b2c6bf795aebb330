"""Site profiles and courses, loaded from TOML.

A site file has a ``[site]`` table (world parameters, roads, GPS shadows)
and a ``[course]`` table (start pose and labelled waypoints). Roads are
given either as explicit ENU ``points`` or as ``control`` points. Control
polygons are smoothed with a centripetal Catmull-Rom spline, or, when
``corner_radius`` is set, by rounding each corner with a circular arc.
Control entries may name a waypoint label instead of giving coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .geo import GeoPoint, enu_project
from .mission import Waypoint
from .world import GpsShadow, Polyline, Pose, Road, WorldConfig

BUNDLED_SITES = ("encinitas", "aldrich")


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


@dataclass(frozen=True)
class Course:
    name: str
    waypoints: tuple[Waypoint, ...]
    start: Pose

    def waypoints_enu(self, origin: GeoPoint) -> np.ndarray:
        return np.array([enu_project(origin, w.point) for w in self.waypoints])


@dataclass(frozen=True)
class Site:
    name: str
    world: WorldConfig
    course: Course

    @property
    def route(self) -> Polyline | None:
        """The first road, used as the road-following route through the course."""
        if not self.world.roads:
            return None
        return Polyline.from_points(self.world.roads[0].points)

    def noiseless(self) -> Site:
        return replace(self, world=self.world.noiseless())


def catmull_rom(control: np.ndarray, spacing: float = 1.0, alpha: float = 0.5) -> np.ndarray:
    """Centripetal Catmull-Rom curve through every control point, resampled every ~``spacing`` m."""
    p = np.asarray(control, dtype=float)
    if len(p) < 2:
        raise ConfigError("spline needs at least two control points")
    ext = np.vstack([2 * p[0] - p[1], p, 2 * p[-1] - p[-2]])
    out = [p[0]]
    for k in range(1, len(ext) - 2):
        p0, p1, p2, p3 = ext[k - 1], ext[k], ext[k + 1], ext[k + 2]
        t0 = 0.0
        t1 = t0 + np.linalg.norm(p1 - p0) ** alpha
        t2 = t1 + np.linalg.norm(p2 - p1) ** alpha
        t3 = t2 + np.linalg.norm(p3 - p2) ** alpha
        n = max(2, int(math.ceil(np.linalg.norm(p2 - p1) / spacing * 1.3)))
        for t in np.linspace(t1, t2, n + 1)[1:]:
            a1 = (t1 - t) / (t1 - t0) * p0 + (t - t0) / (t1 - t0) * p1
            a2 = (t2 - t) / (t2 - t1) * p1 + (t - t1) / (t2 - t1) * p2
            a3 = (t3 - t) / (t3 - t2) * p2 + (t - t2) / (t3 - t2) * p3
            b1 = (t2 - t) / (t2 - t0) * a1 + (t - t0) / (t2 - t0) * a2
            b2 = (t3 - t) / (t3 - t1) * a2 + (t - t1) / (t3 - t1) * a3
            out.append((t2 - t) / (t2 - t1) * b1 + (t - t1) / (t2 - t1) * b2)
    return np.array(out)


def fillet(control: np.ndarray, radius: float, spacing: float = 1.0) -> np.ndarray:
    """Polyline through ``control`` with every interior corner rounded by a circular arc.

    The arcs are tangent to both adjoining legs, so the path passes within
    ``radius * (1/cos(turn/2) - 1)`` of each corner point.
    """
    p = np.asarray(control, dtype=float)
    if len(p) < 2:
        raise ConfigError("road needs at least two control points")
    legs = np.diff(p, axis=0)
    lengths = np.hypot(legs[:, 0], legs[:, 1])
    if np.any(lengths <= 0):
        raise ConfigError("road control points must be distinct")
    dirs = legs / lengths[:, None]
    pieces = [p[0]]
    for k in range(1, len(p) - 1):
        a, b = dirs[k - 1], dirs[k]
        cross = a[0] * b[1] - a[1] * b[0]
        turn = math.atan2(cross, float(a @ b))
        t = radius * math.tan(abs(turn) / 2)
        if t > 0.5 * min(lengths[k - 1], lengths[k]) + 1e-9:
            raise ConfigError(f"corner radius {radius} does not fit at control point {k}")
        t0, t1 = p[k] - a * t, p[k] + b * t
        if abs(turn) < 1e-9:
            pieces.append(p[k])
            continue
        side = 1.0 if cross > 0 else -1.0  # left turn in (x, y) = (east, north)
        normal = side * np.array([-a[1], a[0]])
        centre = t0 + normal * radius
        start = math.atan2(*(t0 - centre)[::-1])
        n = max(2, int(math.ceil(abs(turn) * radius / spacing)))
        for ang in np.linspace(start, start + turn, n + 1):
            pieces.append(centre + radius * np.array([math.cos(ang), math.sin(ang)]))
    pieces.append(p[-1])
    pts = [pieces[0]]
    for q in pieces[1:]:
        prev = pts[-1]
        gap = float(np.hypot(*(q - prev)))
        if gap < 1e-9:
            continue
        m = int(math.ceil(gap / spacing))
        pts.extend(prev + (q - prev) * f for f in np.linspace(0, 1, m + 1)[1:])
    return np.array(pts)


def _float(table: dict[str, Any], key: str, default: float) -> float:
    value = table.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key} must be a number, got {value!r}")
    return float(value)


def parse_course(table: dict[str, Any], origin: GeoPoint) -> Course:
    try:
        raw = table["waypoints"]
    except KeyError:
        raise ConfigError("course has no waypoints") from None
    wps = []
    for k, w in enumerate(raw):
        label = str(w.get("label", f"WP{k + 1}"))
        try:
            wps.append(Waypoint(label, GeoPoint(float(w["lat"]), float(w["lon"]))))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad waypoint {label}: {exc}") from None
    if len(wps) < 2:
        raise ConfigError("course needs at least two waypoints")
    start = table.get("start")
    if start is None:
        e, n = enu_project(origin, wps[0].point)
        e2, n2 = enu_project(origin, wps[1].point)
        start_pose = Pose(e, n, math.degrees(math.atan2(e2 - e, n2 - n)))
    else:
        start_pose = Pose(_float(start, "east", 0.0), _float(start, "north", 0.0), _float(start, "heading", 0.0))
    return Course(str(table.get("name", "course")), tuple(wps), start_pose)


def _road_points(road: dict[str, Any], labels: dict[str, tuple[float, float]]) -> np.ndarray:
    if "points" in road:
        return np.asarray(road["points"], dtype=float)
    if "control" not in road:
        raise ConfigError("road needs 'points' or 'control'")
    ctrl = []
    for c in road["control"]:
        if isinstance(c, str):
            if c not in labels:
                raise ConfigError(f"road control references unknown waypoint {c!r}")
            ctrl.append(labels[c])
        else:
            ctrl.append((float(c[0]), float(c[1])))
    spacing = _float(road, "spacing", 1.0)
    if "corner_radius" in road:
        return fillet(np.array(ctrl), _float(road, "corner_radius", 20.0), spacing)
    return catmull_rom(np.array(ctrl), spacing=spacing)


def parse_site(doc: dict[str, Any]) -> Site:
    try:
        s = doc["site"]
        c = doc["course"]
    except KeyError as exc:
        raise ConfigError(f"missing [{exc.args[0]}] table") from None
    try:
        origin = GeoPoint(float(s["origin"][0]), float(s["origin"][1]))
    except (KeyError, IndexError, TypeError, ValueError):
        raise ConfigError("site.origin must be [lat, lon]") from None
    course = parse_course(c, origin)
    labels = {w.label: enu_project(origin, w.point) for w in course.waypoints}
    labels["start"] = course.start.xy
    roads = tuple(
        Road(tuple(map(tuple, _road_points(r, labels))), _float(r, "width", 2.0)) for r in s.get("roads", [])
    )
    shadows = []
    for z in s.get("gps_shadows", []):
        if "at" in z:
            if z["at"] not in labels:
                raise ConfigError(f"shadow references unknown waypoint {z['at']!r}")
            e, n = labels[z["at"]]
        else:
            e, n = _float(z, "east", 0.0), _float(z, "north", 0.0)
        shadows.append(GpsShadow(e, n, _float(z, "radius", 30.0), _float(z, "fix_interval", 1.0)))
    try:
        world = WorldConfig(
            origin=origin,
            roads=roads,
            gps_sigma=_float(s, "gps_sigma", 3.0),
            gps_bias_walk_sigma=_float(s, "gps_bias_walk_sigma", 0.0),
            gps_period=_float(s, "gps_period", 1.0),
            gps_shadows=tuple(shadows),
            compass_sigma=_float(s, "compass_sigma", 3.0),
            declination=_float(s, "declination", 11.5),
            energy_road=_float(s, "energy_road", 1.0),
            energy_offroad=_float(s, "energy_offroad", 2.5),
            robot_speed=_float(s, "robot_speed", 1.4),
            turn_rate=_float(s, "turn_rate", 45.0),
            dt=_float(s, "dt", 0.1),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return Site(str(s.get("name", "site")), world, course)


def bundled_site_text(name: str) -> str:
    if name not in BUNDLED_SITES:
        raise ConfigError(f"unknown site profile {name!r}; bundled: {', '.join(BUNDLED_SITES)}")
    return resources.files("serotonav").joinpath("data").joinpath(f"{name}.toml").read_text(encoding="utf-8")


def load_toml(path: str | Path) -> dict[str, Any]:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def merge(base: dict[str, Any], override: dict[str, Any]) -> dict[str, Any]:
    """Recursive table merge; arrays and scalars in ``override`` win."""
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge(out[k], v)
        else:
            out[k] = v
    return out


def load_site(name: str) -> Site:
    return parse_site(tomllib.loads(bundled_site_text(name)))


def resolve_site_doc(doc: dict[str, Any]) -> dict[str, Any]:
    """Expand ``site.profile = "<bundled>"`` into the bundled tables, then apply overrides."""
    site = doc.get("site", {})
    profile = site.get("profile")
    if profile is None:
        return doc
    base = tomllib.loads(bundled_site_text(profile))
    over = {k: v for k, v in doc.items() if k in ("site", "course")}
    over["site"] = {k: v for k, v in site.items() if k != "profile"}
    merged = merge(base, over)
    return {**doc, **merged}
