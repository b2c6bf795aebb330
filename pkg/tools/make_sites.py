"""Regenerate the bundled site files under src/serotonav/data/.

Courses are representative layouts (10 waypoints, 50-60 m apart), laid out
in local ENU meters and stored as lat/lon.
"""

from __future__ import annotations

import math
from pathlib import Path

from serotonav.geo import GeoPoint, enu_unproject

DATA = Path(__file__).resolve().parents[1] / "src" / "serotonav" / "data"


def chain(legs):
    pts = [(0.0, 0.0)]
    for heading, length in legs:
        e, n = pts[-1]
        h = math.radians(heading)
        pts.append((e + length * math.sin(h), n + length * math.cos(h)))
    return pts


def waypoint_lines(origin, pts):
    out = []
    for k, (e, n) in enumerate(pts):
        p = enu_unproject(origin, e, n)
        out.append(f'[[course.waypoints]]\nlabel = "WP{k + 1}"\nlat = {p.lat:.7f}\nlon = {p.lon:.7f}\n')
    return "\n".join(out)


def bulges(pts, offsets):
    """Control points: waypoints interleaved with sideways-offset leg midpoints."""
    ctrl = []
    for k, ((e1, n1), (e2, n2)) in enumerate(zip(pts, pts[1:])):
        ctrl.append(f'"WP{k + 1}"')
        de, dn = e2 - e1, n2 - n1
        L = math.hypot(de, dn)
        off = offsets[k]
        # right-hand normal of the leg direction
        me, mn = (e1 + e2) / 2 + off * dn / L, (n1 + n2) / 2 - off * de / L
        ctrl.append(f"[{me:.2f}, {mn:.2f}]")
    ctrl.append(f'"WP{len(pts)}"')
    return ctrl


# Sharp (120-130 degree) turns keep the run from one arrival circle to the next
# under ~20 s, so a noiseless robot finishes every leg well before patience
# starts to run out even at q = 0.5.
ENCINITAS_LEGS = [(0, 55), (125, 52), (5, 58), (130, 54), (0, 56), (120, 53), (355, 57), (125, 55), (0, 52)]
ENCINITAS_START = (24.57, 17.21, 235.0)  # 30 m out, approaching WP1 at 125 degrees to the first leg
ALDRICH_LEGS = [(20, 54), (65, 57), (25, 52), (340, 58), (25, 55), (70, 53), (30, 57), (345, 52), (25, 56)]
ALDRICH_BULGE = [0, 8, -8, 8, -8, 8, -8, 8, 0]


def encinitas() -> str:
    origin = GeoPoint(33.0385, -117.2628)
    pts = chain(ENCINITAS_LEGS)
    return f'''# Flat community park: light GPS noise, a few tree-covered spots where fixes thin out.
[site]
name = "encinitas"
origin = [{origin.lat}, {origin.lon}]
gps_sigma = 3.0
gps_bias_walk_sigma = 0.0
gps_period = 1.0
compass_sigma = 3.0
declination = 11.5
robot_speed = 1.4
dt = 0.1

[[site.gps_shadows]]
at = "WP4"
radius = 30.0
fix_interval = 15.0

[[site.gps_shadows]]
at = "WP6"
radius = 30.0
fix_interval = 15.0

[[site.gps_shadows]]
at = "WP8"
radius = 30.0
fix_interval = 15.0

[course]
name = "encinitas-10"
start = {{ east = {ENCINITAS_START[0]}, north = {ENCINITAS_START[1]}, heading = {ENCINITAS_START[2]} }}

{waypoint_lines(origin, pts)}'''


def aldrich() -> str:
    origin = GeoPoint(33.6460, -117.8420)
    pts = chain(ALDRICH_LEGS)
    h = math.radians(ALDRICH_LEGS[0][0])
    se, sn = -30 * math.sin(h), -30 * math.cos(h)
    ctrl = [f"[{se:.2f}, {sn:.2f}]"] + bulges(pts, ALDRICH_BULGE)
    return f'''# Sunken park ringed by tall buildings: noisy GPS with a wandering bias and
# deep shadows near WP2 and WP3. A curving sidewalk links the waypoints.
[site]
name = "aldrich"
origin = [{origin.lat}, {origin.lon}]
gps_sigma = 10.0
gps_bias_walk_sigma = 0.5
gps_period = 1.0
compass_sigma = 3.0
declination = 11.5
robot_speed = 1.4
dt = 0.1

[[site.roads]]
width = 2.0
spacing = 1.0
corner_radius = 15.0
control = [{", ".join(ctrl)}]

[[site.gps_shadows]]
at = "WP2"
radius = 35.0
fix_interval = 25.0

[[site.gps_shadows]]
at = "WP3"
radius = 35.0
fix_interval = 25.0

[course]
name = "aldrich-10"
start = {{ east = {se:.2f}, north = {sn:.2f}, heading = {ALDRICH_LEGS[0][0]:.1f} }}

{waypoint_lines(origin, pts)}'''


if __name__ == "__main__":
    DATA.mkdir(parents=True, exist_ok=True)
    (DATA / "encinitas.toml").write_text(encinitas())
    (DATA / "aldrich.toml").write_text(aldrich())
