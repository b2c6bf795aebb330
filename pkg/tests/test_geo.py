import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from serotonav.geo import (
    EARTH_RADIUS_M,
    DegenerateBearingError,
    GeoError,
    GeoPoint,
    ProjectionRangeError,
    enu_project,
    enu_unproject,
    haversine_distance,
    initial_bearing,
    normalize_compass,
    steering_command,
    true_heading,
    wrap_signed,
)

lats = st.floats(-89.0, 89.0)
lons = st.floats(-180.0, 179.999)
angles = st.floats(-1e4, 1e4, allow_nan=False)


def test_geopoint_validation():
    with pytest.raises(GeoError):
        GeoPoint(91.0, 0.0)
    with pytest.raises(GeoError):
        GeoPoint(0.0, 180.0)
    with pytest.raises(GeoError):
        GeoPoint(float("nan"), 0.0)
    with pytest.raises(GeoError):
        GeoPoint(0.0, float("inf"))
    GeoPoint(-90.0, -180.0)


def test_haversine_examples():
    o = GeoPoint(0.0, 0.0)
    assert haversine_distance(o, o) == 0.0
    assert haversine_distance(o, GeoPoint(1.0, 0.0)) == pytest.approx(111_194.9, abs=0.1)
    far = haversine_distance(o, GeoPoint(0.0, 179.999999))
    assert far == pytest.approx(math.pi * EARTH_RADIUS_M, rel=1e-6)
    assert math.pi * EARTH_RADIUS_M == pytest.approx(20_015_086, abs=1)


@given(lats, lons, lats, lons)
def test_haversine_symmetric_nonnegative(a1, o1, a2, o2):
    a, b = GeoPoint(a1, o1), GeoPoint(a2, o2)
    d = haversine_distance(a, b)
    assert d == haversine_distance(b, a)
    assert d >= 0.0


def test_bearing_examples():
    o = GeoPoint(0.0, 0.0)
    assert initial_bearing(o, GeoPoint(1.0, 0.0)) == pytest.approx(0.0, abs=1e-12)
    assert initial_bearing(o, GeoPoint(0.0, 0.001)) == pytest.approx(90.0, abs=1e-9)
    assert initial_bearing(GeoPoint(50.0, 0.0), GeoPoint(50.0, 1.0)) == pytest.approx(89.617, abs=1e-3)
    with pytest.raises(DegenerateBearingError):
        initial_bearing(o, o)


@given(st.floats(-1.0, 1.0), st.floats(0.001, 5.0))
def test_bearing_reciprocal_on_equator_and_meridian(start, delta):
    a, b = GeoPoint(0.0, start), GeoPoint(0.0, start + delta)
    assert abs(wrap_signed(initial_bearing(b, a) - initial_bearing(a, b) - 180.0)) < 1e-6
    a, b = GeoPoint(start, 10.0), GeoPoint(start + delta, 10.0)
    assert abs(wrap_signed(initial_bearing(b, a) - initial_bearing(a, b) - 180.0)) < 1e-6


@given(lats, lons, lats, lons)
def test_bearing_range(a1, o1, a2, o2):
    a, b = GeoPoint(a1, o1), GeoPoint(a2, o2)
    if haversine_distance(a, b) > 0:
        assert 0.0 <= initial_bearing(a, b) < 360.0


def test_wrap_signed_examples():
    assert wrap_signed(370.0) == 10.0
    assert wrap_signed(-190.0) == 170.0
    assert wrap_signed(180.0) == 180.0
    assert wrap_signed(-180.0) == 180.0


@given(angles)
def test_wrap_signed_idempotent_and_congruent(x):
    w = wrap_signed(x)
    assert -180.0 < w <= 180.0
    assert wrap_signed(w) == w
    assert math.isclose(math.remainder(w - x, 360.0), 0.0, abs_tol=1e-9)


@given(angles)
def test_normalize_compass_idempotent(x):
    n = normalize_compass(x)
    assert 0.0 <= n < 360.0
    assert normalize_compass(n) == n


def test_steering_examples():
    assert steering_command(10.0, 350.0) == ("right", pytest.approx(20.0))
    assert steering_command(350.0, 10.0) == ("left", pytest.approx(20.0))
    assert steering_command(90.0, 89.0).direction == "straight"


@given(st.floats(0.0, 359.999))
def test_steering_same_heading_is_straight(h):
    cmd = steering_command(h, h)
    assert cmd.direction == "straight" and cmd.magnitude == 0.0


def test_true_heading_examples():
    assert true_heading(0.0, 11.5) == 11.5
    assert true_heading(355.0, 11.5) == pytest.approx(6.5)
    assert true_heading(20.0, 0.0) == 20.0


def test_enu_examples():
    origin = GeoPoint(33.646, -117.842)
    assert enu_project(origin, origin) == (0.0, 0.0)
    p = enu_unproject(origin, 0.0, 100.0)
    assert p.lat - origin.lat == pytest.approx(0.0008993, abs=1e-7)
    with pytest.raises(ProjectionRangeError):
        enu_project(origin, GeoPoint(origin.lat + 0.2, origin.lon))


def test_enu_round_trip_random_points():
    origin = GeoPoint(33.646, -117.842)
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(1000):
        r = 5000.0 * math.sqrt(rng.random())
        a = rng.uniform(0, 2 * math.pi)
        e, n = r * math.sin(a), r * math.cos(a)
        p = enu_unproject(origin, e, n)
        e2, n2 = enu_project(origin, p)
        worst = max(worst, math.hypot(e2 - e, n2 - n))
    assert worst < 0.01


@settings(max_examples=50)
@given(st.floats(-60, 60), st.floats(-179, 179), st.floats(-4000, 4000), st.floats(-4000, 4000))
def test_enu_round_trip_property(lat, lon, e, n):
    origin = GeoPoint(lat, lon)
    e2, n2 = enu_project(origin, enu_unproject(origin, e, n))
    assert math.hypot(e2 - e, n2 - n) < 0.01
