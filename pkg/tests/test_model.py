import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bikerec.model import (GeoPoint, MobilityProfile, Network, RentRequest, Station, bike_time, distance,
                           haversine, offset_point, walk_time)

MADRID = GeoPoint(40.4168, -3.7038)

lat = st.floats(40.3, 40.5)
lon = st.floats(-3.8, -3.6)
points = st.builds(GeoPoint, lat, lon)


def test_distance_identity_and_symmetry():
    b = GeoPoint(40.43, -3.69)
    assert distance(MADRID, MADRID) == 0.0
    assert distance(MADRID, b) == distance(b, MADRID)


def test_latitude_step():
    # pure meridian arc: R * dphi, frozen from an independent evaluation
    b = GeoPoint(MADRID.lat + 0.01, MADRID.lon)
    assert distance(MADRID, b) == pytest.approx(1111.949266, abs=1e-5)


def test_haversine_vectorised_matches_scalar():
    rng = np.random.default_rng(3)
    la, lo = rng.uniform(40.3, 40.5, 20), rng.uniform(-3.8, -3.6, 20)
    d = haversine(MADRID.lat, MADRID.lon, la, lo)
    for k in range(20):
        assert d[k] == pytest.approx(distance(MADRID, GeoPoint(la[k], lo[k])), rel=1e-12)


@pytest.mark.parametrize("meters,fn,expect", [(859.6, walk_time, 1000.0), (2456.0, bike_time, 1000.0)])
def test_effective_speed_times(meters, fn, expect):
    b = offset_point(MADRID, meters, 0.0)
    # offset_point is spherical, so feed the exact measured distance back in
    d = distance(MADRID, b)
    assert d == pytest.approx(meters, rel=1e-9)
    assert fn(MADRID, b, MobilityProfile()) == pytest.approx(expect * d / meters, rel=1e-12)
    assert fn(MADRID, MADRID, MobilityProfile()) == 0.0


def test_profile_defaults():
    p = MobilityProfile()
    assert p.effective_walk_speed == pytest.approx(0.8596)
    assert p.effective_bike_speed == pytest.approx(2.456)


def test_profile_rejects_nonpositive():
    with pytest.raises(ValueError):
        MobilityProfile(walk_speed=0)
    with pytest.raises(ValueError):
        MobilityProfile(velocity_factor=-1)


def test_station_validation():
    with pytest.raises(ValueError):
        Station(1, MADRID, 5, 6)
    with pytest.raises(ValueError):
        Station(1, MADRID, 0, 0)
    assert Station(1, MADRID, 5, 2).slots == 3


def test_bad_coordinates():
    with pytest.raises(ValueError):
        GeoPoint(91, 0)


def test_rent_request_budget():
    with pytest.raises(ValueError):
        RentRequest(1, MADRID, 0.0, -5)


@settings(max_examples=200, deadline=None)
@given(points, points, points)
def test_triangle_inequality(a, b, c):
    assert distance(a, c) <= distance(a, b) + distance(b, c) + 1e-6


@settings(max_examples=50, deadline=None)
@given(points, points, st.floats(0.5, 3.0))
def test_time_scales_inversely_with_speed(a, b, s):
    p1, p2 = MobilityProfile(walk_speed=s, bike_speed=s), MobilityProfile(walk_speed=2 * s, bike_speed=2 * s)
    assert walk_time(a, b, p2) == pytest.approx(walk_time(a, b, p1) / 2, rel=1e-12, abs=1e-12)
    assert bike_time(a, b, p2) == pytest.approx(bike_time(a, b, p1) / 2, rel=1e-12, abs=1e-12)


def test_network_skips_inactive_and_tracks_bikes():
    stations = [Station(1, MADRID, 4, 0), Station(2, offset_point(MADRID, 100, 0), 4, 4, active=False),
                Station(3, offset_point(MADRID, 0, 200), 2, 1)]
    net = Network(stations)
    assert net.ids == [1, 3]
    assert net.dist[0, 1] == pytest.approx(200, rel=1e-6)
    assert not net.take_bike(0)
    assert net.take_bike(1) and net.bikes[1] == 0 and net.stations[1].bikes == 0
    assert net.return_bike(1) and net.return_bike(1)
    assert not net.return_bike(1)
    assert stations[2].bikes == 1  # caller's objects untouched
    assert math.isclose(net.walk_seconds(859.6), 1000.0)
