import math

import numpy as np
import pytest
from geotrack.errors import GeodesyError
from geotrack.geo.geodesy import (
    MILES_THRESHOLD_M,
    GpsPoint,
    UtmPoint,
    destination,
    gps_to_utm,
    haversine_m,
    latlon_to_utm_arrays,
    utm_to_gps,
    utm_to_latlon_arrays,
    utm_zone,
)
from hypothesis import given
from hypothesis import strategies as st

BENCHMARKS = [
    (40.0, -75.2),
    (51.4779, -0.0015),
    (-33.8568, 151.2153),
    (35.6586, 139.7454),
    (0.0, 3.0),
    (-54.8, -68.3),
    (83.5, 10.0),
]


def test_miles_threshold_constant():
    assert MILES_THRESHOLD_M == pytest.approx(80.4672, abs=1e-9)


def test_central_meridian_at_equator():
    u = gps_to_utm(GpsPoint(lat=0.0, lon=3.0))
    assert u.zone == 31
    assert u.easting == pytest.approx(500000.0, abs=1e-6)
    assert u.northing == pytest.approx(0.0, abs=1e-6)


@pytest.mark.parametrize(
    "lat, lon, zone",
    [(40.0, -75.2, 18), (0.0, -180.0, 1), (0.0, 179.99, 60), (60.0, 5.0, 32), (78.0, 15.0, 33)],
)
def test_utm_zone(lat, lon, zone):
    assert utm_zone(lat, lon) == zone


@pytest.mark.parametrize("lat, lon", BENCHMARKS)
def test_matches_independent_projection(lat, lon):
    pyproj = pytest.importorskip("pyproj")
    u = gps_to_utm(GpsPoint(lat=lat, lon=lon))
    epsg = (32700 if u.hemisphere == "S" else 32600) + u.zone
    transformer = pyproj.Transformer.from_crs("EPSG:4326", f"EPSG:{epsg}", always_xy=True)
    easting, northing = transformer.transform(lon, lat)
    assert u.easting == pytest.approx(easting, abs=0.01)
    assert u.northing == pytest.approx(northing, abs=0.01)


@given(
    lat=st.floats(min_value=-80.0, max_value=84.0),
    lon=st.floats(min_value=-180.0, max_value=179.999),
)
def test_round_trip(lat, lon):
    back = utm_to_gps(gps_to_utm(GpsPoint(lat=lat, lon=lon)))
    assert back.lat == pytest.approx(lat, abs=1e-7)
    dlon = (back.lon - lon + 180.0) % 360.0 - 180.0
    assert abs(dlon) < 1e-7


def test_array_round_trip_in_fixed_zone(rng):
    lat = rng.uniform(39.5, 40.5, size=1000)
    lon = rng.uniform(-77.9, -72.1, size=1000)
    e, n = latlon_to_utm_arrays(lat, lon, 18, "N")
    assert np.all((e > 100000) & (e < 900000))
    lat2, lon2 = utm_to_latlon_arrays(e, n, 18, "N")
    np.testing.assert_allclose(lat2, lat, atol=1e-7)
    np.testing.assert_allclose(lon2, lon, atol=1e-7)


def test_polar_latitudes_rejected():
    with pytest.raises(GeodesyError):
        gps_to_utm(GpsPoint(lat=85.0, lon=0.0))


@pytest.mark.parametrize("lat, lon", [(91.0, 0.0), (0.0, 180.0), (math.nan, 0.0)])
def test_gps_point_ranges(lat, lon):
    with pytest.raises(GeodesyError):
        GpsPoint(lat=lat, lon=lon)


@pytest.mark.parametrize("zone, hemisphere", [(0, "N"), (61, "N"), (18, "E")])
def test_utm_point_ranges(zone, hemisphere):
    with pytest.raises(GeodesyError):
        UtmPoint(zone=zone, hemisphere=hemisphere, easting=500000.0, northing=0.0)


def test_haversine_one_degree_at_equator():
    d = haversine_m(GpsPoint(lat=0.0, lon=0.0), GpsPoint(lat=0.0, lon=1.0))
    assert d == pytest.approx(111195.0, abs=5.0)


def test_haversine_is_symmetric_and_zero_on_identity():
    a, b = GpsPoint(lat=40.0, lon=-75.2), GpsPoint(lat=40.01, lon=-75.19)
    assert haversine_m(a, a) == 0.0
    assert haversine_m(a, b) == pytest.approx(haversine_m(b, a))


@pytest.mark.parametrize("bearing", [0.0, 90.0, 211.0])
def test_destination_inverts_haversine(bearing):
    start = GpsPoint(lat=40.0, lon=-75.2)
    assert haversine_m(start, destination(start, bearing, 80.0)) == pytest.approx(80.0, abs=1e-6)
