"""GPS <-> UTM conversion and great-circle distances.

Forward and inverse transverse Mercator use the Krüger series in the third
flattening, carried to sixth order (sub-millimetre inside a zone), on the
WGS-84 ellipsoid. The array functions are the implementation; the point
functions wrap them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from geotrack.errors import GeodesyError

WGS84_A = 6378137.0
WGS84_F = 1 / 298.257223563
K0 = 0.9996
FALSE_EASTING = 500000.0
FALSE_NORTHING_SOUTH = 10000000.0
MAX_ABS_LAT = 84.0

EARTH_MEAN_RADIUS_M = 6371008.8
METERS_PER_MILE = 1609.344
MILES_THRESHOLD_M = 0.05 * METERS_PER_MILE
"""Frame-level correctness radius, 0.05 mi."""

_N = WGS84_F / (2 - WGS84_F)
_E = math.sqrt(WGS84_F * (2 - WGS84_F))
_A = WGS84_A / (1 + _N) * (1 + _N**2 / 4 + _N**4 / 64 + _N**6 / 256)


def _series(n: float):
    n2, n3, n4, n5, n6 = n**2, n**3, n**4, n**5, n**6
    alpha = (
        n / 2 - 2 * n2 / 3 + 5 * n3 / 16 + 41 * n4 / 180 - 127 * n5 / 288 + 7891 * n6 / 37800,
        13 * n2 / 48 - 3 * n3 / 5 + 557 * n4 / 1440 + 281 * n5 / 630 - 1983433 * n6 / 1935360,
        61 * n3 / 240 - 103 * n4 / 140 + 15061 * n5 / 26880 + 167603 * n6 / 181440,
        49561 * n4 / 161280 - 179 * n5 / 168 + 6601661 * n6 / 7257600,
        34729 * n5 / 80640 - 3418889 * n6 / 1995840,
        212378941 * n6 / 319334400,
    )
    beta = (
        n / 2 - 2 * n2 / 3 + 37 * n3 / 96 - n4 / 360 - 81 * n5 / 512 + 96199 * n6 / 604800,
        n2 / 48 + n3 / 15 - 437 * n4 / 1440 + 46 * n5 / 105 - 1118711 * n6 / 3870720,
        17 * n3 / 480 - 37 * n4 / 840 - 209 * n5 / 4480 + 5569 * n6 / 90720,
        4397 * n4 / 161280 - 11 * n5 / 504 - 830251 * n6 / 7257600,
        4583 * n5 / 161280 - 108847 * n6 / 3991680,
        20648693 * n6 / 638668800,
    )
    return alpha, beta


_ALPHA, _BETA = _series(_N)


@dataclass(frozen=True)
class GpsPoint:
    """Geographic position in degrees."""

    lat: float
    lon: float

    def __post_init__(self):
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise GeodesyError(f"non-finite coordinate ({self.lat}, {self.lon})")
        if not -90.0 <= self.lat <= 90.0:
            raise GeodesyError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon < 180.0:
            raise GeodesyError(f"longitude {self.lon} outside [-180, 180)")


@dataclass(frozen=True)
class UtmPoint:
    """Projected position: zone, hemisphere ('N' or 'S'), easting and northing in meters."""

    zone: int
    hemisphere: str
    easting: float
    northing: float

    def __post_init__(self):
        if not 1 <= self.zone <= 60:
            raise GeodesyError(f"UTM zone {self.zone} outside [1, 60]")
        if self.hemisphere not in ("N", "S"):
            raise GeodesyError(f"hemisphere must be 'N' or 'S', got {self.hemisphere!r}")

    @property
    def in_standard_range(self) -> bool:
        return 100000.0 < self.easting < 900000.0


def utm_zone(lat: float, lon: float) -> int:
    """Standard zone number including the Norway and Svalbard exceptions."""
    zone = int(math.floor((lon + 180.0) / 6.0)) + 1
    zone = min(max(zone, 1), 60)
    if 56.0 <= lat < 64.0 and 3.0 <= lon < 12.0:
        return 32
    if 72.0 <= lat < 84.0:
        if 0.0 <= lon < 9.0:
            return 31
        if 9.0 <= lon < 21.0:
            return 33
        if 21.0 <= lon < 33.0:
            return 35
        if 33.0 <= lon < 42.0:
            return 37
    return zone


def central_meridian(zone: int) -> float:
    return (zone - 1) * 6.0 - 180.0 + 3.0


def latlon_to_utm_arrays(
    lat: np.ndarray, lon: np.ndarray, zone: int, hemisphere: str = "N"
) -> Tuple[np.ndarray, np.ndarray]:
    """Project arrays of degrees into one fixed zone; returns (easting, northing)."""
    lat = np.asarray(lat, dtype=np.float64)
    lon = np.asarray(lon, dtype=np.float64)
    if np.any(np.abs(lat) > MAX_ABS_LAT):
        raise GeodesyError(f"latitude beyond ±{MAX_ABS_LAT}° is outside UTM coverage")
    phi = np.radians(lat)
    lam = np.radians(lon - central_meridian(zone))
    lam = (lam + np.pi) % (2 * np.pi) - np.pi
    sin_phi = np.sin(phi)
    t = np.sinh(np.arctanh(sin_phi) - _E * np.arctanh(_E * sin_phi))
    xi_p = np.arctan2(t, np.cos(lam))
    eta_p = np.arctanh(np.sin(lam) / np.sqrt(1 + t * t))
    xi = xi_p.copy()
    eta = eta_p.copy()
    for j, a in enumerate(_ALPHA, start=1):
        xi += a * np.sin(2 * j * xi_p) * np.cosh(2 * j * eta_p)
        eta += a * np.cos(2 * j * xi_p) * np.sinh(2 * j * eta_p)
    easting = FALSE_EASTING + K0 * _A * eta
    northing = K0 * _A * xi
    if hemisphere == "S":
        northing = northing + FALSE_NORTHING_SOUTH
    return easting, northing


def utm_to_latlon_arrays(
    easting: np.ndarray, northing: np.ndarray, zone: int, hemisphere: str = "N"
) -> Tuple[np.ndarray, np.ndarray]:
    """Inverse projection for one zone; returns (lat, lon) in degrees."""
    easting = np.asarray(easting, dtype=np.float64)
    northing = np.asarray(northing, dtype=np.float64)
    if hemisphere == "S":
        northing = northing - FALSE_NORTHING_SOUTH
    xi = northing / (K0 * _A)
    eta = (easting - FALSE_EASTING) / (K0 * _A)
    xi_p = xi.copy()
    eta_p = eta.copy()
    for j, b in enumerate(_BETA, start=1):
        xi_p -= b * np.sin(2 * j * xi) * np.cosh(2 * j * eta)
        eta_p -= b * np.cos(2 * j * xi) * np.sinh(2 * j * eta)
    tau_p = np.sin(xi_p) / np.sqrt(np.sinh(eta_p) ** 2 + np.cos(xi_p) ** 2)
    lam = np.arctan2(np.sinh(eta_p), np.cos(xi_p))

    e2 = _E * _E
    tau = tau_p.copy()
    for _ in range(8):
        sigma = np.sinh(_E * np.arctanh(_E * tau / np.sqrt(1 + tau * tau)))
        tau_i = tau * np.sqrt(1 + sigma * sigma) - sigma * np.sqrt(1 + tau * tau)
        delta = (
            (tau_p - tau_i)
            / np.sqrt(1 + tau_i * tau_i)
            * (1 + (1 - e2) * tau * tau)
            / ((1 - e2) * np.sqrt(1 + tau * tau))
        )
        tau = tau + delta
        if np.all(np.abs(delta) < 1e-14):
            break
    lat = np.degrees(np.arctan(tau))
    lon = np.degrees(lam) + central_meridian(zone)
    lon = (lon + 180.0) % 360.0 - 180.0
    return lat, lon


def gps_to_utm(p: GpsPoint, zone: Optional[int] = None) -> UtmPoint:
    """Project a point, into its own zone unless `zone` forces one."""
    if abs(p.lat) > MAX_ABS_LAT:
        raise GeodesyError(f"latitude {p.lat} is outside UTM coverage (|lat| ≤ {MAX_ABS_LAT})")
    zone = zone or utm_zone(p.lat, p.lon)
    hemisphere = "N" if p.lat >= 0 else "S"
    e, n = latlon_to_utm_arrays(np.array([p.lat]), np.array([p.lon]), zone, hemisphere)
    return UtmPoint(zone=zone, hemisphere=hemisphere, easting=float(e[0]), northing=float(n[0]))


def utm_to_gps(u: UtmPoint) -> GpsPoint:
    lat, lon = utm_to_latlon_arrays(np.array([u.easting]), np.array([u.northing]), u.zone, u.hemisphere)
    return GpsPoint(lat=float(lat[0]), lon=float(lon[0]))


def haversine_arrays(lat1, lon1, lat2, lon2) -> np.ndarray:
    """Great-circle distance in meters on the mean-radius sphere (broadcasting)."""
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dphi = p2 - p1
    dlam = np.radians(np.asarray(lon2, dtype=np.float64) - np.asarray(lon1, dtype=np.float64))
    h = np.sin(dphi / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dlam / 2) ** 2
    return 2 * EARTH_MEAN_RADIUS_M * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def haversine_m(a: GpsPoint, b: GpsPoint) -> float:
    return float(haversine_arrays(a.lat, a.lon, b.lat, b.lon))


def destination(p: GpsPoint, bearing_deg: float, distance_m: float) -> GpsPoint:
    """Point reached from `p` along a great circle (mean-radius sphere)."""
    phi1, lam1 = math.radians(p.lat), math.radians(p.lon)
    theta = math.radians(bearing_deg)
    delta = distance_m / EARTH_MEAN_RADIUS_M
    phi2 = math.asin(math.sin(phi1) * math.cos(delta) + math.cos(phi1) * math.sin(delta) * math.cos(theta))
    lam2 = lam1 + math.atan2(
        math.sin(theta) * math.sin(delta) * math.cos(phi1),
        math.cos(delta) - math.sin(phi1) * math.sin(phi2),
    )
    lon = (math.degrees(lam2) + 180.0) % 360.0 - 180.0
    return GpsPoint(lat=math.degrees(phi2), lon=lon)
