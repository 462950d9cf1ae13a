"""Spherical-earth helpers: distances, bearings, midpoints and compass sectors."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

EARTH_RADIUS_MILES = 3958.7613


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        lat, lon = float(self.lat), float(self.lon)
        if not (math.isfinite(lat) and math.isfinite(lon)):
            raise ValueError(f"non-finite coordinates ({self.lat}, {self.lon})")
        if not -90.0 <= lat <= 90.0:
            raise ValueError(f"latitude {lat} outside [-90, 90]")
        if not -180.0 <= lon < 180.0:
            # 180 is folded onto -180 so both spellings of the antimeridian are accepted
            if lon == 180.0:
                lon = -180.0
            else:
                raise ValueError(f"longitude {lon} outside [-180, 180)")
        object.__setattr__(self, "lat", lat)
        object.__setattr__(self, "lon", lon)


class CompassAction(IntEnum):
    N = 0
    NE = 1
    E = 2
    SE = 3
    S = 4
    SW = 5
    W = 6
    NW = 7

    @property
    def center(self) -> float:
        return 45.0 * int(self)


NUM_ACTIONS = len(CompassAction)


def haversine_miles(a: GeoPoint, b: GeoPoint) -> float:
    lat1, lat2 = math.radians(a.lat), math.radians(b.lat)
    dlat = lat2 - lat1
    dlon = math.radians(b.lon - a.lon)
    h = math.sin(dlat / 2.0) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2.0) ** 2
    h = min(1.0, max(0.0, h))
    return 2.0 * EARTH_RADIUS_MILES * math.asin(math.sqrt(h))


def haversine_miles_array(lat: float, lon: float, lats: np.ndarray, lons: np.ndarray) -> np.ndarray:
    """Vectorised haversine from one point (degrees) to arrays of points."""
    lat1 = math.radians(lat)
    lat2 = np.radians(lats)
    dlat = lat2 - lat1
    dlon = np.radians(lons - lon)
    h = np.sin(dlat / 2.0) ** 2 + math.cos(lat1) * np.cos(lat2) * np.sin(dlon / 2.0) ** 2
    h = np.clip(h, 0.0, 1.0)
    return 2.0 * EARTH_RADIUS_MILES * np.arcsin(np.sqrt(h))


def bearing_degrees(a: GeoPoint, b: GeoPoint) -> float:
    """Initial great-circle bearing from ``a`` to ``b``; 0 is north, clockwise."""
    if a.lat == b.lat and a.lon == b.lon:
        raise ValueError("undefined bearing between coincident points")
    lat1, lat2 = math.radians(a.lat), math.radians(b.lat)
    dlon = math.radians(b.lon - a.lon)
    x = math.sin(dlon) * math.cos(lat2)
    y = math.cos(lat1) * math.sin(lat2) - math.sin(lat1) * math.cos(lat2) * math.cos(dlon)
    deg = math.degrees(math.atan2(x, y)) % 360.0
    # -tiny % 360 can round up to exactly 360
    return 0.0 if deg >= 360.0 else deg


def compass_sector(bearing: float) -> CompassAction:
    """Map a bearing to one of 8 sectors, each 45 degrees wide and lower-inclusive."""
    if not 0.0 <= bearing < 360.0:
        raise ValueError(f"bearing {bearing} outside [0, 360)")
    return CompassAction(int(((bearing + 22.5) % 360.0) // 45.0))


def angular_difference(a: float, b: float) -> float:
    d = abs(a - b) % 360.0
    return min(d, 360.0 - d)


def midpoint(a: GeoPoint, b: GeoPoint) -> GeoPoint:
    """Great-circle midpoint."""
    lat1, lon1 = math.radians(a.lat), math.radians(a.lon)
    lat2 = math.radians(b.lat)
    dlon = math.radians(b.lon - a.lon)
    bx = math.cos(lat2) * math.cos(dlon)
    by = math.cos(lat2) * math.sin(dlon)
    lat = math.atan2(math.sin(lat1) + math.sin(lat2), math.sqrt((math.cos(lat1) + bx) ** 2 + by**2))
    lon = lon1 + math.atan2(by, math.cos(lat1) + bx)
    lon_deg = (math.degrees(lon) + 180.0) % 360.0 - 180.0
    return GeoPoint(math.degrees(lat), lon_deg)
