"""Crime records bucketed on a uniform lat/lon grid.

Radius queries scan only the buckets overlapping a conservative bounding
box and then filter by exact haversine distance, so their results are
identical to a full linear scan.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geo import EARTH_RADIUS_MILES, GeoPoint, haversine_miles_array

DEFAULT_CELL_DEG = 0.005
DEFAULT_BANDWIDTH_MILES = 0.25
# crimes farther than this many bandwidths contribute < exp(-32) of a peak
KDE_CUTOFF_BANDWIDTHS = 8.0
KDE_REL_TOL = 1e-13


class CrimeDataError(ValueError):
    pass


@dataclass(frozen=True)
class CrimeRecord:
    id: str
    location: GeoPoint
    category: str
    timestamp: str | None = None


class CrimeIndex:
    def __init__(self, records, cell_deg: float = DEFAULT_CELL_DEG):
        if cell_deg <= 0:
            raise ValueError("cell size must be positive")
        self.cell_deg = float(cell_deg)
        self.records = sorted(records, key=lambda r: r.id)
        self.lats = np.array([r.location.lat for r in self.records], dtype=float)
        self.lons = np.array([r.location.lon for r in self.records], dtype=float)
        self.grid: dict[tuple[int, int], np.ndarray] = {}
        buckets: dict[tuple[int, int], list[int]] = {}
        for i, r in enumerate(self.records):
            buckets.setdefault(self.cell_of(r.location), []).append(i)
        self.grid = {k: np.array(v, dtype=np.int64) for k, v in buckets.items()}

    def __len__(self) -> int:
        return len(self.records)

    def cell_of(self, p: GeoPoint) -> tuple[int, int]:
        return (math.floor(p.lat / self.cell_deg), math.floor(p.lon / self.cell_deg))

    def _candidates(self, center: GeoPoint, radius: float) -> np.ndarray:
        """Indices of records in every bucket that could lie within ``radius``."""
        if not self.records:
            return np.empty(0, dtype=np.int64)
        ang = radius / EARTH_RADIUS_MILES
        # a 1% pad absorbs rounding in the bound itself
        dlat = math.degrees(ang) * 1.01 + 1e-9
        lat_lo, lat_hi = center.lat - dlat, center.lat + dlat
        cos_hi = math.cos(math.radians(min(90.0, max(abs(lat_lo), abs(lat_hi)))))
        if lat_lo <= -90 or lat_hi >= 90 or ang >= math.pi / 2 or math.sin(ang) >= cos_hi:
            return np.arange(len(self.records))
        dlon = math.degrees(math.asin(min(1.0, math.sin(ang) / cos_hi))) * 1.01 + 1e-9
        lon_lo, lon_hi = center.lon - dlon, center.lon + dlon
        if lon_lo < -180 or lon_hi >= 180:
            return np.arange(len(self.records))
        i0, i1 = math.floor(lat_lo / self.cell_deg), math.floor(lat_hi / self.cell_deg)
        j0, j1 = math.floor(lon_lo / self.cell_deg), math.floor(lon_hi / self.cell_deg)
        if (i1 - i0 + 1) * (j1 - j0 + 1) > len(self.grid):
            # more cells than occupied buckets: walk the occupied ones instead
            hits = [v for (i, j), v in self.grid.items() if i0 <= i <= i1 and j0 <= j <= j1]
        else:
            hits = [
                self.grid[(i, j)]
                for i in range(i0, i1 + 1)
                for j in range(j0, j1 + 1)
                if (i, j) in self.grid
            ]
        if not hits:
            return np.empty(0, dtype=np.int64)
        return np.sort(np.concatenate(hits))

    def distances_within(self, center: GeoPoint, radius: float) -> tuple[np.ndarray, np.ndarray]:
        """Record indices (sorted) and distances of crimes with distance <= radius."""
        if radius < 0:
            raise ValueError("radius must be non-negative")
        idx = self._candidates(center, radius)
        if idx.size == 0:
            return idx, np.empty(0)
        d = haversine_miles_array(center.lat, center.lon, self.lats[idx], self.lons[idx])
        keep = d <= radius
        return idx[keep], d[keep]

    def all_distances(self, query: GeoPoint) -> np.ndarray:
        return haversine_miles_array(query.lat, query.lon, self.lats, self.lons)


def load_crimes(crimes_file, category_filter=None, cell_deg: float = DEFAULT_CELL_DEG) -> CrimeIndex:
    """Read ``id,lat,lon,category,timestamp`` rows; keep categories in the filter (empty = all)."""
    wanted = {c.strip().lower() for c in (category_filter or ()) if c.strip()}
    path = Path(crimes_file)
    records = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        if header:
            missing = [c for c in ("id", "lat", "lon", "category") if c not in header]
            if missing:
                raise CrimeDataError(f"{path}: missing columns {missing}")
        for row in reader:
            line = reader.line_num
            try:
                cid = row["id"].strip()
                lat, lon = float(row["lat"]), float(row["lon"])
                category = row["category"].strip()
            except (AttributeError, TypeError, ValueError):
                raise CrimeDataError(f"{path}:{line}: malformed crime row {row}") from None
            if not cid or not category:
                raise CrimeDataError(f"{path}:{line}: empty id or category")
            if not (math.isfinite(lat) and math.isfinite(lon)):
                raise CrimeDataError(f"{path}:{line}: non-finite coordinates")
            try:
                loc = GeoPoint(lat, lon)
            except ValueError as exc:
                raise CrimeDataError(f"{path}:{line}: {exc}") from None
            if wanted and category.lower() not in wanted:
                continue
            ts = (row.get("timestamp") or "").strip() or None
            records.append(CrimeRecord(cid, loc, category, ts))
    return CrimeIndex(records, cell_deg)


def crimes_within_radius(index: CrimeIndex, center: GeoPoint, radius: float) -> list[tuple[CrimeRecord, float]]:
    idx, d = index.distances_within(center, radius)
    return [(index.records[i], float(x)) for i, x in zip(idx, d)]


def edge_crime_stats(index: CrimeIndex, edge) -> tuple[float, int]:
    """Sum of distances and count of crimes within ``edge.length`` of its midpoint."""
    _, d = index.distances_within(edge.midpoint, edge.length)
    if d.size == 0:
        return 0.0, 0
    return float(d.sum()), int(d.size)


def kde_density(index: CrimeIndex, bandwidth: float, query: GeoPoint) -> float:
    """Gaussian kernel density (per square mile) at ``query``.

    Only crimes within a cutoff radius are summed; the radius is widened until
    the worst-case mass of the excluded crimes is negligible relative to the
    partial sum, and falls back to the full sum otherwise.
    """
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    n = len(index)
    if n == 0:
        raise CrimeDataError("no crimes for density")
    two_h2 = 2.0 * bandwidth * bandwidth
    norm = 1.0 / (n * math.pi * two_h2)
    cutoff = KDE_CUTOFF_BANDWIDTHS * bandwidth
    for _ in range(4):
        _, d = index.distances_within(query, cutoff)
        partial = float(np.exp(-(d * d) / two_h2).sum()) if d.size else 0.0
        outside = n - d.size
        tail_bound = outside * math.exp(-(cutoff * cutoff) / two_h2)
        if tail_bound <= KDE_REL_TOL * partial:
            return norm * partial
        cutoff *= 2.0
    return kde_density_direct(index, bandwidth, query)


def kde_density_direct(index: CrimeIndex, bandwidth: float, query: GeoPoint) -> float:
    n = len(index)
    if n == 0:
        raise CrimeDataError("no crimes for density")
    two_h2 = 2.0 * bandwidth * bandwidth
    d = index.all_distances(query)
    return float(np.exp(-(d * d) / two_h2).sum()) / (n * math.pi * two_h2)
