"""Small synthetic cities for tests, demos and the acceptance suite."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .crime_index import CrimeIndex, CrimeRecord
from .geo import GeoPoint, haversine_miles
from .street_graph import StreetGraph, build_graph

ORIGIN = (42.35, -71.06)


def grid_rows(rows: int, cols: int, spacing_deg: float = 0.002, origin=ORIGIN):
    """Node and street rows for a square lattice; ids are ``rIIcJJ``."""
    lat0, lon0 = origin
    dlon = spacing_deg / math.cos(math.radians(lat0))
    nodes = [(f"r{i:02d}c{j:02d}", lat0 + i * spacing_deg, lon0 + j * dlon) for i in range(rows) for j in range(cols)]
    streets = []
    for i in range(rows):
        for j in range(cols):
            if j + 1 < cols:
                streets.append((f"r{i:02d}c{j:02d}", f"r{i:02d}c{j + 1:02d}", None))
            if i + 1 < rows:
                streets.append((f"r{i:02d}c{j:02d}", f"r{i + 1:02d}c{j:02d}", None))
    return nodes, streets


def grid_city(rows: int = 8, cols: int = 8, spacing_deg: float = 0.002, origin=ORIGIN) -> StreetGraph:
    return build_graph(*grid_rows(rows, cols, spacing_deg, origin))


def two_corridor_rows(spacing_deg: float = 0.0015, corridor: int = 4, tail: int = 2, origin=ORIGIN):
    """Two parallel corridors of equal length between hubs ``W`` and ``E``.

    The north corridor ``n1..nK`` wins shortest-path ties (its ids sort
    first); the south corridor ``s1..sK`` mirrors it with identical edge
    lengths.  Tails ``a*`` and ``z*`` extend the hubs westward and eastward.
    """
    lat0, lon0 = origin
    dlon = spacing_deg / math.cos(math.radians(lat0))
    pts = {"W": (lat0, lon0), "E": (lat0, lon0 + (corridor + 1) * dlon)}
    for i in range(1, corridor + 1):
        pts[f"n{i}"] = (lat0 + spacing_deg, lon0 + i * dlon)
        pts[f"s{i}"] = (lat0 - spacing_deg, lon0 + i * dlon)
    for i in range(1, tail + 1):
        pts[f"a{i}"] = (lat0, lon0 - i * dlon)
        pts[f"z{i}"] = (lat0, lon0 + (corridor + 1 + i) * dlon)
    nodes = [(k, *pts[k]) for k in sorted(pts)]

    def dist(a, b):
        return haversine_miles(GeoPoint(*pts[a]), GeoPoint(*pts[b]))

    north = ["W"] + [f"n{i}" for i in range(1, corridor + 1)] + ["E"]
    south = ["W"] + [f"s{i}" for i in range(1, corridor + 1)] + ["E"]
    streets = []
    for (a, b), (c, d) in zip(zip(north, north[1:]), zip(south, south[1:])):
        length = dist(a, b)
        streets.append((a, b, length))
        streets.append((c, d, length))
    west = ["W"] + [f"a{i}" for i in range(1, tail + 1)]
    east = ["E"] + [f"z{i}" for i in range(1, tail + 1)]
    for chain in (west, east):
        streets.extend((a, b, None) for a, b in zip(chain, chain[1:]))
    return nodes, streets


def corridor_crimes(graph: StreetGraph, count: int = 30, corridor: int = 4, seed: int = 0, spread: float = 0.3) -> CrimeIndex:
    """Scatter ``count`` crimes around the midpoints of the inner north-corridor edges."""
    rng = np.random.default_rng(seed)
    inner = [graph.edge_between(f"n{i}", f"n{i + 1}") for i in range(1, corridor)]
    records = []
    for k in range(count):
        e = inner[k % len(inner)]
        mid = e.midpoint
        # offset in miles -> degrees
        r = spread * e.length * math.sqrt(rng.random())
        th = rng.random() * 2 * math.pi
        dlat = (r * math.cos(th)) / 69.0
        dlon = (r * math.sin(th)) / (69.0 * math.cos(math.radians(mid.lat)))
        records.append(CrimeRecord(f"c{k:03d}", GeoPoint(mid.lat + dlat, mid.lon + dlon), "assault"))
    return CrimeIndex(records)


def two_corridor_city(spacing_deg: float = 0.0015, corridor: int = 4, tail: int = 2, crimes: int = 30, seed: int = 0):
    graph = build_graph(*two_corridor_rows(spacing_deg, corridor, tail))
    return graph, corridor_crimes(graph, crimes, corridor, seed)


def write_city_csv(out_dir, nodes, streets, crimes: CrimeIndex | None = None) -> dict:
    """Write ``nodes.csv``, ``edges.csv`` and optionally ``crimes.csv``; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"nodes": out / "nodes.csv", "edges": out / "edges.csv"}
    with paths["nodes"].open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "lat", "lon"])
        w.writerows([n, repr(lat), repr(lon)] for n, lat, lon in nodes)
    with paths["edges"].open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["from", "to", "length_miles"])
        w.writerows([a, b, "" if length is None else repr(length)] for a, b, length in streets)
    if crimes is not None:
        paths["crimes"] = out / "crimes.csv"
        with paths["crimes"].open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id", "lat", "lon", "category", "timestamp"])
            for r in crimes.records:
                w.writerow([r.id, repr(r.location.lat), repr(r.location.lon), r.category, r.timestamp or ""])
    return paths
