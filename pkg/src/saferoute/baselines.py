"""Reference routers: shortest path, and a risk/length hull router over KDE risk weights."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

from .crime_index import DEFAULT_BANDWIDTH_MILES, CrimeDataError, CrimeIndex, kde_density
from .street_graph import RoutePath, StreetGraph, dijkstra, path_weight

logger = logging.getLogger(__name__)

MAX_HULL_DEPTH = 32
# relative slack when deciding a candidate lies strictly below a hull segment
HULL_REL_TOL = 1e-12


class RiskWeights(dict):
    """``(source, target) -> kde_density(midpoint) * length``."""

    def __call__(self, edge) -> float:
        return self[(edge.source, edge.target)]


@dataclass(frozen=True)
class HullPoint:
    path: RoutePath
    risk: float
    length: float


def compute_risk_weights(graph: StreetGraph, index: CrimeIndex, bandwidth: float = DEFAULT_BANDWIDTH_MILES) -> RiskWeights:
    if len(index) == 0:
        raise CrimeDataError("risk weights need at least one crime")
    w = RiskWeights()
    for e in graph.edges():
        w[(e.source, e.target)] = kde_density(index, bandwidth, e.midpoint) * e.length
    return w


def _point(path: RoutePath, weights: RiskWeights) -> HullPoint:
    return HullPoint(path, path_weight(path, weights), path.length)


def safepath_pareto(graph: StreetGraph, weights: RiskWeights, src, dst) -> list[HullPoint]:
    """Lower convex hull of the (length, risk) trade-off, sorted by length ascending.

    Starts from the shortest and the least-risky paths and repeatedly probes
    between adjacent hull points with the edge weight ``risk + slope * length``,
    inserting any path strictly below the segment.
    """
    shortest = dijkstra(graph, src, dst)
    if shortest is None:
        raise ValueError(f"{dst!r} is unreachable from {src!r}")
    safest = dijkstra(graph, src, dst, weights)
    a, b = _point(shortest, weights), _point(safest, weights)
    if b.risk >= a.risk:
        return [a]
    if b.length <= a.length:
        return [b]

    def probe(lo: HullPoint, hi: HullPoint, depth: int) -> list[HullPoint]:
        if depth >= MAX_HULL_DEPTH:
            logger.warning("hull recursion depth %d reached between lengths %.6f and %.6f", depth, lo.length, hi.length)
            return []
        slope = (lo.risk - hi.risk) / (hi.length - lo.length)
        p = dijkstra(graph, src, dst, lambda e: weights(e) + slope * e.length)
        if p is None or p.nodes in (lo.path.nodes, hi.path.nodes):
            return []
        c = _point(p, weights)
        line = lo.risk + slope * lo.length
        got = c.risk + slope * c.length
        if not got < line - HULL_REL_TOL * max(abs(line), 1e-300):
            return []
        if not (lo.length < c.length < hi.length):
            return []
        return probe(lo, c, depth + 1) + [c] + probe(c, hi, depth + 1)

    return [a] + probe(a, b, 0) + [b]


def select_safest(hull: list[HullPoint]) -> HullPoint:
    if not hull:
        raise ValueError("empty path set")
    return min(hull, key=lambda h: (h.risk, h.length))


def select_median(hull: list[HullPoint]) -> HullPoint:
    """Lower median by length."""
    if not hull:
        raise ValueError("empty path set")
    ordered = sorted(hull, key=lambda h: h.length)
    return ordered[(len(ordered) - 1) // 2]


def write_hull_csv(hull: list[HullPoint], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["length", "risk"])
        for h in hull:
            w.writerow([repr(h.length), repr(h.risk)])
