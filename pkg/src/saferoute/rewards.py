"""Crime-distance reward and the three route metrics (local, global, length).

Per-edge crime statistics depend only on the edge, so :class:`EdgeCrimeCache`
memoises them; every function accepts an optional cache.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .crime_index import CrimeDataError, CrimeIndex, edge_crime_stats
from .street_graph import RoutePath


@dataclass(frozen=True)
class RewardConfig:
    kappa: float = 1.0

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")


class EdgeCrimeCache:
    def __init__(self, index: CrimeIndex):
        self.index = index
        self._stats: dict = {}
        self._nearest: dict = {}

    def stats(self, edge) -> tuple[float, int]:
        key = (edge.source, edge.target)
        hit = self._stats.get(key)
        if hit is None:
            hit = self._stats[key] = edge_crime_stats(self.index, edge)
        return hit

    def nearest(self, edge) -> float:
        key = (edge.source, edge.target)
        hit = self._nearest.get(key)
        if hit is None:
            hit = self._nearest[key] = float(self.index.all_distances(edge.midpoint).min())
        return hit


def _cache(index: CrimeIndex, cache: EdgeCrimeCache | None) -> EdgeCrimeCache:
    if cache is None:
        return EdgeCrimeCache(index)
    if cache.index is not index:
        raise ValueError("cache belongs to a different crime index")
    return cache


def _local_sums(edges, cache: EdgeCrimeCache) -> tuple[float, int]:
    total, count = 0.0, 0
    for e in edges:
        s, c = cache.stats(e)
        total += s
        count += c
    return total, count


def _require_edges(path: RoutePath) -> None:
    if path.num_edges == 0:
        raise ValueError("path has no edges")


def path_length(path: RoutePath) -> float:
    total = 0.0
    for e in path.edges:
        total += e.length
    return total


def r_crime(path: RoutePath, index: CrimeIndex, cfg: RewardConfig = RewardConfig(), cache=None) -> float:
    """Local average crime distance divided by path length, or kappa when no crime is near."""
    _require_edges(path)
    total, count = _local_sums(path.edges, _cache(index, cache))
    if count == 0:
        return cfg.kappa
    return (total / count) / path_length(path)


def suffix_rewards(path: RoutePath, index: CrimeIndex, cfg: RewardConfig = RewardConfig(), cache=None) -> list[float]:
    """``r_crime`` of the remaining path from each step onward."""
    _require_edges(path)
    cache = _cache(index, cache)
    return [r_crime(path.suffix(t), index, cfg, cache) for t in range(path.num_edges)]


def local_avg(path: RoutePath, index: CrimeIndex, cache=None) -> float:
    """Mean distance to crimes inside the per-edge radii.

    With no crime inside any radius, falls back to the mean over edges of the
    distance from the edge midpoint to its nearest crime.
    """
    _require_edges(path)
    cache = _cache(index, cache)
    total, count = _local_sums(path.edges, cache)
    if count:
        return total / count
    if len(index) == 0:
        raise CrimeDataError("no crimes for the nearest-crime fallback")
    return float(np.mean([cache.nearest(e) for e in path.edges]))


def global_sum(path: RoutePath, index: CrimeIndex) -> float:
    """Sum of distances over all (edge midpoint, crime) pairs."""
    _require_edges(path)
    return float(sum(index.all_distances(e.midpoint).sum() for e in path.edges))


def global_avg(path: RoutePath, index: CrimeIndex) -> float:
    """Mean distance over all (edge midpoint, crime) pairs."""
    _require_edges(path)
    if len(index) == 0:
        raise CrimeDataError("global average needs at least one crime")
    return global_sum(path, index) / (path.num_edges * len(index))
