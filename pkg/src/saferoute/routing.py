"""Inference: stochastic beam search over the trained policy and loop removal."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .crime_index import CrimeIndex
from .embeddings import EmbeddingTable, state_vector
from .policy import PolicyNetwork, masked_policy, sample_action
from .rewards import EdgeCrimeCache, global_avg, local_avg, path_length
from .street_graph import RoutePath, StreetGraph, dijkstra


@dataclass(frozen=True)
class BeamEntry:
    path: RoutePath
    log_prob: float
    taken: frozenset


@dataclass(frozen=True)
class RouteResult:
    path: RoutePath
    local_avg: float
    global_avg: float
    length: float
    success: bool
    candidates: int
    fallback: bool = False
    raw_path: RoutePath | None = None


def remove_loops(path: RoutePath) -> RoutePath:
    """Splice out cycles: whenever a node reappears, cut back to its first occurrence."""
    nodes = [path.start]
    edges = []
    pos = {path.start: 0}
    for e in path.edges:
        v = e.target
        if v in pos:
            cut = pos[v]
            for n in nodes[cut + 1 :]:
                del pos[n]
            del nodes[cut + 1 :]
            del edges[cut:]
        else:
            pos[v] = len(nodes)
            nodes.append(v)
            edges.append(e)
    return RoutePath.from_edges(path.start, edges)


def _free_mask(graph: StreetGraph, node, taken) -> np.ndarray:
    mask = graph.available_mask(node)
    for a in range(len(mask)):
        if (node, a) in taken:
            mask[a] = False
    return mask


def _metrics(path: RoutePath, index: CrimeIndex, cache: EdgeCrimeCache | None):
    if path.num_edges == 0 or len(index) == 0:
        return math.nan, math.nan
    return local_avg(path, index, cache), global_avg(path, index)


def beam_search(
    net: PolicyNetwork,
    graph: StreetGraph,
    embeddings: EmbeddingTable,
    index: CrimeIndex,
    start,
    target,
    beam: int = 5,
    max_len: int = 40,
    rng: np.random.Generator | None = None,
    cache: EdgeCrimeCache | None = None,
) -> RouteResult:
    """Expand every live entry with ``beam`` sampled actions per step.

    Successful children are set aside; the rest are pruned to
    ``beam - len(successes)`` by cumulative log-probability.  Among the
    successes the route with the greatest local average crime distance is
    returned after loop removal.  ``candidates`` counts sampled draws that
    reached the target, before duplicates are merged.  With no success the
    shortest path is returned and flagged as a fallback.
    """
    if beam < 1:
        raise ValueError("beam size must be >= 1")
    if start == target:
        raise ValueError("start and target must differ")
    for n in (start, target):
        if n not in graph:
            raise KeyError(f"unknown node {n!r}")
    rng = rng if rng is not None else np.random.default_rng(0)
    if cache is None and len(index):
        cache = EdgeCrimeCache(index)

    live = [BeamEntry(RoutePath((start,), (), 0.0), 0.0, frozenset())]
    successes: dict[tuple, BeamEntry] = {}
    drawn = 0
    steps = 0
    while steps < max_len and len(successes) < beam and live:
        children: dict[tuple, BeamEntry] = {}
        for entry in live:
            node = entry.path.end
            mask = _free_mask(graph, node, entry.taken)
            if not mask.any():
                continue
            dist = masked_policy(net, state_vector(embeddings, node, target), mask)
            draws = [int(sample_action(dist, rng)) for _ in range(beam)]
            for a in dict.fromkeys(draws):
                edge = graph.edge_for(node, a)
                child = BeamEntry(
                    RoutePath(entry.path.nodes + (edge.target,), entry.path.edges + (edge,), entry.path.length + edge.length),
                    entry.log_prob + math.log(dist[a]),
                    entry.taken | {(node, a)},
                )
                pool = successes if edge.target == target else children
                if edge.target == target:
                    drawn += draws.count(a)
                old = pool.get(child.path.nodes)
                if old is None or child.log_prob > old.log_prob:
                    pool[child.path.nodes] = child
        room = beam - len(successes)
        ranked = sorted(children.values(), key=lambda c: (-c.log_prob, c.path.nodes))
        live = ranked[: max(room, 0)]
        steps += 1

    if not successes:
        path = dijkstra(graph, start, target)
        if path is None:
            raise ValueError(f"no route between {start!r} and {target!r}")
        loc, glob = _metrics(path, index, cache)
        return RouteResult(path, loc, glob, path_length(path), False, 0, True, None)

    def score(entry: BeamEntry):
        loc = local_avg(entry.path, index, cache) if len(index) else 0.0
        return (loc, entry.log_prob)

    best = max(sorted(successes.values(), key=lambda c: c.path.nodes), key=score)
    final = remove_loops(best.path)
    loc, glob = _metrics(final, index, cache)
    return RouteResult(final, loc, glob, path_length(final), True, drawn, False, best.path)


def greedy_route(net: PolicyNetwork, graph: StreetGraph, embeddings: EmbeddingTable, start, target, max_len: int = 40):
    """Follow the most probable unmasked action; returns ``(path, reached_target)``."""
    node, taken, edges = start, set(), []
    for _ in range(max_len):
        if node == target:
            break
        mask = _free_mask(graph, node, taken)
        if not mask.any():
            break
        dist = masked_policy(net, state_vector(embeddings, node, target), mask)
        a = int(np.argmax(dist))
        taken.add((node, a))
        edge = graph.edge_for(node, a)
        edges.append(edge)
        node = edge.target
    return RoutePath.from_edges(start, edges), node == target


def route_geojson(graph: StreetGraph, path: RoutePath, properties: dict | None = None) -> dict:
    coords = [[graph.location(n).lon, graph.location(n).lat] for n in path.nodes]
    props = {"nodes": [str(n) for n in path.nodes], "length_miles": path.length}
    props.update(properties or {})
    return {"type": "Feature", "geometry": {"type": "LineString", "coordinates": coords}, "properties": props}


def result_geojson(graph: StreetGraph, result: RouteResult) -> dict:
    return route_geojson(
        graph,
        result.path,
        {
            "length_miles": result.length,
            "local_avg": None if math.isnan(result.local_avg) else result.local_avg,
            "global_avg": None if math.isnan(result.global_avg) else result.global_avg,
            "fallback": result.fallback,
        },
    )
