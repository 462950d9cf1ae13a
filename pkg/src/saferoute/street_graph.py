"""Directed intersection graph with compass-labelled edges.

Streets come in as undirected rows and are expanded into two directed
edges.  Every out-edge of a node is bound to one of the eight compass
actions, which is what the routing agent chooses between.
"""

from __future__ import annotations

import csv
import heapq
import json
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Hashable, Iterable, Sequence

import numpy as np

from .geo import (
    NUM_ACTIONS,
    CompassAction,
    GeoPoint,
    angular_difference,
    bearing_degrees,
    compass_sector,
    haversine_miles,
    midpoint,
)

logger = logging.getLogger(__name__)

NodeId = Hashable

# collisions may push an edge at most this many sectors away from its bearing
MAX_SECTOR_SHIFT = 2


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class Node:
    id: NodeId
    location: GeoPoint


@dataclass(frozen=True)
class StreetEdge:
    source: NodeId
    target: NodeId
    length: float
    action: CompassAction
    midpoint: GeoPoint


@dataclass(frozen=True)
class Reassignment:
    node: NodeId
    target: NodeId
    bearing: float
    original: CompassAction
    assigned: CompassAction


@dataclass
class StreetGraph:
    nodes: dict
    out_edges: dict
    action_table: dict
    reassignments: list = field(default_factory=list)

    def __post_init__(self):
        self._masks = {}
        for nid, table in self.action_table.items():
            self._masks[nid] = np.array([e is not None for e in table], dtype=bool)

    def __contains__(self, node_id) -> bool:
        return node_id in self.nodes

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def num_edges(self) -> int:
        return sum(len(v) for v in self.out_edges.values())

    def node_ids(self) -> list:
        return sorted(self.nodes)

    def edges(self) -> Iterable[StreetEdge]:
        for nid in self.node_ids():
            yield from self.out_edges[nid]

    def location(self, node_id) -> GeoPoint:
        return self.nodes[node_id].location

    def edge_for(self, node_id, action) -> StreetEdge | None:
        return self.action_table[node_id][int(action)]

    def edge_between(self, a, b) -> StreetEdge | None:
        for e in self.out_edges.get(a, ()):
            if e.target == b:
                return e
        return None

    def available_mask(self, node_id) -> np.ndarray:
        """Boolean mask over the 8 actions that have an edge at ``node_id``."""
        return self._masks[node_id].copy()

    def neighbors(self, node_id) -> list:
        return [e.target for e in self.out_edges[node_id]]

    def undirected_neighbors(self, node_id) -> list:
        return self._undirected()[node_id]

    def _undirected(self) -> dict:
        cached = self.__dict__.get("_undirected_cache")
        if cached is None:
            adj = {nid: set() for nid in self.nodes}
            for e in self.edges():
                adj[e.source].add(e.target)
                adj[e.target].add(e.source)
            cached = {nid: sorted(v) for nid, v in adj.items()}
            self.__dict__["_undirected_cache"] = cached
        return cached

    def structure(self) -> tuple:
        """Hashable summary used to compare two graphs structurally."""
        nodes = tuple((nid, self.nodes[nid].location.lat, self.nodes[nid].location.lon) for nid in self.node_ids())
        edges = tuple((e.source, e.target, e.length, int(e.action)) for e in self.edges())
        return nodes, edges


@dataclass(frozen=True)
class RoutePath:
    """Ordered node sequence plus the edges joining consecutive nodes."""

    nodes: tuple
    edges: tuple
    length: float

    @classmethod
    def from_edges(cls, start, edges: Sequence[StreetEdge]) -> "RoutePath":
        nodes = [start]
        total = 0.0
        for e in edges:
            if e.source != nodes[-1]:
                raise ValueError(f"edge {e.source}->{e.target} does not continue path at {nodes[-1]}")
            nodes.append(e.target)
            total += e.length
        return cls(tuple(nodes), tuple(edges), total)

    @classmethod
    def from_nodes(cls, graph: StreetGraph, nodes: Sequence) -> "RoutePath":
        if not nodes:
            raise ValueError("empty node sequence")
        edges = []
        for a, b in zip(nodes, nodes[1:]):
            e = graph.edge_between(a, b)
            if e is None:
                raise ValueError(f"no edge {a}->{b}")
            edges.append(e)
        return cls.from_edges(nodes[0], edges)

    @property
    def start(self):
        return self.nodes[0]

    @property
    def end(self):
        return self.nodes[-1]

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def actions(self) -> list:
        return [e.action for e in self.edges]

    def suffix(self, t: int) -> "RoutePath":
        return RoutePath.from_edges(self.nodes[t], self.edges[t:])


# ---------------------------------------------------------------------------
# construction


def _resolve_actions(node_id, loc: GeoPoint, targets: list) -> tuple[dict, list]:
    """Assign each (target, location) an action; returns target->action and reassignments."""
    if len(targets) > NUM_ACTIONS:
        raise GraphError(f"node {node_id!r} has {len(targets)} out-edges; at most {NUM_ACTIONS} fit the compass")
    bearings = {}
    for tgt, tloc in targets:
        try:
            bearings[tgt] = bearing_degrees(loc, tloc)
        except ValueError:
            raise GraphError(f"nodes {node_id!r} and {tgt!r} are coincident") from None

    groups: dict[int, list] = {}
    for tgt, _ in targets:
        groups.setdefault(int(compass_sector(bearings[tgt])), []).append(tgt)

    assigned = {}
    losers = []
    for sector, tgts in groups.items():
        center = 45.0 * sector
        ranked = sorted(tgts, key=lambda t: (angular_difference(bearings[t], center), t))
        assigned[ranked[0]] = sector
        losers.extend((t, sector) for t in ranked[1:])

    taken = set(assigned.values())
    moves = []
    losers.sort(key=lambda ts: (angular_difference(bearings[ts[0]], 45.0 * ts[1]), ts[0]))
    for tgt, sector in losers:
        best = None
        for shift in range(-MAX_SECTOR_SHIFT, MAX_SECTOR_SHIFT + 1):
            cand = (sector + shift) % NUM_ACTIONS
            if shift == 0 or cand in taken:
                continue
            # clockwise wins exact ties, then the smaller shift
            key = (angular_difference(bearings[tgt], 45.0 * cand), 0 if shift > 0 else 1, abs(shift))
            if best is None or key < best[0]:
                best = (key, cand)
        if best is None:
            raise GraphError(
                f"node {node_id!r}: no free compass sector within {MAX_SECTOR_SHIFT} of "
                f"{CompassAction(sector).name} for edge to {tgt!r}"
            )
        assigned[tgt] = best[1]
        taken.add(best[1])
        moves.append(
            Reassignment(node_id, tgt, bearings[tgt], CompassAction(sector), CompassAction(best[1]))
        )
    return {t: CompassAction(s) for t, s in assigned.items()}, moves


def build_graph(
    nodes: Iterable[tuple],
    streets: Iterable[tuple],
    actions: dict | None = None,
) -> StreetGraph:
    """Build a graph from ``(id, lat, lon)`` rows and undirected ``(a, b, length|None)`` rows.

    ``actions`` optionally pins ``(source, target) -> CompassAction`` (used when
    reloading a saved artifact); otherwise collisions are resolved from bearings.
    """
    node_map = {}
    for row in nodes:
        nid, lat, lon = row
        if nid in node_map:
            raise GraphError(f"duplicate node id {nid!r}")
        try:
            node_map[nid] = Node(nid, GeoPoint(float(lat), float(lon)))
        except ValueError as exc:
            raise GraphError(f"node {nid!r}: {exc}") from None

    lengths: dict[tuple, float] = {}
    for row in streets:
        a, b, length = row
        for end in (a, b):
            if end not in node_map:
                raise GraphError(f"edge references unknown node {end!r}")
        if a == b:
            raise GraphError(f"self-loop at node {a!r}")
        if length is None:
            length = haversine_miles(node_map[a].location, node_map[b].location)
        length = float(length)
        if not (math.isfinite(length) and length > 0.0):
            raise GraphError(f"edge {a!r}-{b!r} has non-positive or non-finite length {length}")
        if (a, b) in lengths:
            logger.warning("duplicate street %r-%r ignored", a, b)
            continue
        lengths[(a, b)] = length
        lengths[(b, a)] = length

    outgoing: dict = {nid: [] for nid in node_map}
    for (a, b) in lengths:
        outgoing[a].append(b)

    out_edges, action_table, moves = {}, {}, []
    for nid in sorted(node_map):
        loc = node_map[nid].location
        tgts = sorted(outgoing[nid])
        if actions is not None:
            resolved = {t: CompassAction(actions[(nid, t)]) for t in tgts}
            if len(set(resolved.values())) != len(resolved):
                raise GraphError(f"node {nid!r}: pinned actions collide")
        else:
            resolved, node_moves = _resolve_actions(nid, loc, [(t, node_map[t].location) for t in tgts])
            moves.extend(node_moves)
        table = [None] * NUM_ACTIONS
        for t in tgts:
            act = resolved[t]
            edge = StreetEdge(nid, t, lengths[(nid, t)], act, midpoint(loc, node_map[t].location))
            table[int(act)] = edge
        action_table[nid] = table
        out_edges[nid] = [e for e in table if e is not None]
    for m in moves:
        logger.info(
            "node %r: edge to %r (bearing %.2f) moved %s -> %s",
            m.node, m.target, m.bearing, m.original.name, m.assigned.name,
        )
    return StreetGraph(node_map, out_edges, action_table, moves)


def _read_csv(path, required: Sequence[str]):
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise GraphError(f"{path}: missing columns {missing}")
        for row in reader:
            yield reader.line_num, row


def load_map(nodes_file, edges_file) -> StreetGraph:
    """Load ``id,lat,lon`` nodes and ``from,to,length_miles`` streets from CSV."""
    node_rows = []
    for line, row in _read_csv(nodes_file, ("id", "lat", "lon")):
        try:
            node_rows.append((row["id"].strip(), float(row["lat"]), float(row["lon"])))
        except (TypeError, ValueError):
            raise GraphError(f"{nodes_file}:{line}: malformed node row {row}") from None
        if not (math.isfinite(node_rows[-1][1]) and math.isfinite(node_rows[-1][2])):
            raise GraphError(f"{nodes_file}:{line}: non-finite coordinates")
    known = {r[0] for r in node_rows}
    street_rows = []
    for line, row in _read_csv(edges_file, ("from", "to")):
        raw = (row.get("length_miles") or "").strip()
        try:
            length = float(raw) if raw else None
            a, b = row["from"].strip(), row["to"].strip()
        except (AttributeError, ValueError):
            raise GraphError(f"{edges_file}:{line}: malformed edge row {row}") from None
        for end in (a, b):
            if end not in known:
                raise GraphError(f"{edges_file}:{line}: edge references unknown node {end!r}")
        if length is not None and not (math.isfinite(length) and length > 0):
            raise GraphError(f"{edges_file}:{line}: length must be positive and finite")
        street_rows.append((a, b, length))
    return build_graph(node_rows, street_rows)


def save_graph(graph: StreetGraph, path) -> None:
    """Write a JSON artifact; byte-identical for identical graphs."""
    doc = {
        "format": "saferoute-graph",
        "version": 1,
        "nodes": [[nid, n.location.lat, n.location.lon] for nid, n in ((i, graph.nodes[i]) for i in graph.node_ids())],
        "edges": [[e.source, e.target, e.length, e.action.name] for e in graph.edges()],
        "reassignments": [
            [m.node, m.target, m.bearing, m.original.name, m.assigned.name] for m in graph.reassignments
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def load_graph(path) -> StreetGraph:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"graph artifact {path} not found")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
        if doc.get("format") != "saferoute-graph":
            raise GraphError(f"{path}: not a graph artifact")
        nodes = [tuple(r) for r in doc["nodes"]]
        streets = []
        seen = set()
        actions = {}
        for src, dst, length, act in doc["edges"]:
            actions[(src, dst)] = CompassAction[act]
            key = (min(src, dst), max(src, dst))
            if key not in seen:
                seen.add(key)
                streets.append((src, dst, length))
    except (KeyError, TypeError, ValueError) as exc:
        raise GraphError(f"{path}: corrupt graph artifact ({exc})") from None
    graph = build_graph(nodes, streets, actions=actions)
    graph.reassignments.extend(
        Reassignment(n, t, b, CompassAction[o], CompassAction[a]) for n, t, b, o, a in doc.get("reassignments", [])
    )
    return graph


# ---------------------------------------------------------------------------
# search


def dijkstra(
    graph: StreetGraph,
    src,
    dst,
    weight: Callable[[StreetEdge], float] | None = None,
) -> RoutePath | None:
    """Minimum-weight path, or ``None`` when ``dst`` is unreachable.

    Ties on total weight go to the lexicographically smaller node sequence.
    The default weight is edge length.
    """
    for n in (src, dst):
        if n not in graph.nodes:
            raise KeyError(f"unknown node {n!r}")
    if weight is None:
        weight = _edge_length
    best: dict = {src: (0.0, (src,))}
    back: dict = {src: ()}
    heap = [(0.0, (src,))]
    done = set()
    while heap:
        d, seq = heapq.heappop(heap)
        u = seq[-1]
        if u in done or best[u] != (d, seq):
            continue
        done.add(u)
        if u == dst:
            return RoutePath.from_edges(src, back[u])
        for e in graph.out_edges[u]:
            w = weight(e)
            if w < 0 or not math.isfinite(w):
                raise ValueError(f"invalid weight {w} on edge {e.source}->{e.target}")
            v = e.target
            if v in done:
                continue
            cand = (d + w, seq + (v,))
            if v not in best or cand < best[v]:
                best[v] = cand
                back[v] = back[u] + (e,)
                heapq.heappush(heap, cand)
    return None


def _edge_length(e: StreetEdge) -> float:
    return e.length


def path_weight(path: RoutePath, weight: Callable[[StreetEdge], float] | None = None) -> float:
    """Left-to-right weight sum, the same accumulation order Dijkstra uses."""
    weight = weight or _edge_length
    total = 0.0
    for e in path.edges:
        total += weight(e)
    return total


def hop_layers(graph: StreetGraph, src, max_hops: int) -> list[list]:
    """Nodes grouped by BFS hop distance from ``src`` (index = hops), up to ``max_hops``."""
    seen = {src}
    layers = [[src]]
    frontier = [src]
    for _ in range(max_hops):
        nxt = []
        for u in frontier:
            for v in graph.neighbors(u):
                if v not in seen:
                    seen.add(v)
                    nxt.append(v)
        if not nxt:
            break
        nxt.sort()
        layers.append(nxt)
        frontier = nxt
    return layers


def hop_distance(graph: StreetGraph, src, dst) -> int | None:
    seen = {src: 0}
    q = deque([src])
    while q:
        u = q.popleft()
        if u == dst:
            return seen[u]
        for v in graph.neighbors(u):
            if v not in seen:
                seen[v] = seen[u] + 1
                q.append(v)
    return None


def sample_k_hop_pairs(graph: StreetGraph, k: int, count: int, seed: int) -> list[tuple]:
    """Draw up to ``count`` distinct (src, dst) pairs exactly ``k`` hops apart.

    Sources are visited in a seeded random order, each contributing one fresh
    destination per round, so pairs spread across the map before any source
    repeats.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not graph.nodes or count <= 0:
        return []
    rng = np.random.default_rng(seed)
    order = list(graph.node_ids())
    rng.shuffle(order)
    pools = {}
    for s in order:
        layers = hop_layers(graph, s, k)
        if len(layers) > k:
            pool = list(layers[k])
            rng.shuffle(pool)
            pools[s] = pool
    pairs = []
    while len(pairs) < count and pools:
        for s in [s for s in order if s in pools]:
            pairs.append((s, pools[s].pop()))
            if not pools[s]:
                del pools[s]
            if len(pairs) == count:
                break
    return pairs
