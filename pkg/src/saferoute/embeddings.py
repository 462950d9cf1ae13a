"""Node embeddings from second-order random walks and skip-gram with negative sampling."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .street_graph import StreetGraph


@dataclass(frozen=True)
class WalkConfig:
    p: float = 1.0
    q: float = 1.0
    walk_length: int = 40
    walks_per_node: int = 10
    seed: int = 0

    def __post_init__(self):
        if not (self.p > 0 and self.q > 0):
            raise ValueError("return and in-out parameters must be positive")
        if self.walk_length < 1 or self.walks_per_node < 1:
            raise ValueError("walk_length and walks_per_node must be >= 1")


@dataclass(frozen=True)
class SkipGramConfig:
    dim: int = 64
    window: int = 5
    negatives: int = 5
    lr: float = 0.025
    epochs: int = 5
    seed: int = 0
    min_lr_fraction: float = 1e-4

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("dim must be >= 2")
        if self.window < 1 or self.negatives < 1:
            raise ValueError("window and negatives must be >= 1")
        if self.lr <= 0 or self.epochs < 0:
            raise ValueError("lr must be positive and epochs non-negative")


class EmbeddingTable:
    """Node id -> vector lookup backed by one dense matrix."""

    def __init__(self, ids, vectors: np.ndarray):
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] != len(ids):
            raise ValueError("vectors must be (len(ids), dim)")
        if not np.all(np.isfinite(vectors)):
            raise ValueError("embedding contains non-finite values")
        self.ids = list(ids)
        self.index = {nid: i for i, nid in enumerate(self.ids)}
        if len(self.index) != len(self.ids):
            raise ValueError("duplicate node ids in embedding table")
        self.vectors = vectors

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, node_id) -> bool:
        return node_id in self.index

    def __getitem__(self, node_id) -> np.ndarray:
        try:
            return self.vectors[self.index[node_id]]
        except KeyError:
            raise KeyError(f"no embedding for node {node_id!r}") from None

    def save(self, path) -> None:
        lines = [f"{len(self.ids)} {self.dim}"]
        for nid, vec in zip(self.ids, self.vectors):
            lines.append(" ".join([str(nid)] + [repr(float(x)) for x in vec]))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "EmbeddingTable":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"embedding file {path} not found")
        rows = path.read_text(encoding="utf-8").split("\n")
        try:
            count, dim = (int(x) for x in rows[0].split())
            ids, vecs = [], []
            for line in rows[1 : count + 1]:
                parts = line.split()
                if len(parts) != dim + 1:
                    raise ValueError(f"expected {dim + 1} fields, got {len(parts)}")
                ids.append(parts[0])
                vecs.append([float(x) for x in parts[1:]])
            if len(ids) != count:
                raise ValueError(f"expected {count} rows, got {len(ids)}")
        except (ValueError, IndexError) as exc:
            raise ValueError(f"{path}: corrupt embedding file ({exc})") from None
        return cls(ids, np.array(vecs, dtype=np.float64).reshape(count, dim))

    def check_covers(self, graph: StreetGraph) -> None:
        missing = [n for n in graph.node_ids() if n not in self.index]
        if missing:
            raise ValueError(f"{len(missing)} graph nodes lack embeddings, e.g. {missing[:3]}")


def state_vector(table: EmbeddingTable, current, target) -> np.ndarray:
    """``(e_current, e_target - e_current)``."""
    e_cur = table[current]
    e_tgt = table[target]
    return np.concatenate([e_cur, e_tgt - e_cur])


# ---------------------------------------------------------------------------
# walks


def _walk(adj: dict, adj_sets: dict, start, cfg: WalkConfig, rng: np.random.Generator) -> list:
    walk = [start]
    while len(walk) < cfg.walk_length:
        cur = walk[-1]
        nbrs = adj[cur]
        if not nbrs:
            break
        if len(walk) == 1:
            walk.append(nbrs[int(rng.integers(len(nbrs)))])
            continue
        prev = walk[-2]
        prev_nbrs = adj_sets[prev]
        weights = np.array(
            [1.0 / cfg.p if x == prev else (1.0 if x in prev_nbrs else 1.0 / cfg.q) for x in nbrs]
        )
        cum = np.cumsum(weights)
        i = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
        walk.append(nbrs[min(i, len(nbrs) - 1)])
    return walk


def generate_walks(graph: StreetGraph, config: WalkConfig, threads: int = 1) -> list[list]:
    """``walks_per_node`` biased walks from every node over undirected connectivity.

    Each walk draws from its own generator seeded by (seed, round, node
    position), so the output does not depend on ``threads``.
    """
    ids = graph.node_ids()
    if not ids:
        raise ValueError("graph has no nodes")
    adj = {n: graph.undirected_neighbors(n) for n in ids}
    adj_sets = {n: set(v) for n, v in adj.items()}
    jobs = []
    for r in range(config.walks_per_node):
        order = np.random.default_rng([config.seed, r]).permutation(len(ids))
        jobs.extend((r, int(i)) for i in order)

    def run(job):
        r, i = job
        rng = np.random.default_rng([config.seed, r, i, 1])
        return _walk(adj, adj_sets, ids[i], config, rng)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(run, jobs))
    return [run(j) for j in jobs]


# ---------------------------------------------------------------------------
# skip-gram


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def sgns_step(w_in: np.ndarray, w_out: np.ndarray, center: int, targets: np.ndarray, labels: np.ndarray, lr: float):
    """One SGD ascent step on sum(label*log s(u.v) + (1-label)*log s(-u.v)).

    ``targets`` are rows of ``w_out`` (contexts and negatives); updates are
    computed from the pre-step vectors and applied in place.
    """
    u = w_in[center].copy()
    v = w_out[targets]
    g = lr * (labels - _sigmoid(v @ u))
    np.add.at(w_out, targets, g[:, None] * u)
    w_in[center] += g @ v


def train_skipgram(walks, config: SkipGramConfig, callback=None) -> EmbeddingTable:
    """Train input vectors with negatives drawn from unigram counts ** 0.75.

    ``callback(epoch, table)`` is invoked after every epoch when given.
    """
    vocab = sorted({n for w in walks for n in w})
    if not vocab:
        raise ValueError("empty vocabulary")
    index = {n: i for i, n in enumerate(vocab)}
    seqs = [np.array([index[n] for n in w], dtype=np.int64) for w in walks if len(w) > 0]
    counts = np.bincount(np.concatenate(seqs), minlength=len(vocab)).astype(np.float64)
    noise = counts**0.75
    noise_cum = np.cumsum(noise / noise.sum())
    noise_cum[-1] = 1.0

    rng = np.random.default_rng(config.seed)
    d = config.dim
    w_in = (rng.random((len(vocab), d)) - 0.5) / d
    w_out = np.zeros((len(vocab), d))

    total = max(1, config.epochs * sum(len(s) for s in seqs))
    seen = 0
    K = config.negatives
    for epoch in range(config.epochs):
        for s in seqs:
            n = len(s)
            for i in range(n):
                lo, hi = max(0, i - config.window), min(n, i + config.window + 1)
                ctx = np.concatenate([s[lo:i], s[i + 1 : hi]])
                lr = config.lr * max(config.min_lr_fraction, 1.0 - seen / total)
                seen += 1
                if ctx.size == 0:
                    continue
                negs = np.searchsorted(noise_cum, rng.random(ctx.size * K), side="right")
                negs = np.minimum(negs, len(vocab) - 1)
                # a negative equal to its own positive context is dropped
                negs = negs[negs != np.repeat(ctx, K)]
                targets = np.concatenate([ctx, negs])
                labels = np.concatenate([np.ones(ctx.size), np.zeros(negs.size)])
                sgns_step(w_in, w_out, int(s[i]), targets, labels, lr)
        if callback is not None:
            callback(epoch, EmbeddingTable(vocab, w_in.copy()))
    return EmbeddingTable(vocab, w_in)


def embed_graph(graph: StreetGraph, walk_cfg: WalkConfig, sg_cfg: SkipGramConfig, threads: int = 1) -> EmbeddingTable:
    walks = generate_walks(graph, walk_cfg, threads=threads)
    table = train_skipgram(walks, sg_cfg)
    table.check_covers(graph)
    return table


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(a @ b / (na * nb))

