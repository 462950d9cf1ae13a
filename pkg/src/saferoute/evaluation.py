"""Paired comparison of all routers on sampled k-hop queries, with CSV and text reports."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import compute_risk_weights, safepath_pareto, select_median, select_safest
from .crime_index import DEFAULT_BANDWIDTH_MILES, CrimeDataError, CrimeIndex
from .embeddings import EmbeddingTable
from .policy import PolicyNetwork
from .rewards import EdgeCrimeCache, global_avg, local_avg, path_length
from .routing import beam_search
from .street_graph import StreetGraph, dijkstra, sample_k_hop_pairs

logger = logging.getLogger(__name__)

ROUTERS = ("dijkstra", "safepath_median", "safepath_safest", "saferoute")
RESULT_HEADER = ("router", "local", "global", "length", "failure_rate")
IMPROVEMENT_HEADER = ("hops", "baseline", "local_pct", "global_pct", "length_pct")


@dataclass(frozen=True)
class ExperimentConfig:
    city: str = "city"
    hops: tuple = (5, 10)
    pairs: int = 100
    routers: tuple = ROUTERS
    seeds: tuple = (0, 1, 2)
    beam: int = 5
    max_len: int = 40
    bandwidth: float = DEFAULT_BANDWIDTH_MILES

    def __post_init__(self):
        if not self.hops or min(self.hops) < 1:
            raise ValueError("hop counts must be >= 1")
        if self.pairs < 1:
            raise ValueError("pairs per setting must be >= 1")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        unknown = set(self.routers) - set(ROUTERS)
        if unknown:
            raise ValueError(f"unknown routers {sorted(unknown)}")


@dataclass(frozen=True)
class MetricsRow:
    router: str
    local: float
    global_: float
    length: float
    failure_rate: float = 0.0
    count: int = 0


@dataclass
class PairMetrics:
    """Per-query metric values for one router (failed learned routes excluded)."""

    local: list = field(default_factory=list)
    global_: list = field(default_factory=list)
    length: list = field(default_factory=list)
    failures: int = 0
    queries: int = 0

    def add(self, path, index, cache) -> None:
        self.local.append(local_avg(path, index, cache))
        self.global_.append(global_avg(path, index))
        self.length.append(path_length(path))

    def row(self, router: str) -> MetricsRow:
        return MetricsRow(
            router,
            _mean(self.local),
            _mean(self.global_),
            _mean(self.length),
            self.failures / self.queries if self.queries else 0.0,
            len(self.local),
        )


@dataclass
class HopResult:
    hops: int
    runs: list  # one {router: MetricsRow} per seed
    pairs: list  # the sampled pairs per seed

    def pooled(self) -> list[MetricsRow]:
        """Average of the per-run means, per router."""
        out = []
        for router in self.runs[0]:
            rows = [r[router] for r in self.runs]
            out.append(
                MetricsRow(
                    router,
                    _mean([r.local for r in rows]),
                    _mean([r.global_ for r in rows]),
                    _mean([r.length for r in rows]),
                    _mean([r.failure_rate for r in rows]),
                    sum(r.count for r in rows),
                )
            )
        return out

    def improvements(self, baseline: str, router: str = "saferoute") -> tuple[float, float, float]:
        """Per-run percent improvements of ``router`` over ``baseline``, averaged over runs."""
        per_run = []
        for r in self.runs:
            try:
                per_run.append(percent_improvement(r[baseline], r[router]))
            except ValueError:
                per_run.append((math.nan, math.nan, math.nan))
        return tuple(_mean([p[i] for p in per_run]) for i in range(3))


def _mean(values) -> float:
    if not values:
        return math.nan
    return math.fsum(values) / len(values)


def percent_improvement(base: MetricsRow, other: MetricsRow) -> tuple[float, float, float]:
    """Signed percents: positive local/global means farther from crime, positive length means shorter."""
    for v in (base.local, base.global_, base.length):
        if not v > 0:
            raise ValueError(f"base value {v} must be positive")
    return (
        100.0 * (other.local - base.local) / base.local,
        100.0 * (other.global_ - base.global_) / base.global_,
        100.0 * (base.length - other.length) / base.length,
    )


def evaluate_pairs(
    pairs,
    graph: StreetGraph,
    index: CrimeIndex,
    embeddings: EmbeddingTable | None,
    net: PolicyNetwork | None,
    config: ExperimentConfig,
    seed=0,
) -> dict[str, MetricsRow]:
    cache = EdgeCrimeCache(index)
    routers = list(config.routers)
    metrics = {r: PairMetrics() for r in routers}
    weights = None
    if "safepath_median" in routers or "safepath_safest" in routers:
        weights = compute_risk_weights(graph, index, config.bandwidth)
    if "saferoute" in routers and (net is None or embeddings is None):
        raise ValueError("the saferoute router needs trained weights and embeddings")
    for k, (src, dst) in enumerate(pairs):
        if "dijkstra" in routers:
            p = dijkstra(graph, src, dst)
            metrics["dijkstra"].queries += 1
            metrics["dijkstra"].add(p, index, cache)
        if weights is not None:
            hull = safepath_pareto(graph, weights, src, dst)
            for name, pick in (("safepath_median", select_median), ("safepath_safest", select_safest)):
                if name in routers:
                    metrics[name].queries += 1
                    metrics[name].add(pick(hull).path, index, cache)
        if "saferoute" in routers:
            rng = np.random.default_rng([*np.atleast_1d(seed).tolist(), k])
            res = beam_search(net, graph, embeddings, index, src, dst, config.beam, config.max_len, rng, cache)
            m = metrics["saferoute"]
            m.queries += 1
            if res.fallback:
                m.failures += 1
            else:
                m.add(res.path, index, cache)
    return {r: metrics[r].row(r) for r in routers}


def run_experiment(
    config: ExperimentConfig,
    graph: StreetGraph,
    index: CrimeIndex,
    embeddings: EmbeddingTable | None,
    net: PolicyNetwork | None,
) -> list[HopResult]:
    if len(index) == 0:
        raise CrimeDataError("evaluation needs a non-empty crime index (local averages fall back to nearest crimes)")
    results = []
    for hops in config.hops:
        runs, all_pairs = [], []
        for seed in config.seeds:
            pairs = sample_k_hop_pairs(graph, hops, config.pairs, seed=[int(seed), int(hops)])
            if not pairs:
                raise ValueError(f"no node pairs {hops} hops apart")
            logger.info("evaluating %d pairs at %d hops (seed %s)", len(pairs), hops, seed)
            runs.append(evaluate_pairs(pairs, graph, index, embeddings, net, config, seed=[int(seed), int(hops)]))
            all_pairs.append(pairs)
        results.append(HopResult(hops, runs, all_pairs))
    return results


def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else f"{x:.6f}"


def write_reports(results: list[HopResult], config: ExperimentConfig, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for hr in results:
        path = out_dir / f"results_{config.city}_{hr.hops}.csv"
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(RESULT_HEADER)
            for row in hr.pooled():
                w.writerow([row.router, _fmt(row.local), _fmt(row.global_), _fmt(row.length), _fmt(row.failure_rate)])
        written.append(path)

    if "saferoute" in config.routers:
        path = out_dir / f"improvement_{config.city}.csv"
        with path.open("w", newline="", encoding="utf-8") as fh:
            fh.write("# positive local/global = farther from crime; positive length = shorter route\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(IMPROVEMENT_HEADER)
            for hr in results:
                for base in config.routers:
                    if base == "saferoute":
                        continue
                    loc, glob, length = hr.improvements(base)
                    w.writerow([hr.hops, base, f"{loc:.2f}", f"{glob:.2f}", f"{length:.2f}"])
        written.append(path)

    path = out_dir / f"results_{config.city}.txt"
    path.write_text(format_table(results, config), encoding="utf-8")
    written.append(path)
    return written


def format_table(results: list[HopResult], config: ExperimentConfig) -> str:
    """Aligned text table: one block of Local/Global/Length columns per hop setting."""
    hops_cols = [f"{hr.hops}-hops" for hr in results]
    head1 = f"{'':<18}" + "".join(f"{h:^30}" for h in hops_cols)
    head2 = f"{'Model':<18}" + "".join(f"{'Local':>10}{'Global':>10}{'Length':>10}" for _ in results)
    lines = [f"City: {config.city}", head1, head2, "-" * len(head2)]
    pooled = [{r.router: r for r in hr.pooled()} for hr in results]
    for router in config.routers:
        cells = "".join(
            f"{_fmt(p[router].local):>10}{_fmt(p[router].global_):>10}{_fmt(p[router].length):>10}" for p in pooled
        )
        lines.append(f"{router:<18}{cells}")
    if "saferoute" in config.routers:
        fails = ", ".join(f"{hr.hops}-hops {_fmt({r.router: r for r in hr.pooled()}['saferoute'].failure_rate)}" for hr in results)
        lines.append(f"saferoute failure rate: {fails}")
    return "\n".join(lines) + "\n"
