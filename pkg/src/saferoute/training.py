"""Imitation of shortest paths followed by reward-driven retraining with a running baseline."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .crime_index import CrimeIndex
from .embeddings import EmbeddingTable, state_vector
from .policy import AdamState, PolicyNetwork, adam_step, masked_policy, policy_gradient, sample_action
from .rewards import EdgeCrimeCache, RewardConfig, r_crime, suffix_rewards
from .street_graph import RoutePath, StreetGraph, dijkstra

logger = logging.getLogger(__name__)

SUPERVISED, RETRAIN = 0, 1
LOG_HEADER = ("episode", "success", "max_reward", "baseline", "path_len")


@dataclass(frozen=True)
class TrainConfig:
    episodes_per_epoch: int = 2000
    epochs: int = 60
    rollouts: int = 5
    max_len: int = 40
    hop_k: int = 5
    supervised_episodes_per_epoch: int = 2000
    supervised_epochs: int = 30
    reward: RewardConfig = field(default_factory=RewardConfig)
    seed: int = 0

    def __post_init__(self):
        if self.rollouts < 1:
            raise ValueError("rollouts per episode must be >= 1")
        if self.episodes_per_epoch < 1 or self.supervised_episodes_per_epoch < 1:
            raise ValueError("episodes per epoch must be >= 1")
        if self.epochs < 0 or self.supervised_epochs < 0:
            raise ValueError("epoch counts must be >= 0")
        if self.hop_k < 1 or self.max_len < self.hop_k:
            raise ValueError("need hop_k >= 1 and max_len >= hop_k")


@dataclass
class Rollout:
    path: RoutePath
    success: bool
    states: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    masks: list = field(default_factory=list)


@dataclass(frozen=True)
class EpisodeLog:
    episode: int
    success: bool
    max_reward: float
    baseline: float
    path: RoutePath | None

    @property
    def path_len(self) -> float:
        return self.path.length if self.path is not None else 0.0


def rollout(net: PolicyNetwork, graph: StreetGraph, embeddings: EmbeddingTable, start, target, max_len: int, rng) -> Rollout:
    """Sample one trajectory from ``start``; success means reaching ``target`` within ``max_len`` steps.

    A (node, action) pair taken once is masked for the rest of the trajectory.
    """
    if start == target:
        raise ValueError("start and target must differ")
    for n in (start, target):
        if n not in graph:
            raise KeyError(f"unknown node {n!r}")
    node = start
    taken: set = set()
    edges = []
    out = Rollout(RoutePath((start,), (), 0.0), False)
    for _ in range(max_len):
        mask = graph.available_mask(node)
        for a in range(len(mask)):
            if (node, a) in taken:
                mask[a] = False
        if not mask.any():
            break
        s = state_vector(embeddings, node, target)
        action = sample_action(masked_policy(net, s, mask), rng)
        taken.add((node, int(action)))
        out.states.append(s)
        out.actions.append(int(action))
        out.masks.append(mask)
        edge = graph.edge_for(node, action)
        edges.append(edge)
        node = edge.target
        if node == target:
            out.success = True
            break
    out.path = RoutePath.from_edges(start, edges)
    return out


def trajectory_for_path(graph: StreetGraph, embeddings: EmbeddingTable, path: RoutePath, target=None):
    """States, actions and availability masks along a fixed path."""
    target = path.end if target is None else target
    states, actions, masks = [], [], []
    for e in path.edges:
        states.append(state_vector(embeddings, e.source, target))
        actions.append(int(e.action))
        masks.append(graph.available_mask(e.source))
    return np.array(states), actions, np.array(masks)


def _epoch_order(n: int, seed: int, phase: int, epoch: int) -> np.ndarray:
    return np.random.default_rng([seed, phase, epoch]).permutation(n)


EpochHook = Callable[[str, int, PolicyNetwork, AdamState], None]


def supervised_train(
    net: PolicyNetwork,
    adam: AdamState,
    graph: StreetGraph,
    embeddings: EmbeddingTable,
    pairs,
    config: TrainConfig,
    start_epoch: int = 0,
    on_epoch_end: EpochHook | None = None,
) -> PolicyNetwork:
    """One Adam ascent step per episode on the summed log-probability of a Dijkstra path."""
    teacher = []
    for src, dst in pairs:
        p = dijkstra(graph, src, dst)
        if p is None or p.num_edges == 0:
            logger.warning("skipping pair %r -> %r: no route", src, dst)
            continue
        teacher.append(trajectory_for_path(graph, embeddings, p))
    if not teacher:
        return net
    for epoch in range(start_epoch, config.supervised_epochs):
        order = _epoch_order(len(teacher), config.seed, SUPERVISED, epoch)
        for i in range(config.supervised_episodes_per_epoch):
            states, actions, masks = teacher[order[i % len(order)]]
            adam_step(net, adam, policy_gradient(net, states, actions, masks))
        _check_finite(net, "supervised", epoch)
        logger.info("supervised epoch %d done", epoch)
        if on_epoch_end is not None:
            on_epoch_end("supervised", epoch, net, adam)
    return net


def retrain_with_rewards(
    net: PolicyNetwork,
    adam: AdamState,
    graph: StreetGraph,
    embeddings: EmbeddingTable,
    index: CrimeIndex,
    pairs,
    config: TrainConfig,
    start_epoch: int = 0,
    on_epoch_end: EpochHook | None = None,
) -> tuple[PolicyNetwork, list[EpisodeLog]]:
    """Per episode: sample ``rollouts`` paths, keep the best successful one by reward,
    and ascend on its suffix rewards minus the epoch's running baseline.

    Episodes without a successful rollout make no update.
    """
    pairs = list(pairs)
    logs: list[EpisodeLog] = []
    if not pairs:
        return net, logs
    cache = EdgeCrimeCache(index)
    for epoch in range(start_epoch, config.epochs):
        avg_rwd, num_success = 0.0, 0
        order = _epoch_order(len(pairs), config.seed, RETRAIN, epoch)
        for i in range(config.episodes_per_epoch):
            episode = epoch * config.episodes_per_epoch + i
            src, dst = pairs[order[i % len(order)]]
            best, max_rwd = None, -np.inf
            for t in range(config.rollouts):
                rng = np.random.default_rng([config.seed, RETRAIN, epoch, i, t])
                ro = rollout(net, graph, embeddings, src, dst, config.max_len, rng)
                if ro.success:
                    r = r_crime(ro.path, index, config.reward, cache)
                    if r > max_rwd:
                        best, max_rwd = ro, r
            if best is None:
                logs.append(EpisodeLog(episode, False, 0.0, 0.0, None))
                continue
            baseline = avg_rwd / (num_success or 1)
            returns = np.array(suffix_rewards(best.path, index, config.reward, cache))
            grads = policy_gradient(net, np.array(best.states), best.actions, np.array(best.masks), returns - baseline)
            adam_step(net, adam, grads)
            num_success += 1
            avg_rwd += max_rwd
            logs.append(EpisodeLog(episode, True, float(max_rwd), float(baseline), best.path))
        _check_finite(net, "retrain", epoch)
        done = sum(1 for lg in logs if lg.success and lg.episode // config.episodes_per_epoch == epoch)
        logger.info("retrain epoch %d: %d/%d successful episodes", epoch, done, config.episodes_per_epoch)
        if on_epoch_end is not None:
            on_epoch_end("retrain", epoch, net, adam)
    return net, logs


def _check_finite(net: PolicyNetwork, phase: str, epoch: int) -> None:
    if not net.all_finite():
        raise FloatingPointError(f"non-finite parameters after {phase} epoch {epoch}")


def write_log(logs, path, append: bool = False) -> None:
    path = Path(path)
    new = not (append and path.exists())
    with path.open("a" if append else "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(LOG_HEADER)
        for lg in logs:
            w.writerow([lg.episode, int(lg.success), repr(lg.max_reward), repr(lg.baseline), repr(lg.path_len)])


def read_log(path) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [
        {
            "episode": int(r["episode"]),
            "success": r["success"] == "1",
            "max_reward": float(r["max_reward"]),
            "baseline": float(r["baseline"]),
            "path_len": float(r["path_len"]),
        }
        for r in rows
    ]
