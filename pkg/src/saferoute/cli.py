"""Command-line entry point: build-graph, embed, train, route, evaluate, export-geojson."""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from pathlib import Path

import numpy as np

from . import embeddings as emb_mod
from .config import ConfigError, RunConfig
from .crime_index import CrimeIndex, load_crimes
from .embeddings import EmbeddingTable
from .evaluation import run_experiment, write_reports
from .policy import AdamState, PolicyNetwork, load_weights, save_weights
from .rewards import global_avg, local_avg
from .routing import beam_search, result_geojson, route_geojson
from .street_graph import RoutePath, load_graph, load_map, sample_k_hop_pairs, save_graph
from .training import LOG_HEADER, read_log, retrain_with_rewards, supervised_train, write_log

logger = logging.getLogger("saferoute")

CKPT_RE = re.compile(r"^(supervised|retrain)_(\d{3,})\.weights$")


class UsageError(Exception):
    pass


def _config(args) -> RunConfig:
    cfg = RunConfig.from_env_or_default(args.config)
    for item in args.set or ():
        cfg.override(item)
    if args.seed is not None:
        cfg.set("run", "seed", args.seed)
    if args.threads is not None:
        cfg.set("run", "threads", args.threads)
    cfg.validate()
    return cfg


def _load_crimes(path, cfg: RunConfig) -> CrimeIndex:
    c = cfg.values["crime"]
    return load_crimes(path, c["categories"], c["cell_deg"])


def _out_file(path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _load_policy(path, table: EmbeddingTable) -> PolicyNetwork:
    net = load_weights(path)
    if net.sizes[0] != 2 * table.dim:
        raise ValueError(f"{path}: network input size {net.sizes[0]} does not match embedding dim {table.dim} (need {2 * table.dim})")
    return net


# ---------------------------------------------------------------------------


def cmd_build_graph(args) -> int:
    graph = load_map(args.nodes, args.edges)
    save_graph(graph, _out_file(args.out))
    print(f"nodes: {len(graph)}")
    print(f"directed edges: {graph.num_edges}")
    print(f"collision reassignments: {len(graph.reassignments)}")
    for m in graph.reassignments:
        print(f"  {m.node} -> {m.target}: bearing {m.bearing:.2f} moved {m.original.name} -> {m.assigned.name}")
    return 0


def cmd_embed(args) -> int:
    cfg = _config(args)
    graph = load_graph(args.graph)
    table = emb_mod.embed_graph(graph, cfg.walk_config(), cfg.skipgram_config(), threads=cfg.values["run"]["threads"])
    table.save(_out_file(args.out))
    print(f"embedded {len(table)} nodes in {table.dim} dimensions -> {args.out}")
    return 0


def _latest_checkpoint(ckpt_dir: Path):
    found = []
    for p in ckpt_dir.glob("*.weights") if ckpt_dir.exists() else ():
        m = CKPT_RE.match(p.name)
        if m:
            found.append((0 if m.group(1) == "supervised" else 1, int(m.group(2)), m.group(1), p))
    if not found:
        return None
    _, epoch, phase, path = max(found)
    return phase, epoch, path


def cmd_train(args) -> int:
    cfg = _config(args)
    tc = cfg.train_config()
    graph = load_graph(args.graph)
    table = EmbeddingTable.load(args.embeddings)
    table.check_covers(graph)
    if args.phase in ("retrain", "both") and not args.crimes:
        raise UsageError("--crimes is required for the retrain phase")
    index = _load_crimes(args.crimes, cfg) if args.phase in ("retrain", "both") else None

    out = Path(args.out)
    ckpt_dir = out / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    pol = cfg.values["policy"]
    if args.init:
        net = _load_policy(args.init, table)
    else:
        net = PolicyNetwork.initialize(2 * table.dim, pol["h1"], pol["h2"], seed=cfg.seed)
    adam = AdamState.for_network(net, pol["lr"], pol["beta1"], pol["beta2"], pol["eps"])

    sup_start, rt_start = 0, 0
    if args.resume:
        latest = _latest_checkpoint(ckpt_dir)
        if latest is not None:
            phase, epoch, wpath = latest
            net = _load_policy(wpath, table)
            adam = AdamState.load(wpath.with_suffix(".adam"), net)
            if phase == "supervised":
                sup_start = epoch + 1
            else:
                sup_start, rt_start = tc.supervised_epochs, epoch + 1
            print(f"resuming after {phase} epoch {epoch}", file=sys.stderr)

    def checkpoint(phase, epoch, n, a):
        save_weights(n, ckpt_dir / f"{phase}_{epoch:03d}.weights")
        a.save(ckpt_dir / f"{phase}_{epoch:03d}.adam")

    pairs = sample_k_hop_pairs(graph, tc.hop_k, cfg.values["training"]["pairs"], seed=[cfg.seed, tc.hop_k])
    if not pairs:
        raise ValueError(f"no training pairs {tc.hop_k} hops apart")
    print(f"training on {len(pairs)} pairs at {tc.hop_k} hops", file=sys.stderr)

    if args.phase in ("supervised", "both"):
        supervised_train(net, adam, graph, table, pairs, tc, start_epoch=sup_start, on_epoch_end=checkpoint)
    if args.phase in ("retrain", "both"):
        net, logs = retrain_with_rewards(net, adam, graph, table, index, pairs, tc, start_epoch=rt_start, on_epoch_end=checkpoint)
        log_path = out / "train_log.csv"
        if rt_start > 0 and log_path.exists():
            keep = [r for r in read_log(log_path) if r["episode"] < rt_start * tc.episodes_per_epoch]
            _rewrite_log(log_path, keep)
            write_log(logs, log_path, append=True)
        else:
            write_log(logs, log_path)
        wins = sum(lg.success for lg in logs)
        print(f"retraining: {wins}/{len(logs)} successful episodes", file=sys.stderr)
    save_weights(net, out / "weights.txt")
    adam.save(out / "adam.txt")
    print(f"weights -> {out / 'weights.txt'}")
    return 0


def _rewrite_log(path: Path, rows: list[dict]) -> None:
    lines = [",".join(LOG_HEADER)]
    for r in rows:
        lines.append(f"{r['episode']},{int(r['success'])},{r['max_reward']!r},{r['baseline']!r},{r['path_len']!r}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_route(args) -> int:
    if args.src == args.dst:
        raise UsageError("source and destination must differ")
    cfg = _config(args)
    graph = load_graph(args.graph)
    for n in (args.src, args.dst):
        if n not in graph:
            raise KeyError(f"unknown node {n!r}")
    table = EmbeddingTable.load(args.embeddings)
    table.check_covers(graph)
    index = _load_crimes(args.crimes, cfg)
    net = _load_policy(args.weights, table)
    rt = cfg.values["routing"]
    res = beam_search(net, graph, table, index, args.src, args.dst, rt["beam"], rt["max_len"], np.random.default_rng(cfg.seed))
    print("route: " + " ".join(str(n) for n in res.path.nodes))
    print(f"length_miles: {res.length:.6f}")
    print(f"local_avg: {res.local_avg:.6f}")
    print(f"global_avg: {res.global_avg:.6f}")
    print(f"fallback: {str(res.fallback).lower()}")
    if args.out:
        _out_file(args.out).write_text(json.dumps(result_geojson(graph, res), indent=1) + "\n", encoding="utf-8")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    for flag, key in (("city", "city"), ("pairs", "pairs"), ("hops", "hops"), ("seeds", "seeds"), ("routers", "routers")):
        value = getattr(args, flag)
        if value is not None:
            cfg.set("evaluation", key, value)
    cfg.validate()
    exp = cfg.experiment_config()
    graph = load_graph(args.graph)
    index = _load_crimes(args.crimes, cfg)
    table = net = None
    if "saferoute" in exp.routers:
        if not args.weights:
            raise UsageError("router 'saferoute' needs a policy weight file (--weights)")
        if not args.embeddings:
            raise UsageError("router 'saferoute' needs an embedding file (--embeddings)")
        for label, p in (("weights", args.weights), ("embeddings", args.embeddings)):
            if not Path(p).exists():
                raise FileNotFoundError(f"router 'saferoute': {label} file {p} not found")
        table = EmbeddingTable.load(args.embeddings)
        table.check_covers(graph)
        net = _load_policy(args.weights, table)
    results = run_experiment(exp, graph, index, table, net)
    for p in write_reports(results, exp, args.out_dir):
        print(p)
    return 0


def cmd_export_geojson(args) -> int:
    cfg = _config(args)
    graph = load_graph(args.graph)
    if args.path:
        path = RoutePath.from_nodes(graph, [n.strip() for n in args.path.split(",") if n.strip()])
        props = {}
        if args.crimes and path.num_edges:
            index = _load_crimes(args.crimes, cfg)
            props = {"local_avg": local_avg(path, index), "global_avg": global_avg(path, index), "fallback": False}
        doc = route_geojson(graph, path, props)
    else:
        feats = []
        for e in graph.edges():
            if str(e.source) < str(e.target):
                feats.append(route_geojson(graph, RoutePath.from_edges(e.source, [e])))
        doc = {"type": "FeatureCollection", "features": feats}
    _out_file(args.out).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
    print(args.out)
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file (default: $SAFEROUTE_CONFIG)")
    common.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override one config value")
    common.add_argument("--seed", type=int, help="overrides run.seed")
    common.add_argument("--threads", type=int, help="worker cap")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="saferoute", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-graph", parents=[common], help="ingest node/edge CSVs into a graph artifact")
    p.add_argument("--nodes", required=True)
    p.add_argument("--edges", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser("embed", parents=[common], help="random walks + skip-gram node embeddings")
    p.add_argument("--graph", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("train", parents=[common], help="imitation then reward retraining")
    p.add_argument("--graph", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--crimes")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--phase", choices=("supervised", "retrain", "both"), default="both")
    p.add_argument("--init", help="start from this weight file")
    p.add_argument("--resume", action="store_true", help="continue from the newest checkpoint in OUT/checkpoints")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("route", parents=[common], help="beam-search one route")
    p.add_argument("--graph", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--crimes", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--src", required=True)
    p.add_argument("--dst", required=True)
    p.add_argument("--out", help="write the route as GeoJSON")
    p.set_defaults(func=cmd_route)

    p = sub.add_parser("evaluate", parents=[common], help="compare routers on sampled k-hop pairs")
    p.add_argument("--graph", required=True)
    p.add_argument("--crimes", required=True)
    p.add_argument("--embeddings")
    p.add_argument("--weights")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--city")
    p.add_argument("--pairs")
    p.add_argument("--hops", help="comma-separated hop counts")
    p.add_argument("--seeds", help="comma-separated run seeds")
    p.add_argument("--routers", help="comma-separated subset of dijkstra,safepath_median,safepath_safest,saferoute")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("export-geojson", parents=[common], help="export the graph or a node path as GeoJSON")
    p.add_argument("--graph", required=True)
    p.add_argument("--path", help="comma-separated node ids")
    p.add_argument("--crimes", help="add local/global averages to the route properties")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_geojson)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"saferoute {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, ValueError, KeyError, FileNotFoundError, FloatingPointError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"saferoute {args.command}: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
