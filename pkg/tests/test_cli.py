import json
import subprocess
import sys

import numpy as np
import pytest

from pipeline import run_pipeline, write_tiny_city
from saferoute.cli import main
from saferoute.crime_index import load_crimes
from saferoute.embeddings import EmbeddingTable
from saferoute.policy import PolicyNetwork, load_weights, save_weights
from saferoute.rewards import local_avg, path_length
from saferoute.street_graph import dijkstra, load_graph, sample_k_hop_pairs


@pytest.fixture(scope="module")
def built(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    city = write_tiny_city(root)
    return city, run_pipeline(root, city)


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_build_graph_summary(tmp_path, capsys):
    (tmp_path / "n.csv").write_text("id,lat,lon\na,0,0\nb,0.001,0\nc,0.001,0.001\nd,0,0.001\n")
    (tmp_path / "e.csv").write_text("from,to,length_miles\na,b,\nb,c,\nc,d,\nd,a,\n")
    code, out, _ = run(capsys, "build-graph", "--nodes", tmp_path / "n.csv", "--edges", tmp_path / "e.csv", "--out", tmp_path / "g.json")
    assert code == 0
    assert "nodes: 4" in out and "directed edges: 8" in out and "collision reassignments: 0" in out
    first = (tmp_path / "g.json").read_bytes()
    run(capsys, "build-graph", "--nodes", tmp_path / "n.csv", "--edges", tmp_path / "e.csv", "--out", tmp_path / "g.json")
    assert (tmp_path / "g.json").read_bytes() == first


def test_build_graph_bad_row_names_line(tmp_path, capsys):
    (tmp_path / "n.csv").write_text("id,lat,lon\na,0,0\nb,zero,0\n")
    (tmp_path / "e.csv").write_text("from,to,length_miles\na,b,\n")
    code, _, err = run(capsys, "build-graph", "--nodes", tmp_path / "n.csv", "--edges", tmp_path / "e.csv", "--out", tmp_path / "g.json")
    assert code == 1 and "n.csv:3" in err
    assert not (tmp_path / "g.json").exists()


def test_embed_outputs(built, tmp_path, capsys):
    city, art = built
    code, _, _ = run(capsys, "embed", "--graph", art["graph"], "--out", tmp_path / "e.txt", "--config", city["config"])
    assert code == 0
    assert (tmp_path / "e.txt").read_bytes() == art["emb"].read_bytes()
    code, _, _ = run(capsys, "embed", "--graph", art["graph"], "--out", tmp_path / "d2.txt", "--config", city["config"], "--set", "embeddings.dim=2")
    lines = (tmp_path / "d2.txt").read_text().splitlines()
    assert lines[0] == "16 2" and len(lines) == 17
    assert all(len(line.split()) == 3 for line in lines[1:])
    code, _, err = run(capsys, "embed", "--graph", tmp_path / "none.json", "--out", tmp_path / "x.txt")
    assert code == 1 and "none.json" in err


def test_train_artifacts(built):
    city, art = built
    net = load_weights(art["weights"])
    assert net.sizes == (8, 16, 8, 8)
    names = sorted(p.name for p in (art["train"] / "checkpoints").iterdir())
    assert "supervised_001.weights" in names and "retrain_001.adam" in names
    header = (art["train"] / "train_log.csv").read_text().splitlines()[0]
    assert header.startswith("episode,success")


def test_train_zero_epochs_keeps_initialization(built, tmp_path, capsys):
    city, art = built
    code, _, _ = run(
        capsys, "train", "--graph", art["graph"], "--embeddings", art["emb"], "--out", tmp_path / "t",
        "--phase", "supervised", "--config", city["config"], "--set", "training.supervised_epochs=0",
    )
    assert code == 0
    init = PolicyNetwork.initialize(8, 16, 8, seed=3)
    assert np.array_equal(load_weights(tmp_path / "t" / "weights.txt").flat(), init.flat())


def test_train_retrain_needs_crimes(built, tmp_path, capsys):
    city, art = built
    code, _, err = run(capsys, "train", "--graph", art["graph"], "--embeddings", art["emb"], "--out", tmp_path / "t", "--config", city["config"])
    assert code == 2 and "--crimes" in err


def test_train_resume_matches_uninterrupted(built, tmp_path, capsys):
    city, art = built
    base = ["train", "--graph", art["graph"], "--embeddings", art["emb"], "--crimes", city["crimes"], "--config", city["config"]]
    # stop after the first retraining epoch, then resume with the full schedule
    run(capsys, *base, "--out", tmp_path / "r", "--set", "training.epochs=1")
    code, _, err = run(capsys, *base, "--out", tmp_path / "r", "--resume")
    assert code == 0 and "resuming after retrain epoch 0" in err
    assert (tmp_path / "r" / "weights.txt").read_bytes() == art["weights"].read_bytes()
    assert (tmp_path / "r" / "train_log.csv").read_bytes() == (art["train"] / "train_log.csv").read_bytes()


def test_route_outputs(built, tmp_path, capsys):
    city, art = built
    base = ["route", "--graph", art["graph"], "--embeddings", art["emb"], "--crimes", city["crimes"], "--weights", art["weights"], "--config", city["config"]]
    code, _, err = run(capsys, *base, "--src", "r00c00", "--dst", "r00c00")
    assert code == 2 and "differ" in err
    code, out, _ = run(capsys, *base, "--src", "r00c00", "--dst", "r00c01", "--out", tmp_path / "r.geojson")
    assert code == 0 and out.splitlines()[0].startswith("route: r00c00")
    doc = json.loads((tmp_path / "r.geojson").read_text())
    if "fallback: false" in out:
        assert doc["geometry"]["type"] == "LineString"
    code2, out2, _ = run(capsys, *base, "--src", "r00c00", "--dst", "r03c03")
    code3, out3, _ = run(capsys, *base, "--src", "r00c00", "--dst", "r03c03")
    assert code2 == code3 == 0 and out2 == out3
    code, _, err = run(capsys, *base, "--src", "r00c00", "--dst", "nowhere")
    assert code == 1 and "nowhere" in err


def test_route_adjacent_pair_is_one_edge(built, tmp_path, capsys):
    city, art = built
    # a network whose only preference is north makes the adjacent northern hop certain
    table = EmbeddingTable.load(art["emb"])
    net = PolicyNetwork((2 * table.dim, 2, 2, 8))
    net.b3[0] = 60.0
    save_weights(net, tmp_path / "north.txt")
    code, out, _ = run(
        capsys, "route", "--graph", art["graph"], "--embeddings", art["emb"], "--crimes", city["crimes"],
        "--weights", tmp_path / "north.txt", "--src", "r01c01", "--dst", "r02c01", "--out", tmp_path / "n.geojson",
    )
    assert code == 0 and "fallback: false" in out
    coords = json.loads((tmp_path / "n.geojson").read_text())["geometry"]["coordinates"]
    assert len(coords) == 2


def test_evaluate_one_pair_matches_direct_metrics(built, tmp_path, capsys):
    city, art = built
    code, _, _ = run(
        capsys, "evaluate", "--graph", art["graph"], "--crimes", city["crimes"], "--out-dir", tmp_path,
        "--config", city["config"], "--routers", "dijkstra", "--hops", "2", "--pairs", "1", "--seeds", "5",
    )
    assert code == 0
    g = load_graph(art["graph"])
    idx = load_crimes(city["crimes"], ("shooting", "assault", "robbery"))
    (s, t), = sample_k_hop_pairs(g, 2, 1, seed=[5, 2])
    d = dijkstra(g, s, t)
    row = (tmp_path / "results_tiny_2.csv").read_text().splitlines()[1].split(",")
    assert row[0] == "dijkstra"
    assert float(row[1]) == pytest.approx(local_avg(d, idx), abs=5e-7)
    assert float(row[3]) == pytest.approx(path_length(d), abs=5e-7)


def test_evaluate_reports_and_missing_artifacts(built, tmp_path, capsys):
    city, art = built
    names = sorted(p.name for p in art["reports"].iterdir())
    assert names == ["improvement_tiny.csv", "results_tiny.txt", "results_tiny_2.csv", "results_tiny_3.csv"]
    code, _, err = run(
        capsys, "evaluate", "--graph", art["graph"], "--crimes", city["crimes"], "--out-dir", tmp_path,
        "--embeddings", art["emb"], "--weights", tmp_path / "gone.txt", "--config", city["config"],
    )
    assert code == 1 and "gone.txt" in err
    code, _, err = run(capsys, "evaluate", "--graph", art["graph"], "--crimes", city["crimes"], "--out-dir", tmp_path, "--config", city["config"])
    assert code == 2 and "--weights" in err


def test_evaluate_averages_seeds(built, tmp_path, capsys):
    city, art = built
    cells = []
    for seeds in ("0", "1", "2", "0,1,2"):
        run(
            capsys, "evaluate", "--graph", art["graph"], "--crimes", city["crimes"], "--out-dir", tmp_path / seeds,
            "--config", city["config"], "--routers", "dijkstra", "--hops", "3", "--seeds", seeds,
        )
        cells.append(float((tmp_path / seeds / "results_tiny_3.csv").read_text().splitlines()[1].split(",")[3]))
    assert cells[3] == pytest.approx(sum(cells[:3]) / 3, abs=2e-6)


def test_export_geojson(built, tmp_path, capsys):
    city, art = built
    code, _, _ = run(capsys, "export-geojson", "--graph", art["graph"], "--out", tmp_path / "all.geojson")
    doc = json.loads((tmp_path / "all.geojson").read_text())
    assert code == 0 and doc["type"] == "FeatureCollection" and len(doc["features"]) == 24
    code, _, _ = run(
        capsys, "export-geojson", "--graph", art["graph"], "--path", "r00c00,r00c01,r01c01",
        "--crimes", city["crimes"], "--out", tmp_path / "p.geojson",
    )
    feat = json.loads((tmp_path / "p.geojson").read_text())
    assert code == 0 and len(feat["geometry"]["coordinates"]) == 3 and "local_avg" in feat["properties"]


def test_bad_config_exits_nonzero(built, tmp_path, capsys):
    city, art = built
    code, _, err = run(capsys, "embed", "--graph", art["graph"], "--out", tmp_path / "e.txt", "--set", "embeddings.size=3")
    assert code == 1 and "unknown config key" in err


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "saferoute", "--help"], capture_output=True, text=True, check=False)
    assert res.returncode == 0
    for cmd in ("build-graph", "embed", "train", "route", "evaluate", "export-geojson"):
        assert cmd in res.stdout
