import json
import subprocess
import sys

import pytest

from leadfollow.cli import main

ARTIFACTS = (
    "config.json",
    "network.jsonl",
    "leaders.jsonl",
    "factions.jsonl",
    "diagram.json",
    "diagram.dot",
    "sequences.json",
    "tests.json",
    "cofaction.json",
    "leadfollow.json",
    "cofaction.csv",
    "cofaction.dot",
    "leadfollow.dot",
    "clusters.json",
    "dendrogram.csv",
    "clusters.dot",
)


@pytest.fixture(scope="module")
def small_data(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    cfg = d / "sim.toml"
    cfg.write_text('[scenario]\nT = 800\nevents = 1\ndynamics = "type2"\n')
    assert main(["-q", "--config", str(cfg), "simulate", "--seed", "11", "--out", str(d)]) == 0
    return d / "dataset.csv"


def run_pipeline_cli(data, out, *extra):
    return main(["-q", "pipeline", "--data", str(data), "--out", str(out), "--omega", "40", "--reps", "10", "--seed", "3", *extra])


def test_simulate_ic(tmp_path):
    rc = main(["-q", "simulate", "--model", "IC", "--k", "5", "--rho", "0.5", "--seed", "1", "--out", str(tmp_path)])
    assert rc == 0
    truth = json.loads((tmp_path / "dataset.truth.json").read_text())
    assert truth["scenario"]["model"] == "IC" and truth["scenario"]["k"] == 5
    assert (tmp_path / "dataset.csv").stat().st_size > 0


def test_simulate_batch(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"scenario": {"T": 800, "events": 1}}))
    assert main(["-q", "--config", str(cfg), "simulate", "--replicas", "2", "--seed", "4", "--out", str(tmp_path / "b")]) == 0
    assert len(json.loads((tmp_path / "b" / "manifest.json").read_text())["replicas"]) == 2


def test_invalid_scenario_is_a_config_error(tmp_path):
    assert main(["-q", "simulate", "--model", "IC", "--seed", "1", "--out", str(tmp_path)]) == 2


def test_missing_network_file_is_an_input_error(tmp_path):
    assert main(["-q", "leaders", "--network", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path)]) == 3


def test_missing_omega(small_data, tmp_path):
    assert main(["-q", "infer-network", "--data", str(small_data), "--out", str(tmp_path / "n.jsonl")]) == 2


def test_omega_longer_than_series(small_data, tmp_path):
    assert main(["-q", "infer-network", "--data", str(small_data), "--out", str(tmp_path / "n.jsonl"), "--omega", "5000"]) == 2


def test_bad_config_file(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("this is = = not toml")
    assert main(["-q", "--config", str(bad), "leaders", "--network", "x", "--out", str(tmp_path)]) == 2


def test_bad_csv_is_an_input_error(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("id,t,x\nA,0,0\n")
    assert main(["-q", "infer-network", "--data", str(p), "--out", str(tmp_path / "n.jsonl"), "--omega", "2"]) == 3


def test_env_and_flag_precedence(small_data, tmp_path, monkeypatch):
    monkeypatch.setenv("LEADFOLLOW_OMEGA", "30")
    out = tmp_path / "env.jsonl"
    assert main(["-q", "infer-network", "--data", str(small_data), "--out", str(out)]) == 0
    first = json.loads(out.read_text().splitlines()[0])
    assert first["interval"][1] - first["interval"][0] == 30

    cfg = tmp_path / "c.toml"
    cfg.write_text("[pipeline]\nomega = 20\n")
    out2 = tmp_path / "flag.jsonl"
    assert main(["-q", "--config", str(cfg), "infer-network", "--data", str(small_data), "--out", str(out2), "--omega", "50"]) == 0
    first = json.loads(out2.read_text().splitlines()[0])
    assert first["interval"][1] - first["interval"][0] == 50


def test_pipeline_is_deterministic(small_data, tmp_path):
    assert run_pipeline_cli(small_data, tmp_path / "a") == 0
    assert run_pipeline_cli(small_data, tmp_path / "b") == 0
    for name in ARTIFACTS:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name
    diagram = json.loads((tmp_path / "a" / "diagram.json").read_text())
    assert {tuple(nd["set"]) for nd in diagram["nodes"]} >= {("1",), ("2",), ("3",), ("4",)}


def test_stages_match_pipeline(small_data, tmp_path):
    pipe = tmp_path / "pipe"
    assert run_pipeline_cli(small_data, pipe) == 0
    s = tmp_path / "stages"
    steps = [
        ["infer-network", "--data", str(small_data), "--out", str(s / "network.jsonl"), "--omega", "40"],
        ["leaders", "--network", str(s / "network.jsonl"), "--out", str(s)],
        ["diagram", "--leaders", str(s / "leaders.jsonl"), "--out", str(s / "diagram.json")],
        ["sequences", "--leaders", str(s / "leaders.jsonl"), "--out", str(s / "sequences.json")],
        ["test", "--leaders", str(s / "leaders.jsonl"), "--reps", "10", "--seed", "3", "--out", str(s / "tests.json")],
        ["followership", "--factions", str(s / "factions.jsonl"), "--out", str(s)],
        ["cluster", "--factions", str(s / "factions.jsonl"), "--out", str(s)],
    ]
    for step in steps:
        assert main(["-q", *step]) == 0, step
    for name in ("network.jsonl", "leaders.jsonl", "factions.jsonl", "diagram.json", "sequences.json",
                 "tests.json", "cofaction.json", "leadfollow.json", "clusters.json", "dendrogram.csv"):
        assert (pipe / name).read_bytes() == (s / name).read_bytes(), name


def test_other_formats(small_data, tmp_path):
    assert run_pipeline_cli(small_data, tmp_path) == 0
    leaders = str(tmp_path / "leaders.jsonl")
    assert main(["-q", "diagram", "--leaders", leaders, "--out", str(tmp_path / "A.csv"), "--format", "csv"]) == 0
    assert main(["-q", "sequences", "--leaders", leaders, "--out", str(tmp_path / "s.csv"), "--format", "csv"]) == 0
    assert (tmp_path / "s.csv").read_text().startswith("sequence")
    assert main(["-q", "infer-network", "--data", str(small_data), "--out", str(tmp_path / "n.dot"), "--omega", "40", "--format", "dot"]) == 0
    assert (tmp_path / "n.dot").read_text().startswith("digraph")
    m = tmp_path / "m"
    assert main(["-q", "cluster", "--matrix", str(tmp_path / "cofaction.csv"), "--out", str(m)]) == 0
    assert json.loads((m / "clusters.json").read_text())["clusters"] == json.loads((tmp_path / "clusters.json").read_text())["clusters"]


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "leadfollow", "--help"], capture_output=True, text=True, timeout=120)
    assert r.returncode == 0
    assert "pipeline" in r.stdout
