import json

import pytest
from click.testing import CliRunner

from gclbench.cli import main
from gclbench.graph import load_tag, save_tag
from gclbench.synth import SynthConfig, synth_tag


@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture()
def dataset_dir(tmp_path):
    # large enough for the CLI's default 100-shot NCIL plan
    g = synth_tag(SynthConfig(num_classes=6, nodes_per_class=130, feature_dim=8,
                              class_sep=3.0, intra_p=0.08, seed=2))
    d = tmp_path / "data"
    save_tag(g, d)
    return d


@pytest.fixture()
def config_file(tmp_path, dataset_dir):
    doc = {
        "version": 1,
        "dataset": str(dataset_dir),
        "dataset_name": "synth",
        "scenario": "ncil",
        "mode": "global",
        "methods": ["cosine"],
        "seeds": [0],
        "plan": {"classes_per_session": 2, "num_sessions": 3, "shots": 20, "test_cap": 100},
        "hyperparameters": {"epochs": 120, "lr": 0.01, "hidden_dim": 32},
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc))
    return path


def test_help_exits_zero_and_documents_flags(runner):
    result = runner.invoke(main, ["--help"])
    assert result.exit_code == 0
    for sub in ("plan", "run", "prompts", "diagnose-leakage", "report", "synth"):
        assert sub in result.output
    run_help = runner.invoke(main, ["run", "--help"])
    assert run_help.exit_code == 0
    for flag in ("--config", "--dataset", "--scenario", "--mode", "--method",
                 "--seed", "--out", "--eval-edges"):
        assert flag in run_help.output


def test_synth_writes_dataset(runner, tmp_path):
    out = tmp_path / "ds"
    result = runner.invoke(main, ["synth", "--out", str(out), "--classes", "4",
                                  "--nodes-per-class", "10", "--feature-dim", "6"])
    assert result.exit_code == 0, result.output
    g = load_tag(out)
    assert g.node_count == 40


def test_plan_digest_reproducible(runner, dataset_dir):
    args = ["plan", "--dataset", str(dataset_dir), "--scenario", "ncil", "--seed", "7"]
    a = runner.invoke(main, args)
    b = runner.invoke(main, args)
    assert a.exit_code == 0, a.output
    assert a.output == b.output
    assert "session 1:" in a.output


def test_plan_writes_files(runner, dataset_dir, tmp_path):
    out = tmp_path / "planout"
    result = runner.invoke(main, [
        "plan", "--dataset", str(dataset_dir), "--scenario", "ncil",
        "--seed", "3", "--out", str(out),
    ])
    assert result.exit_code == 0, result.output
    assert (out / "plan.json").exists()
    assert (out / "plan.digest").read_text() == result.output


def test_plan_default_shots_too_large_fails_cleanly(runner, tmp_path):
    # default NCIL shots=100 exceed these 20-node classes -> one-line error
    small = tmp_path / "small"
    save_tag(synth_tag(SynthConfig(num_classes=6, nodes_per_class=20,
                                   feature_dim=8, seed=3)), small)
    result = runner.invoke(main, ["plan", "--dataset", str(small)])
    assert result.exit_code == 1
    assert "error:" in result.output


def test_run_with_config(runner, config_file, tmp_path):
    out = tmp_path / "runout"
    result = runner.invoke(main, [
        "run", "--config", str(config_file), "--method", "cosine",
        "--mode", "global", "--out", str(out),
    ])
    assert result.exit_code == 0, result.output
    docs = json.loads((out / "results.json").read_text())
    assert len(docs) == 1
    summary = docs[0]["summary"]
    assert summary["mean_acc"] is not None and summary["final_acc"] is not None
    assert docs[0]["run"]["method"] == "cosine"


def test_run_unknown_method_lists_valid_ids(runner, config_file, tmp_path):
    result = runner.invoke(main, [
        "run", "--config", str(config_file), "--method", "not_a_method",
        "--out", str(tmp_path / "x"),
    ])
    assert result.exit_code != 0
    assert "not_a_method" in result.output
    assert "cosine" in result.output and "gcn" in result.output


def test_run_rejects_unknown_config_key(runner, tmp_path, dataset_dir):
    doc = {"version": 1, "dataset": str(dataset_dir), "surprise": True}
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    result = runner.invoke(main, ["run", "--config", str(bad)])
    assert result.exit_code == 1
    assert "surprise" in result.output


def test_run_grid_expansion(runner, tmp_path, dataset_dir):
    doc = {
        "version": 1,
        "dataset": str(dataset_dir),
        "scenario": "ncil",
        "mode": "global",
        "methods": ["gcn"],
        "seeds": [0],
        "plan": {"classes_per_session": 2, "num_sessions": 2, "shots": 10, "test_cap": 50},
        "hyperparameters": {"epochs": 10, "lr": [0.01, 0.001], "hidden_dim": 16},
    }
    cfg = tmp_path / "grid.json"
    cfg.write_text(json.dumps(doc))
    out = tmp_path / "gridout"
    result = runner.invoke(main, ["run", "--config", str(cfg), "--out", str(out)])
    assert result.exit_code == 0, result.output
    docs = json.loads((out / "results.json").read_text())
    assert len(docs) == 2
    lrs = {d["run"]["grid_point"]["lr"] for d in docs}
    assert lrs == {0.01, 0.001}


def test_prompts_command(runner, config_file, tmp_path):
    out = tmp_path / "p.jsonl"
    result = runner.invoke(main, [
        "prompts", "--config", str(config_file), "--session", "0",
        "--seed", "1", "--out", str(out),
    ])
    assert result.exit_code == 0, result.output
    lines = out.read_text().splitlines()
    assert len(lines) == 40  # 2 classes x 20 shots
    assert "wrote 40 records" in result.output


def test_diagnose_leakage_command(runner, config_file, tmp_path):
    out = tmp_path / "diag.json"
    result = runner.invoke(main, [
        "diagnose-leakage", "--config", str(config_file), "--k-grid", "1,4",
        "--out", str(out),
    ])
    assert result.exit_code == 0, result.output
    assert "task_id_acc" in result.output
    doc = json.loads(out.read_text())
    assert len(doc["entries"]) == 4


def test_report_command(runner, config_file, tmp_path):
    out = tmp_path / "runout"
    runner.invoke(main, ["run", "--config", str(config_file), "--out", str(out)])
    md = tmp_path / "report.md"
    result = runner.invoke(main, [
        "report", "--results", str(out / "results.json"), "--out", str(md),
        "--format", "md",
    ])
    assert result.exit_code == 0, result.output
    assert "| Method |" in md.read_text()
    csv_out = tmp_path / "report.csv"
    result = runner.invoke(main, [
        "report", "--results", str(out / "results.json"), "--out", str(csv_out),
        "--format", "csv",
    ])
    assert result.exit_code == 0
    assert csv_out.read_text().startswith("method,dataset,session,metric,value")


def test_unknown_subcommand(runner):
    result = runner.invoke(main, ["frobnicate"])
    assert result.exit_code != 0
