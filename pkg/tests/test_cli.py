from __future__ import annotations

import json

import numpy as np
import pytest

from toolmatch.capability_matrix import DimensionSet, PerformanceMatrix, ToolInfo, load_registry, save_registry
from toolmatch.cli import bundled_path, main


@pytest.fixture
def registry(tmp_path):
    m = PerformanceMatrix(DimensionSet.generation(), ("alpha", "beta"),
                          np.array([[0.9, 0.4], [0.3, 0.8], [0.5, 0.5], [0.2, 0.6], [0.7, 0.1], [0.4, 0.4], [0.6, 0.9]]))
    path = tmp_path / "reg.json"
    save_registry(path, m, [ToolInfo("alpha", "first"), ToolInfo("beta", "second")])
    return path


def test_select_one_hot(registry, capsys):
    assert main(["select", str(registry), "--weights", "shape=1"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].split() == ["1", "beta", "1.000000"]
    assert lines[1].split() == ["2", "alpha", "0.375000"]


def test_select_json(registry, capsys):
    assert main(["--format", "json", "select", str(registry), "--weights", "color=0.5,shape=0.5"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert set(data) == {"scores", "ranking"}
    assert data["ranking"] == ["beta", "alpha"]
    assert data["scores"]["alpha"] == pytest.approx(0.6875, abs=1e-15)


def test_select_format_after_subcommand(registry, capsys):
    assert main(["select", str(registry), "--weights", "[1,0,0,0,0,0,0]", "--format", "csv"]) == 0
    assert capsys.readouterr().out.splitlines()[0] == "rank,tool,score"


def test_select_bad_weight_sum(registry, capsys):
    assert main(["select", str(registry), "--weights", "color=0.6,shape=0.6"]) == 2
    assert "WeightSumViolation" in capsys.readouterr().err


def test_select_parse_error(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{ nope")
    assert main(["select", str(bad), "--weights", "color=1"]) == 2
    assert "ParseError" in capsys.readouterr().err


def test_unknown_flag_is_usage_error(registry):
    with pytest.raises(SystemExit) as exc:
        main(["select", str(registry), "--wat"])
    assert exc.value.code == 2


def test_missing_weights_is_usage_error(registry, capsys):
    assert main(["select", str(registry)]) == 2


def test_update_demo(registry, tmp_path, capsys):
    out = tmp_path / "after.json"
    trace = tmp_path / "trace.jsonl"
    code = main(["--format", "json", "update-demo", str(registry), "--weights", "color=1",
                 "--actual", "beta,alpha", "--save", str(out), "--trace", str(trace)])
    assert code == 0
    data = json.loads(capsys.readouterr().out)
    assert data["delta"] == {"alpha": -0.5, "beta": 0.5}
    after, _ = load_registry(out)
    assert after.column("beta")[0] == pytest.approx(0.4 + 0.13 * 0.5, abs=1e-15)
    assert len(trace.read_text().splitlines()) == 1


def test_update_demo_wrong_tools(registry, capsys):
    assert main(["update-demo", str(registry), "--weights", "color=1", "--actual", "beta,gamma"]) == 2


def test_registry_commands(registry, capsys):
    assert main(["registry", "validate", str(registry)]) == 0
    assert capsys.readouterr().out.startswith("ok: 2 tools x 7 dimensions")
    assert main(["registry", "show", str(registry), "--format", "json"]) == 0
    assert json.loads(capsys.readouterr().out)["tools"][0]["description"] == "first"
    assert main(["registry", "show", str(registry)]) == 0
    assert "0.900000" in capsys.readouterr().out


def test_registry_missing_file(tmp_path):
    assert main(["registry", "validate", str(tmp_path / "absent.json")]) == 2


def test_bundled_files_exist():
    for name in ("demo_registry.json", "eta_sweep.json", "strategy_comparison.json", "ablation.json",
                 "planner_scenario.json"):
        assert bundled_path(name).exists()
    assert main(["registry", "validate", "demo_registry.json"]) == 0


def _spec(tmp_path, **extra):
    spec = {"name": "tiny", "strategy": "apu", "scenario": {"steps": 60}, "repeats": 2, **extra}
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(spec))
    return path


def test_experiment_creates_output_dir(tmp_path, capsys):
    out = tmp_path / "results"
    assert main(["experiment", str(_spec(tmp_path)), "--out", str(out), "--jobs", "1"]) == 0
    assert (out / "tiny.csv").exists() and (out / "tiny.summary.json").exists()


def test_experiment_missing_parent(tmp_path, capsys):
    assert main(["experiment", str(_spec(tmp_path)), "--out", str(tmp_path / "a" / "b")]) == 2


def test_experiment_invalid_spec(tmp_path, capsys):
    assert main(["experiment", str(_spec(tmp_path, strategy="magic")), "--out", str(tmp_path)]) == 2


def test_experiment_seed_flag_and_env(tmp_path, capsys, monkeypatch):
    spec = _spec(tmp_path)
    main(["--seed", "7", "--format", "json", "experiment", str(spec), "--out", str(tmp_path / "a")])
    flag = json.loads(capsys.readouterr().out)["results"][0]
    monkeypatch.setenv("PERFGUARD_SEED", "7")
    main(["--format", "json", "experiment", str(spec), "--out", str(tmp_path / "b")])
    env = json.loads(capsys.readouterr().out)["results"][0]
    assert flag["seeds"] == env["seeds"] == [7, 8]
    assert (tmp_path / "a" / "tiny.csv").read_bytes() == (tmp_path / "b" / "tiny.csv").read_bytes()


def test_experiment_same_spec_same_hash(tmp_path, capsys):
    spec = _spec(tmp_path)
    hashes = []
    for out in ("x", "y"):
        main(["--format", "json", "experiment", str(spec), "--out", str(tmp_path / out)])
        hashes.append(json.loads(capsys.readouterr().out)["results"][0]["config_hash"])
    assert hashes[0] == hashes[1]


def test_bundled_eta_sweep(tmp_path, capsys):
    assert main(["experiment", "eta_sweep.json", "--out", str(tmp_path), "--jobs", "2"]) == 0
    for eta in ("0.1", "0.13", "0.15"):
        assert (tmp_path / f"eta_sweep-eta{eta}.csv").exists()
        assert (tmp_path / f"eta_sweep-eta{eta}.summary.json").exists()
    assert (tmp_path / "eta_sweep.comparison.json").exists()


def test_train_planner_rejects_single_candidate(tmp_path, capsys):
    scen = tmp_path / "s.json"
    scen.write_text(json.dumps({"k": 1}))
    assert main(["train-capo", str(scen), "--out", str(tmp_path / "o")]) == 2


def test_train_planner_and_resume(tmp_path, capsys):
    scen = tmp_path / "s.json"
    scen.write_text(json.dumps({"train_tasks": 8, "heldout_tasks": 4}))
    full, part = tmp_path / "full", tmp_path / "part"
    assert main(["train-capo", str(scen), "--out", str(full), "--steps", "60"]) == 0
    assert main(["train-capo", str(scen), "--out", str(part), "--steps", "30"]) == 0
    assert main(["train-capo", str(scen), "--out", str(part), "--steps", "30",
                 "--resume", str(part / "policy.json")]) == 0
    full_rows = (full / "loss.csv").read_text().splitlines()
    resumed_rows = (part / "loss.csv").read_text().splitlines()
    assert resumed_rows[1:] == full_rows[31:]
    a = json.loads((full / "policy.json").read_text())
    b = json.loads((part / "policy.json").read_text())
    assert a["theta"] == b["theta"] and a["step"] == b["step"] == 60
    losses = [float(r.split(",")[1]) for r in full_rows[1:]]
    assert losses[-1] < losses[0]


def test_train_planner_resume_mismatch(tmp_path, capsys):
    scen = tmp_path / "s.json"
    scen.write_text(json.dumps({"train_tasks": 4, "heldout_tasks": 0}))
    assert main(["train-capo", str(scen), "--out", str(tmp_path / "o"), "--steps", "5"]) == 0
    other = tmp_path / "t.json"
    other.write_text(json.dumps({"train_tasks": 4, "heldout_tasks": 0, "k": 4}))
    assert main(["train-capo", str(other), "--out", str(tmp_path / "o"), "--steps", "5",
                 "--resume", str(tmp_path / "o" / "policy.json")]) == 2
