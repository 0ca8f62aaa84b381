"""End-to-end checks of the command-line interface."""

import json
import subprocess
import sys

import pytest

from convexq import cli
from convexq.harness import Campaign, read_results
from convexq.networks import load_checkpoint

TINY = {"max_epochs": 3, "buffer_size": 300, "epochs_per_rollout": 2,
        "epsilon_steps": 100}


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """One cheap tiger training run shared by the checkpoint-consuming tests."""
    root = tmp_path_factory.mktemp("cli_train")
    manifest = root / "train.json"
    manifest.write_text(json.dumps({**TINY, "env": "tiger", "method": "none",
                                    "seed": 5}))
    out = root / "run"
    rc = cli.main(["train", "--manifest", str(manifest), "--out", str(out)])
    assert rc == 0
    return {"manifest": manifest, "out": out, "net": out / "net.json"}


def test_help_exits_zero(capsys):
    assert cli.main(["--help"]) == 0
    assert "train" in capsys.readouterr().out


def test_unknown_command_is_a_usage_error(capsys):
    assert cli.main(["frobnicate"]) == 2


def test_unknown_flag_is_a_usage_error(capsys):
    assert cli.main(["oracle", "tiger", "--bogus"]) == 2


def test_oracle_tiger_prints_reference_values(capsys):
    assert cli.main(["oracle", "tiger", "--gamma", "0.9", "--p-obs", "1.0"]) == 0
    doc = json.loads(capsys.readouterr().out)
    r = (10 * 0.9 - 1) / (1 - 0.81)
    assert abs(doc["perfect"]["return"] - r) < 1e-12
    assert abs(r - 42.105) < 1e-2
    assert abs(doc["uninformative"]["return"] + 10.0) < 1e-12
    assert abs(doc["value_at_reset"] - r) < 1e-6
    assert 0.0 < doc["open_left_at_or_below"] < 0.5
    assert 0.5 < doc["open_right_at_or_above"] < 1.0


def test_oracle_fvrs_prints_reference_values(capsys):
    assert cli.main(["oracle", "fvrs"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert abs(doc["always_east_return"] - 7.29) < 1e-12
    assert abs(doc["ignore_rocks_q"]["ME"] - 8.5975) < 1e-12


def test_train_writes_artifacts(trained):
    net = load_checkpoint(trained["net"])
    assert net.input_dim == 1
    log_lines = (trained["out"] / "trainlog.csv").read_text().splitlines()
    assert log_lines[0] == "step,td_loss,convex_loss,total_loss,lr,epsilon"
    assert len(log_lines) == 1 + 3 * 2  # header + epochs * updates each
    resolved = json.loads((trained["out"] / "config.json").read_text())
    assert resolved["method"] == "none"
    assert resolved["seed"] == 5
    assert resolved["env"] == "tiger:p1"
    assert resolved["config"]["max_epochs"] == 3


def test_train_flags_override_manifest(trained, tmp_path):
    out = tmp_path / "run"
    rc = cli.main(["train", "--manifest", str(trained["manifest"]),
                   "--seed", "9", "--out", str(out)])
    assert rc == 0
    assert json.loads((out / "config.json").read_text())["seed"] == 9


def test_train_is_deterministic(trained, tmp_path):
    out = tmp_path / "again"
    rc = cli.main(["train", "--manifest", str(trained["manifest"]),
                   "--out", str(out)])
    assert rc == 0
    for name in ("net.json", "trainlog.csv", "config.json"):
        assert (out / name).read_bytes() == (trained["out"] / name).read_bytes()


def test_train_rejects_unknown_manifest_key(tmp_path, capsys):
    manifest = tmp_path / "bad.json"
    manifest.write_text(json.dumps({"max_epoch": 3}))
    assert cli.main(["train", "--manifest", str(manifest)]) == 1
    assert "unknown manifest keys" in capsys.readouterr().err


def test_train_rejects_malformed_json(tmp_path, capsys):
    manifest = tmp_path / "broken.json"
    manifest.write_text("{oops")
    assert cli.main(["train", "--manifest", str(manifest)]) == 1
    assert "malformed manifest" in capsys.readouterr().err


def test_eval_writes_summary(trained, tmp_path, capsys):
    out = tmp_path / "eval"
    rc = cli.main(["eval", "--checkpoint", str(trained["net"]), "--env", "tiger",
                   "--n-mc", "50", "--seed", "3", "--out", str(out)])
    assert rc == 0
    printed = capsys.readouterr().out
    doc = json.loads(printed)
    assert doc["env"] == "tiger:p1"
    assert doc["n"] == 50
    assert doc["q1"] <= doc["median"] <= doc["q3"]
    assert (out / "eval.json").read_text() == printed


def test_eval_missing_checkpoint(tmp_path, capsys):
    rc = cli.main(["eval", "--checkpoint", str(tmp_path / "nope.json")])
    assert rc == 1
    assert "error:" in capsys.readouterr().err


def test_eval_checkpoint_env_mismatch(trained, capsys):
    rc = cli.main(["eval", "--checkpoint", str(trained["net"]), "--env", "fvrs"])
    assert rc == 1
    assert "does not match" in capsys.readouterr().err


def test_cross_eval_emits_rows_for_each_shift(trained, tmp_path, capsys):
    out = tmp_path / "cross"
    rc = cli.main(["cross-eval", "--checkpoint", str(trained["net"]),
                   "--env", "tiger", "--n-mc", "40", "--seed", "2",
                   "--out", str(out)])
    assert rc == 0
    rows = read_results(out / "cross_eval.csv")
    assert [r["eval_env"] for r in rows] == [
        f"tiger:p{p:g}" for p in (0.5, 0.6, 0.7, 0.8, 0.9, 1.0)]
    assert all(r["train_env"] == "tiger:p1" for r in rows)
    assert all(r["method"] == "agent" for r in rows)
    printed = json.loads(capsys.readouterr().out)
    assert set(printed) == {r["eval_env"] for r in rows}


def test_audit_writes_violation_report(trained, tmp_path, capsys):
    out = tmp_path / "audit"
    rc = cli.main(["audit", "--checkpoint", str(trained["net"]),
                   "--env", "tiger", "--grid", "5", "--out", str(out)])
    assert rc == 0
    doc = json.loads((out / "audit.json").read_text())
    assert doc["format"] == "convexity-audit"
    assert doc["n_triples"] == 5 ** 3
    assert doc["max_violation"] >= 0.0
    assert len(doc["curves"][0]["beliefs"]) == 5
    assert "violation" in capsys.readouterr().out


def test_search_best_eval_report_pipeline(tmp_path, capsys):
    manifest = tmp_path / "campaign.json"
    manifest.write_text(json.dumps({
        "env": "tiger", "methods": ["none"], "runs_per_method": 2,
        "seed": 11, "n_mc": 40, "overrides": TINY}))

    search_out = tmp_path / "search"
    assert cli.main(["search", "--manifest", str(manifest),
                     "--out", str(search_out)]) == 0
    assert "search complete" in capsys.readouterr().out
    assert len(read_results(search_out / "search.csv")) == 2
    saved = Campaign.from_manifest(search_out / "campaign.json")
    assert saved.seed == 11 and saved.methods == ("none",)
    best = json.loads((search_out / "best.json").read_text())
    assert best["method"] == "none" and "lr" in best["config"]

    eval_out = tmp_path / "best"
    assert cli.main(["best-eval", "--manifest", str(manifest),
                     "--best", str(search_out / "best.json"),
                     "--seeds", "2", "--out", str(eval_out)]) == 0
    rows = read_results(eval_out / "results.csv")
    assert len(rows) == 2 * 6  # seeds x tiger shift environments
    assert (eval_out / "net_000.json").exists()
    assert (eval_out / "net_001.json").exists()

    report_out = tmp_path / "report"
    assert cli.main(["report", "--results", str(eval_out / "results.csv"),
                     "--out", str(report_out)]) == 0
    lines = (report_out / "summary.csv").read_text().splitlines()
    assert lines[0] == "method,eval_env,n,mean,std,se,median,q1,q3,wlow,whigh,max"
    assert len(lines) == 1 + 6  # one group per eval environment
    assert all(line.startswith("none,tiger:p") for line in lines[1:])

    again = tmp_path / "report2"
    assert cli.main(["report", "--results", str(eval_out / "results.csv"),
                     "--out", str(again)]) == 0
    assert (again / "summary.csv").read_bytes() == \
        (report_out / "summary.csv").read_bytes()


def test_search_flag_overrides_manifest_seed(tmp_path, capsys):
    manifest = tmp_path / "campaign.json"
    manifest.write_text(json.dumps({
        "env": "tiger", "methods": ["none"], "runs_per_method": 1,
        "seed": 11, "n_mc": 20, "overrides": TINY}))
    out = tmp_path / "search"
    assert cli.main(["search", "--manifest", str(manifest), "--seed", "12",
                     "--out", str(out)]) == 0
    assert Campaign.from_manifest(out / "campaign.json").seed == 12


def test_best_eval_rejects_incomplete_best_file(tmp_path, capsys):
    manifest = tmp_path / "campaign.json"
    manifest.write_text(json.dumps({"env": "tiger", "methods": ["none"]}))
    best = tmp_path / "best.json"
    best.write_text(json.dumps({"run_id": 0}))
    rc = cli.main(["best-eval", "--manifest", str(manifest),
                   "--best", str(best), "--out", str(tmp_path / "o")])
    assert rc == 1
    assert "lacks keys" in capsys.readouterr().err


def test_report_missing_file(tmp_path, capsys):
    rc = cli.main(["report", "--results", str(tmp_path / "missing.csv")])
    assert rc == 1
    assert "error:" in capsys.readouterr().err


def test_out_root_env_var(trained, tmp_path, monkeypatch, capsys):
    root = tmp_path / "default_root"
    monkeypatch.setenv(cli.OUT_ROOT_VAR, str(root))
    rc = cli.main(["eval", "--checkpoint", str(trained["net"]),
                   "--n-mc", "10", "--seed", "1"])
    assert rc == 0
    assert (root / "eval.json").exists()


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "convexq.cli", "oracle",
                           "tiger"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "42.105" in proc.stdout
