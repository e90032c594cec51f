"""Tests for pollwatch.cli — Click command interface.

Tests use Click's CliRunner to invoke commands in-process against the
small config, building one run directory step by step.
"""

import json
from unittest.mock import patch

import pandas as pd
import pytest

from pollwatch import artifacts as art
from pollwatch import db
from pollwatch.cli import cli


def _invoke(cli_env, args):
    """Helper: invoke CLI command with isolated temp DB."""
    runner, db_path, env = cli_env
    with patch.object(db, "DB_PATH", db_path):
        return runner.invoke(cli, args, env=env, catch_exceptions=False)


def _runs(cli_env):
    _, db_path, _ = cli_env
    with patch.object(db, "DB_PATH", db_path):
        with db.get_db() as conn:
            return [dict(r) for r in db.list_runs(conn)]


@pytest.fixture
def run_dir(tmp_path):
    return str(tmp_path / "run")


def _generate(cli_env, config_file, run_dir, *extra):
    return _invoke(cli_env, ["generate", "--config", config_file, "--seed", "3", "--out", run_dir, *extra])


def _through_fraud(cli_env, config_file, run_dir):
    _generate(cli_env, config_file, run_dir)
    _invoke(cli_env, ["poll", "--config", config_file, "--seed", "3", "--out", run_dir])
    return _invoke(
        cli_env,
        ["fraud", "--config", config_file, "--seed", "3", "--out", run_dir, "--mode", "switching", "--prob", "1.0"],
    )


# ── Help ──────────────────────────────────────────────


class TestHelp:
    def test_lists_commands(self, cli_env):
        result = _invoke(cli_env, ["help"])
        assert result.exit_code == 0
        for name in ("generate", "poll", "fraud", "detect", "baseline1", "evaluate", "experiment"):
            assert name in result.output


# ── Simulation ────────────────────────────────────────


class TestGenerateCommand:
    """'pollwatch generate' writes population, ballots and results."""

    def test_writes_files(self, cli_env, config_file, run_dir, tmp_path):
        result = _generate(cli_env, config_file, run_dir)
        assert result.exit_code == 0
        assert "Generated" in result.output
        for name in (art.POPULATION_CSV, art.BALLOTS_CSV, art.RESULTS_CSV, art.MANIFEST_JSON):
            assert (tmp_path / "run" / name).exists()

    def test_flags_override_config(self, cli_env, config_file, run_dir, tmp_path):
        _generate(cli_env, config_file, run_dir, "--regions", "10", "--pop", "1000")
        results = pd.read_csv(tmp_path / "run" / art.RESULTS_CSV)
        assert len(results) == 10
        assert results["total"].sum() == 1000

    def test_records_run(self, cli_env, config_file, run_dir):
        _generate(cli_env, config_file, run_dir)
        runs = _runs(cli_env)
        assert runs[0]["command"] == "generate"
        assert runs[0]["status"] == "done"
        assert runs[0]["seed"] == 3

    def test_same_seed_same_files(self, cli_env, config_file, tmp_path):
        _generate(cli_env, config_file, str(tmp_path / "a"))
        _generate(cli_env, config_file, str(tmp_path / "b"))
        a = (tmp_path / "a" / art.BALLOTS_CSV).read_text()
        assert a == (tmp_path / "b" / art.BALLOTS_CSV).read_text()


class TestPollCommand:
    def test_writes_poll(self, cli_env, config_file, run_dir, tmp_path):
        _generate(cli_env, config_file, run_dir)
        result = _invoke(cli_env, ["poll", "--config", config_file, "--out", run_dir, "--rate", "0.05"])
        assert result.exit_code == 0
        assert "Polled" in result.output
        manifest = json.loads((tmp_path / "run" / art.MANIFEST_JSON).read_text())
        assert manifest["poll"]["respondents"] == 200

    def test_region_scope(self, cli_env, config_file, run_dir, tmp_path):
        _generate(cli_env, config_file, run_dir)
        result = _invoke(cli_env, ["poll", "--config", config_file, "--out", run_dir, "--scope", "region"])
        assert result.exit_code == 0
        manifest = json.loads((tmp_path / "run" / art.MANIFEST_JSON).read_text())
        assert manifest["poll"]["scope"] == "region"
        assert 0.0 <= manifest["poll"]["poll_error"] <= 1.0

    def test_reads_generated_results(self, cli_env, config_file, run_dir, tmp_path):
        _generate(cli_env, config_file, run_dir)
        (tmp_path / "run" / art.RESULTS_CSV).unlink()
        result = _invoke(cli_env, ["poll", "--config", config_file, "--out", run_dir])
        assert result.exit_code == 1
        assert art.RESULTS_CSV in result.output

    def test_needs_population(self, cli_env, config_file, run_dir):
        result = _invoke(cli_env, ["poll", "--config", config_file, "--out", run_dir])
        assert result.exit_code == 1
        assert "run the earlier steps first" in result.output
        assert _runs(cli_env)[0]["status"] == "failed"


class TestFraudCommand:
    """'pollwatch fraud' injects labeled fraud and prints the summary table."""

    def test_summary_table(self, cli_env, config_file, run_dir, tmp_path):
        result = _through_fraud(cli_env, config_file, run_dir)
        assert result.exit_code == 0
        assert "ER w/ fraud" in result.output
        assert "Sig. of fraud" in result.output
        labels = pd.read_csv(tmp_path / "run" / art.LABELS_CSV)
        assert labels["fraudulent"].sum() == 3

    def test_level_sets_probability(self, cli_env, config_file, run_dir, tmp_path):
        _generate(cli_env, config_file, run_dir)
        result = _invoke(cli_env, ["fraud", "--config", config_file, "--out", run_dir, "--level", "10"])
        assert result.exit_code == 0
        manifest = json.loads((tmp_path / "run" / art.MANIFEST_JSON).read_text())
        assert manifest["fraud"]["requested_level"] == pytest.approx(0.1)
        assert 0.1 < manifest["fraud"]["probability"] < 1.0

    def test_too_many_regions(self, cli_env, config_file, run_dir):
        _generate(cli_env, config_file, run_dir)
        result = _invoke(cli_env, ["fraud", "--config", config_file, "--out", run_dir, "--regions", "50"])
        assert result.exit_code == 1
        assert "Error:" in result.output


# ── Detection ─────────────────────────────────────────


class TestDetectAndEvaluate:
    """detect / baseline1 score the post-fraud ballots; evaluate compares with labels."""

    def test_full_run(self, cli_env, config_file, run_dir, tmp_path):
        _through_fraud(cli_env, config_file, run_dir)
        result = _invoke(cli_env, ["detect", "--config", config_file, "--out", run_dir])
        assert result.exit_code == 0
        assert "Scored 20 regions" in result.output

        result = _invoke(cli_env, ["evaluate", "--out", run_dir])
        assert result.exit_code == 0
        assert "precision" in result.output
        metrics = json.loads((tmp_path / "run" / art.METRICS_JSON).read_text())
        assert metrics["detect"]["tp"] + metrics["detect"]["fn"] == 3
        assert sum(metrics["detect"][k] for k in ("tp", "fp", "fn", "tn")) == 20

    def test_detect_uses_fraud_ballots(self, cli_env, config_file, run_dir, tmp_path):
        _through_fraud(cli_env, config_file, run_dir)
        _invoke(cli_env, ["detect", "--config", config_file, "--out", run_dir])
        manifest = json.loads((tmp_path / "run" / art.MANIFEST_JSON).read_text())
        assert manifest["detect"]["ballots"] == art.BALLOTS_FRAUD_CSV

    def test_baseline1_then_evaluate(self, cli_env, config_file, run_dir, tmp_path):
        _through_fraud(cli_env, config_file, run_dir)
        result = _invoke(cli_env, ["baseline1", "--config", config_file, "--out", run_dir, "--k", "2"])
        assert result.exit_code == 0
        result = _invoke(cli_env, ["evaluate", "--out", run_dir, "--report", "baseline1"])
        assert result.exit_code == 0
        metrics = json.loads((tmp_path / "run" / art.METRICS_JSON).read_text())
        assert set(metrics) == {"baseline1"}

    def test_detect_needs_poll(self, cli_env, config_file, run_dir):
        _generate(cli_env, config_file, run_dir)
        result = _invoke(cli_env, ["detect", "--config", config_file, "--out", run_dir])
        assert result.exit_code == 1
        assert art.POLL_CSV in result.output

    def test_boundary_export(self, cli_env, config_file, run_dir, tmp_path):
        _through_fraud(cli_env, config_file, run_dir)
        _invoke(cli_env, ["detect", "--config", config_file, "--out", run_dir])
        result = _invoke(cli_env, ["boundary", "--out", run_dir, "--resolution", "4"])
        assert result.exit_code == 0
        grid = pd.read_csv(tmp_path / "run" / art.BOUNDARY_CSV)
        assert len(grid) == 16

    def test_boundary_unknown_cluster(self, cli_env, config_file, run_dir):
        _through_fraud(cli_env, config_file, run_dir)
        _invoke(cli_env, ["detect", "--config", config_file, "--out", run_dir])
        result = _invoke(cli_env, ["boundary", "--out", run_dir, "--cluster", "99"])
        assert result.exit_code == 1
        assert "no model for cluster 99" in result.output


class TestExperimentCommand:
    def test_writes_tables(self, cli_env, config_file, run_dir, tmp_path):
        result = _invoke(cli_env, ["experiment", "--config", config_file, "--out", run_dir, "--seeds", "1"])
        assert result.exit_code == 0
        assert "Flagged% / TP%" in result.output
        runs = pd.read_csv(tmp_path / "run" / art.EXPERIMENT_RUNS_CSV)
        assert len(runs) == 1
        assert (tmp_path / "run" / art.EXPERIMENT_SUMMARY_CSV).exists()


# ── Ledger ────────────────────────────────────────────


class TestHistoryAndShow:
    def test_history_lists_runs(self, cli_env, config_file, run_dir):
        _generate(cli_env, config_file, run_dir)
        result = _invoke(cli_env, ["history"])
        assert result.exit_code == 0
        assert "generate" in result.output
        assert "done" in result.output

    def test_history_empty(self, cli_env):
        result = _invoke(cli_env, ["history"])
        assert "No runs." in result.output

    def test_show_run(self, cli_env, config_file, run_dir):
        _generate(cli_env, config_file, run_dir)
        result = _invoke(cli_env, ["show", "1"])
        assert result.exit_code == 0
        assert "#1 generate" in result.output
        assert "run_started" in result.output
        assert "population" in result.output

    def test_show_missing(self, cli_env):
        result = _invoke(cli_env, ["show", "7"])
        assert result.exit_code == 1
