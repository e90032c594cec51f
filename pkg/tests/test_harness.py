"""Tests for pollwatch.harness — metrics, election simulation, grids and export."""

from dataclasses import replace

import numpy as np
import pytest

from pollwatch import artifacts as art
from pollwatch.baseline1 import Baseline1Report
from pollwatch.detector import predict_poll
from pollwatch.errors import ConfigError, EvaluationError
from pollwatch.fraudinject import FraudLabels, FraudMode
from pollwatch.harness import (
    ExperimentGrid,
    Metrics,
    boundary_bounds,
    evaluate,
    export_boundary_grid,
    measure_poll_error,
    run_experiment,
    simulate_election,
)
from pollwatch.ocsvm import fit_ocsvm
from pollwatch.votecast import Candidate


def _labels(fraudulent):
    fraudulent = np.asarray(fraudulent, dtype=bool)
    return FraudLabels(
        fraudulent=fraudulent,
        affected=fraudulent.astype(int),
        mode=FraudMode.SWITCHING,
        favored=Candidate.A,
        probability=0.5,
        pre_share=0.5,
        post_share=0.55,
        base_votes=10,
    )


def _report(flags):
    flags = np.asarray(flags, dtype=bool)
    n = flags.size
    return Baseline1Report(np.arange(n), np.zeros(n, dtype=int), np.full(n, 0.5), flags, k=1)


# ── Metrics ───────────────────────────────────────────


class TestMetrics:
    """Precision, recall, accuracy and F1 from confusion counts."""

    def test_values(self):
        m = Metrics.from_counts(tp=2, fp=1, fn=1, tn=6)
        assert m.precision == pytest.approx(2 / 3)
        assert m.recall == pytest.approx(2 / 3)
        assert m.accuracy == pytest.approx(0.8)
        assert m.f1 == pytest.approx(2 / 3)
        assert m.n_regions == 10

    def test_nothing_flagged(self):
        m = Metrics.from_counts(tp=0, fp=0, fn=3, tn=7)
        assert m.precision is None
        assert m.recall == 0.0
        assert m.f1 is None

    def test_all_wrong(self):
        m = Metrics.from_counts(tp=0, fp=2, fn=3, tn=5)
        assert m.precision == 0.0
        assert m.f1 == 0.0

    def test_no_fraud(self):
        m = Metrics.from_counts(tp=0, fp=1, fn=0, tn=9)
        assert m.recall is None

    def test_no_regions(self):
        with pytest.raises(EvaluationError):
            Metrics.from_counts(0, 0, 0, 0)


class TestEvaluate:
    """Reports are scored region by region against the labels."""

    def test_confusion_counts(self):
        metrics = evaluate(_report([1, 1, 0, 0, 0]), _labels([1, 0, 1, 0, 0]))
        assert (metrics.tp, metrics.fp, metrics.fn, metrics.tn) == (1, 1, 1, 2)

    def test_region_count_mismatch(self):
        with pytest.raises(EvaluationError):
            evaluate(_report([1, 0, 0]), _labels([1, 0, 0, 0]))


# ── Simulation ────────────────────────────────────────


class TestSimulateElection:
    def test_reproducible(self, small_config, election):
        again = simulate_election(small_config, seed=7)
        assert np.array_equal(again.ballots.vote_a, election.ballots.vote_a)
        assert np.array_equal(again.poll.counts_a, election.poll.counts_a)

    def test_poll_is_noisy(self, election):
        assert election.poll.target_error == 0.02
        assert election.poll.epsilon != 0.0


# ── Experiment grid ───────────────────────────────────


class TestExperimentGrid:
    def test_cells(self):
        grid = ExperimentGrid(levels=(5.0, 20.0), region_fractions=(4.0, 10.0, 16.0),
                              modes=(FraudMode.SWITCHING, FraudMode.DELETION))
        assert len(grid.cells()) == 12

    def test_from_config(self, small_config):
        grid = ExperimentGrid.from_config(small_config)
        assert grid.levels == (20.0,)
        assert grid.seeds == (0, 1)

    def test_empty_axis(self):
        with pytest.raises(ConfigError, match="empty"):
            ExperimentGrid(levels=())

    def test_percentages(self):
        with pytest.raises(ConfigError):
            ExperimentGrid(region_fractions=(150.0,))


class TestRunExperiment:
    """One election per seed; every cell injected into it."""

    def test_rows_and_summary(self, small_config):
        grid = ExperimentGrid.from_config(small_config)
        result = run_experiment(grid, small_config)
        assert result.runs["seed"].tolist() == [0, 1]
        assert (result.runs["error"] == "").all()
        assert (result.runs["n_fraud"] == 2).all()
        summary = result.summary.iloc[0]
        assert summary["n_seeds"] == 2
        assert summary["n_errors"] == 0

    def test_baseline_columns(self, small_config):
        grid = replace(ExperimentGrid.from_config(small_config), seeds=(0,), baseline=True)
        result = run_experiment(grid, small_config)
        assert {"b1_precision", "b1_recall", "b1_flagged"} <= set(result.runs.columns)
        assert "b1_flagged_pct" in result.summary.columns

    def test_worker_count_does_not_change_results(self, small_config):
        grid = ExperimentGrid.from_config(small_config)
        serial = run_experiment(grid, small_config, workers=1)
        parallel = run_experiment(grid, small_config, workers=2)
        assert serial.runs.equals(parallel.runs)

    def test_csv_bytes_match_across_workers(self, small_config, tmp_path):
        grid = replace(ExperimentGrid.from_config(small_config), seeds=(0, 1, 2))
        for workers in (1, 3):
            result = run_experiment(grid, small_config, workers=workers)
            art.write_csv(tmp_path / f"w{workers}" / art.EXPERIMENT_RUNS_CSV, result.runs)
            art.write_csv(tmp_path / f"w{workers}" / art.EXPERIMENT_SUMMARY_CSV, result.summary)
        for name in (art.EXPERIMENT_RUNS_CSV, art.EXPERIMENT_SUMMARY_CSV):
            assert (tmp_path / "w1" / name).read_bytes() == (tmp_path / "w3" / name).read_bytes()

    def test_rows_carry_poll_error(self, small_config):
        grid = replace(ExperimentGrid.from_config(small_config), seeds=(0,))
        result = run_experiment(grid, small_config)
        election = simulate_election(small_config, 0)
        expected = measure_poll_error(election.poll, election.population, election.results)
        assert result.runs["poll_error"].tolist() == [expected]
        assert result.summary.iloc[0]["poll_error"] == pytest.approx(expected)

    def test_region_scope_poll_error(self, small_config):
        cfg = small_config.with_overrides("polling", scope="region")
        grid = replace(ExperimentGrid.from_config(cfg), seeds=(0,))
        result = run_experiment(grid, cfg)
        election = simulate_election(cfg, 0)
        z_hat = predict_poll(election.poll, election.population).z_hat
        expected = float(np.mean(np.abs(z_hat - election.results.share_a)))
        assert result.runs["poll_error"].iloc[0] == pytest.approx(expected)


# ── Boundary export ───────────────────────────────────


class TestBoundaryExport:
    @pytest.fixture
    def model(self):
        return fit_ocsvm(np.random.default_rng(0).normal(0.5, 0.05, (20, 2)), nu=0.1)

    def test_grid_shape_and_values(self, model):
        frame = export_boundary_grid(model, (0.0, 1.0, 0.0, 1.0), resolution=5)
        assert len(frame) == 25
        assert list(frame.columns) == ["x", "y", "decision"]
        points = frame[["x", "y"]].to_numpy()
        assert np.allclose(frame["decision"], model.decision_function(points))

    def test_bounds_cover_support(self, model):
        xmin, xmax, ymin, ymax = boundary_bounds(model, margin=0.1)
        assert xmin < model.support[:, 0].min() and xmax > model.support[:, 0].max()
        assert ymin < model.support[:, 1].min() and ymax > model.support[:, 1].max()

    def test_resolution_must_be_positive(self, model):
        with pytest.raises(ValueError):
            export_boundary_grid(model, (0.0, 1.0, 0.0, 1.0), resolution=0)
