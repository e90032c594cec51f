"""pollwatch — evaluation and experiments.

evaluate() is the only place fraud labels meet a detection report.
run_experiment() sweeps fraud level × share of fraudulent regions × mode over
seeds and summarizes each cell.
"""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from pollwatch.baseline1 import run_baseline1
from pollwatch.config import RunConfig
from pollwatch.detector import DetectorParams, build_design_matrix, predict_poll, run_pipeline
from pollwatch.errors import ConfigError, EvaluationError, PollwatchError
from pollwatch.fraudinject import FraudLabels, FraudMode, FraudSpec, inject_fraud, probability_for_level
from pollwatch.ocsvm import OcSvmModel
from pollwatch.polling import PollTable, draw_poll, inject_poll_noise, poll_error
from pollwatch.popgen import (
    Population,
    assign_desirability,
    assign_mail_in,
    generate_population,
    redistribute,
)
from pollwatch.streams import EXPERIMENT, derive_seed
from pollwatch.votecast import Ballots, Candidate, RegionResults, VoteNetwork, cast_votes, init_vote_network, tally

log = logging.getLogger(__name__)


# ── Metrics ─────────────────────────────────────────────


@dataclass(frozen=True)
class Metrics:
    """Confusion counts over regions. precision / recall / f1 are None when undefined."""

    tp: int
    fp: int
    fn: int
    tn: int
    precision: Optional[float]
    recall: Optional[float]
    accuracy: float
    f1: Optional[float]

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int, tn: int) -> "Metrics":
        n = tp + fp + fn + tn
        if n == 0:
            raise EvaluationError("no regions to evaluate")
        precision = tp / (tp + fp) if tp + fp else None
        recall = tp / (tp + fn) if tp + fn else None
        if precision is None or recall is None:
            f1 = None
        elif precision + recall == 0:
            f1 = 0.0
        else:
            f1 = 2 * precision * recall / (precision + recall)
        return cls(tp, fp, fn, tn, precision, recall, (tp + tn) / n, f1)

    @property
    def n_regions(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def to_dict(self) -> Dict[str, Any]:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "tn": self.tn,
            "precision": self.precision,
            "recall": self.recall,
            "accuracy": self.accuracy,
            "f1": self.f1,
        }


def evaluate(report, labels: FraudLabels) -> Metrics:
    """Confusion counts of a DetectionReport or Baseline1Report against ground truth."""
    region_ids = np.asarray(report.region_ids)
    if region_ids.shape[0] != labels.n_regions or set(region_ids.tolist()) != set(range(labels.n_regions)):
        raise EvaluationError(
            f"report covers {region_ids.shape[0]} regions, labels cover {labels.n_regions}"
        )
    flagged = np.zeros(labels.n_regions, dtype=bool)
    flagged[list(report.flagged_regions)] = True
    truth = labels.fraudulent
    return Metrics.from_counts(
        tp=int((flagged & truth).sum()),
        fp=int((flagged & ~truth).sum()),
        fn=int((~flagged & truth).sum()),
        tn=int((~flagged & ~truth).sum()),
    )


# ── Election simulation ─────────────────────────────────


@dataclass(frozen=True, eq=False)
class Election:
    population: Population
    network: VoteNetwork
    ballots: Ballots
    results: RegionResults
    poll: PollTable


def simulate_population(cfg: RunConfig, seed: int) -> Population:
    sim = cfg.simulation
    population = generate_population(cfg.schema, sim.n_regions, sim.pop_size, seed)
    population = assign_desirability(population, sim.desirability, seed)
    population = redistribute(population, sim.sample_fraction, sim.cap_factor, seed)
    return assign_mail_in(population, sim.mail_in_fraction, sim.mail_in, seed)


def simulate_election(cfg: RunConfig, seed: int) -> Election:
    """Population, votes and the (noisy) poll for one seed. No fraud."""
    sim = cfg.simulation
    population = simulate_population(cfg, seed)
    network = init_vote_network(cfg.schema, sim.dropout_rate, seed, sim.activation)
    ballots = cast_votes(
        population, network, sim.target_share, sim.noise_halfwidth, seed, sim.noise_scale
    )
    poll = draw_poll(population, ballots, cfg.polling.rate, seed)
    poll = inject_poll_noise(poll, cfg.polling.target_error, seed)
    return Election(population, network, ballots, tally(ballots, population), poll)


def measure_poll_error(
    poll: PollTable, population: Population, results: RegionResults, scope: str = "global"
) -> float:
    """poll_error at a scope; region scope first extrapolates the poll to every region."""
    z_hat = predict_poll(poll, population).z_hat if scope == "region" else None
    return poll_error(poll, results, scope, z_hat)


# ── Experiment grid ─────────────────────────────────────


@dataclass(frozen=True)
class ExperimentGrid:
    """levels and region_fractions are percentages."""

    levels: Tuple[float, ...] = (5.0, 12.5, 20.0)
    region_fractions: Tuple[float, ...] = (4.0, 10.0, 16.0)
    modes: Tuple[FraudMode, ...] = (FraudMode.SWITCHING,)
    seeds: Tuple[int, ...] = (0, 1, 2, 3, 4)
    detector: DetectorParams = field(default_factory=DetectorParams)
    baseline: bool = False
    favored: Candidate = Candidate.A

    def __post_init__(self) -> None:
        for name in ("levels", "region_fractions", "modes", "seeds"):
            if not getattr(self, name):
                raise ConfigError(f"experiment grid: {name} is empty")
        if any(not 0 <= v <= 100 for v in self.levels + self.region_fractions):
            raise ConfigError("experiment grid: levels and region fractions are percentages in [0, 100]")

    @classmethod
    def from_config(cls, cfg: RunConfig) -> "ExperimentGrid":
        exp = cfg.experiment
        return cls(
            levels=exp.levels,
            region_fractions=exp.region_fractions,
            modes=exp.modes,
            seeds=exp.seeds,
            detector=cfg.detector,
            baseline=exp.baseline,
            favored=cfg.fraud.favored,
        )

    def cells(self) -> List[Tuple[FraudMode, float, float]]:
        return list(itertools.product(self.modes, self.levels, self.region_fractions))


def _metric_row(prefix: str, metrics: Metrics, n_flagged: int) -> Dict[str, Any]:
    row = {f"{prefix}{k}": v for k, v in metrics.to_dict().items()}
    row[f"{prefix}flagged"] = n_flagged
    return row


def _run_seed(grid: ExperimentGrid, cfg: RunConfig, seed: int) -> List[Dict[str, Any]]:
    rows: List[Dict[str, Any]] = []
    try:
        election = simulate_election(cfg, seed)
        poll_err = measure_poll_error(election.poll, election.population, election.results, cfg.polling.scope)
    except PollwatchError as exc:
        log.error("seed %d: simulation failed: %s", seed, exc)
        return [
            {"seed": seed, "cell": i, "mode": m.value, "level": lv, "region_fraction": fr, "error": str(exc)}
            for i, (m, lv, fr) in enumerate(grid.cells())
        ]

    population = election.population
    favored_share = (
        election.results.global_share if grid.favored is Candidate.A else 1.0 - election.results.global_share
    )
    matrix = build_design_matrix(population) if grid.baseline else None
    params = replace(grid.detector, seed=seed, workers=1)

    for cell, (mode, level, fraction) in enumerate(grid.cells()):
        row: Dict[str, Any] = {
            "seed": seed, "cell": cell, "mode": mode.value, "level": level, "region_fraction": fraction,
            "poll_error": poll_err,
        }
        try:
            n_fraud = int(round(fraction / 100.0 * population.n_regions))
            probability = probability_for_level(level / 100.0, mode, favored_share)
            spec = FraudSpec(
                mode, n_fraud, probability, grid.favored, derive_seed(seed, EXPERIMENT, cell), level / 100.0
            )
            ballots, labels = inject_fraud(election.ballots, population, spec)
            report = run_pipeline(population, ballots, election.poll, params)
            metrics = evaluate(report, labels)
            row.update(
                n_fraud=n_fraud,
                probability=probability,
                realized_level=labels.realized_level,
                k=report.meta.get("k"),
                **_metric_row("", metrics, len(report.flagged_regions)),
            )
            if matrix is not None:
                post = tally(ballots, population)
                b1 = run_baseline1(matrix, post, None, seed=seed, restarts=params.restarts)
                row.update(_metric_row("b1_", evaluate(b1, labels), len(b1.flagged_regions)))
            row["error"] = ""
        except (PollwatchError, ValueError) as exc:
            log.error("seed %d cell %d (%s, %s%%, %s%%FR) failed: %s", seed, cell, mode.value, level, fraction, exc)
            row["error"] = str(exc)
        rows.append(row)
    return rows


def _summarize(runs: pd.DataFrame, n_regions: int, prefixes: Sequence[str]) -> pd.DataFrame:
    keys = ["mode", "level", "region_fraction"]
    out = []
    for key, group in runs.groupby(keys, sort=True):
        ok = group[group["error"] == ""]
        row: Dict[str, Any] = dict(zip(keys, key))
        row["n_seeds"] = int(len(group))
        row["n_errors"] = int(len(group) - len(ok))
        if "poll_error" in group:
            row["poll_error"] = float(pd.to_numeric(group["poll_error"], errors="coerce").mean())
        for prefix in prefixes:
            for metric in ("precision", "recall", "accuracy", "f1"):
                col = f"{prefix}{metric}"
                values = pd.to_numeric(ok[col], errors="coerce") if col in ok else pd.Series(dtype=float)
                excluded = int(values.isna().sum())
                if excluded and metric == "precision":
                    log.info("%s %s: %d seed(s) with undefined precision excluded", key, col, excluded)
                row[col] = float(values.mean()) if values.notna().any() else None
            flagged = ok[f"{prefix}flagged"] if f"{prefix}flagged" in ok else pd.Series(dtype=float)
            tp = ok[f"{prefix}tp"] if f"{prefix}tp" in ok else pd.Series(dtype=float)
            row[f"{prefix}flagged_pct"] = float(flagged.mean() / n_regions * 100) if len(flagged) else None
            row[f"{prefix}tp_pct"] = float(tp.mean() / n_regions * 100) if len(tp) else None
        out.append(row)
    return pd.DataFrame(out)


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    runs: pd.DataFrame
    summary: pd.DataFrame


def run_experiment(grid: ExperimentGrid, cfg: RunConfig, workers: int = 1) -> ExperimentResult:
    """One election per seed, every grid cell injected into it. Rows are ordered by
    (seed, cell) whatever the worker count."""
    seeds = sorted(set(grid.seeds))
    if workers > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            batches = list(pool.map(_run_seed, [grid] * len(seeds), [cfg] * len(seeds), seeds))
    else:
        batches = [_run_seed(grid, cfg, s) for s in seeds]

    runs = pd.DataFrame([row for batch in batches for row in batch])
    runs = runs.sort_values(["seed", "cell"], kind="stable").reset_index(drop=True)
    prefixes = ["", "b1_"] if grid.baseline else [""]
    summary = _summarize(runs, cfg.simulation.n_regions, prefixes)
    return ExperimentResult(runs, summary)


# ── Decision boundary export ────────────────────────────


def boundary_bounds(model: OcSvmModel, margin: float = 0.1) -> Tuple[float, float, float, float]:
    lo = model.support.min(axis=0) - margin
    hi = model.support.max(axis=0) + margin
    return float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1])


def export_boundary_grid(
    model: OcSvmModel, bounds: Tuple[float, float, float, float], resolution: int = 100
) -> pd.DataFrame:
    """decision() over a resolution × resolution grid on (xmin, xmax, ymin, ymax)."""
    if resolution < 1:
        raise ValueError("resolution must be at least 1")
    xmin, xmax, ymin, ymax = bounds
    if xmax < xmin or ymax < ymin:
        raise ValueError(f"bounds {bounds} are inverted")
    xs = np.linspace(xmin, xmax, resolution)
    ys = np.linspace(ymin, ymax, resolution)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    points = np.column_stack([gx.ravel(), gy.ravel()])
    return pd.DataFrame(
        {"x": points[:, 0], "y": points[:, 1], "decision": model.decision_function(points)}
    )
