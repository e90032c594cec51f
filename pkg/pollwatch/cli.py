"""pollwatch — Click-based command interface.

Each command reads the previous step's files from --out and writes its own,
so a run directory builds up as: generate -> poll -> fraud -> detect / baseline1
-> evaluate. `experiment` runs whole grids in memory.
"""

import logging
import sys
import unicodedata
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path

import click

from pollwatch import artifacts as art
from pollwatch import db
from pollwatch.baseline1 import DensityParams, run_baseline1
from pollwatch.config import WORKERS, load_config
from pollwatch.detector import EMBEDDINGS, build_design_matrix, run_pipeline
from pollwatch.errors import ConfigError, PollwatchError
from pollwatch.fraudinject import FraudMode, FraudSpec, fraud_significance, inject_fraud, probability_for_level
from pollwatch.harness import (
    ExperimentGrid,
    boundary_bounds,
    evaluate,
    export_boundary_grid,
    measure_poll_error,
    run_experiment,
    simulate_population,
)
from pollwatch.polling import POLL_SCOPES, draw_poll, inject_poll_noise
from pollwatch.votecast import Candidate, cast_votes, init_vote_network, tally

# ANSI colors
R = "\033[0;31m"
G = "\033[0;32m"
Y = "\033[1;33m"
C = "\033[0;36m"
B = "\033[1m"
N = "\033[0m"


def _char_width(ch):
    """Return display width of a character (2 for wide/fullwidth, 1 otherwise)."""
    w = unicodedata.east_asian_width(ch)
    return 2 if w in ("F", "W") else 1


def _str_width(s):
    return sum(_char_width(ch) for ch in s)


def print_columnar(rows, columns):
    """Print rows as aligned columns. columns is a list of (header, key) tuples."""
    if not rows:
        return
    data = [dict(r) for r in rows]
    widths = {}
    for header, key in columns:
        vals = [str(v) if (v := d.get(key)) is not None else "" for d in data]
        widths[key] = max(
            _str_width(header), max((_str_width(v) for v in vals), default=0)
        )
    hdr = "  ".join(h.ljust(widths[k]) for h, k in columns)
    click.echo(hdr)
    click.echo("  ".join("-" * widths[k] for _, k in columns))
    for d in data:
        parts = []
        for _, k in columns:
            val = str(v) if (v := d.get(k)) is not None else ""
            pad = widths[k] - _str_width(val)
            parts.append(val + " " * pad)
        click.echo("  ".join(parts))


def _fmt(value, digits=4):
    return "n/a" if value is None else f"{value:.{digits}f}"


# ── Ledger plumbing ─────────────────────────────────────


@contextmanager
def _ledger(command, seed=None, out_dir="", config_path=""):
    """Record the command in the run ledger; report PollwatchError in red and exit 1."""
    with db.get_db() as conn:
        _, run_id = db.start_run(conn, command, seed, out_dir, config_path or "")
    try:
        yield run_id
    except (PollwatchError, ValueError) as exc:
        with db.get_db() as conn:
            db.finish_run(conn, run_id, "failed", str(exc))
        click.echo(f"{R}Error:{N} {exc}", err=True)
        sys.exit(1)
    manifest = Path(out_dir) / art.MANIFEST_JSON if out_dir else ""
    with db.get_db() as conn:
        db.finish_run(conn, run_id, "done", manifest=manifest)


def _activity(run_id, action, detail="", meta=None):
    with db.get_db() as conn:
        db.log_activity(conn, run_id, action, detail, meta)


def _require(out, *names):
    missing = [n for n in names if not (Path(out) / n).exists()]
    if missing:
        raise ConfigError(f"{out}: missing {', '.join(missing)}; run the earlier steps first")


def _config_option(f):
    return click.option(
        "--config",
        "config_path",
        type=click.Path(exists=True, dir_okay=False),
        default=None,
        help="Run config YAML (default: $POLLWATCH_CONFIG or bundled census config)",
    )(f)


def _seed_option(f):
    return click.option("--seed", type=click.IntRange(min=0), default=0, show_default=True, help="Master seed")(f)


def _out_option(f):
    return click.option(
        "--out", type=click.Path(file_okay=False), default="run", show_default=True, help="Run directory"
    )(f)


@click.group(invoke_without_command=True)
@click.option("-v", "--verbose", is_flag=True, help="Debug logging")
@click.pass_context
def cli(ctx, verbose):
    """pollwatch: synthetic elections and regional fraud detection"""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if ctx.invoked_subcommand is None:
        click.echo(ctx.get_help())
        return
    if ctx.invoked_subcommand != "help" and not Path(db.DB_PATH).exists():
        db.init_db()


# ── Simulation ──────────────────────────────────────────


@cli.command()
@_config_option
@_seed_option
@_out_option
@click.option("--regions", type=click.IntRange(min=1), default=None, help="Number of regions")
@click.option("--pop", "pop_size", type=click.IntRange(min=1), default=None, help="Population size")
@click.option("--target", "target_share", type=click.FloatRange(0, 1), default=None, help="Target share for A")
def generate(config_path, seed, out, regions, pop_size, target_share):
    """Generate a population and cast its votes"""
    with _ledger("generate", seed, out, config_path) as run_id:
        cfg = load_config(config_path).with_overrides(
            "simulation", n_regions=regions, pop_size=pop_size, target_share=target_share
        )
        sim = cfg.simulation
        population = simulate_population(cfg, seed)
        _activity(run_id, "population", f"{population.size} individuals in {population.n_regions} regions")
        network = init_vote_network(cfg.schema, sim.dropout_rate, seed, sim.activation)
        ballots = cast_votes(population, network, sim.target_share, sim.noise_halfwidth, seed, sim.noise_scale)
        results = tally(ballots, population)

        art.write_population(out, population)
        art.write_ballots(Path(out) / art.BALLOTS_CSV, ballots, population)
        art.write_results(Path(out) / art.RESULTS_CSV, results)
        art.update_manifest(
            out,
            "generate",
            {
                "seed": seed,
                "config": cfg.to_dict(),
                "threshold": ballots.threshold,
                "target_share": ballots.target_share,
                "noise_halfwidth": ballots.noise_halfwidth,
                "election_result": results.global_share,
            },
        )
        _activity(run_id, "votes", meta={"threshold": ballots.threshold, "er": results.global_share})
    click.echo(
        f"{G}Generated{N} {population.size} individuals in {population.n_regions} regions"
        f", ER {results.global_share:.4f} -> {out}"
    )


@cli.command()
@_config_option
@_seed_option
@_out_option
@click.option("--rate", type=click.FloatRange(0, 1, min_open=True, max_open=True), default=None, help="Share polled")
@click.option("--target-error", type=click.FloatRange(min=0), default=None, help="Mean poll error to inject")
@click.option("--scope", type=click.Choice(POLL_SCOPES), default=None, help="Measure poll error globally or per region")
def poll(config_path, seed, out, rate, target_error, scope):
    """Poll the generated population (before any fraud)"""
    with _ledger("poll", seed, out, config_path) as run_id:
        cfg = load_config(config_path).with_overrides("polling", rate=rate, target_error=target_error, scope=scope)
        _require(out, art.POPULATION_CSV, art.BALLOTS_CSV, art.RESULTS_CSV)
        manifest = art.read_manifest(out)
        population = art.read_population(out)
        ballots = art.read_ballots(Path(out) / art.BALLOTS_CSV, population, manifest.get("generate"))
        results = art.read_results(Path(out) / art.RESULTS_CSV)
        table = draw_poll(population, ballots, cfg.polling.rate, seed)
        clean_share = table.share_a
        table = inject_poll_noise(table, cfg.polling.target_error, seed)
        error = measure_poll_error(table, population, results, cfg.polling.scope)
        art.write_poll(out, table)
        art.update_manifest(
            out,
            "poll",
            {
                "seed": seed,
                "rate": cfg.polling.rate,
                "target_error": cfg.polling.target_error,
                "scope": cfg.polling.scope,
                "respondents": table.respondents,
                "share_before_noise": clean_share,
                "poll_share": table.share_a,
                "poll_error": error,
            },
        )
        _activity(run_id, "poll", f"{table.respondents} respondents", {"error": error})
    click.echo(
        f"{G}Polled{N} {table.respondents} respondents: poll {table.share_a:.4f},"
        f" ER {results.global_share:.4f}, error {error:.4f}"
    )


@cli.command()
@_config_option
@_seed_option
@_out_option
@click.option("--mode", type=click.Choice([m.value for m in FraudMode]), default=None, help="Fraud mode")
@click.option("--regions", type=click.IntRange(min=0), default=None, help="Number of fraudulent regions")
@click.option("--prob", "probability", type=click.FloatRange(0, 1), default=None, help="Per-ballot probability")
@click.option("--level", type=click.FloatRange(0, 100), default=None, help="Fraud level in percent (overrides --prob)")
@click.option("--favored", type=click.Choice([c.value for c in Candidate]), default=None, help="Favored candidate")
def fraud(config_path, seed, out, mode, regions, probability, level, favored):
    """Inject labeled fraud into the generated ballots"""
    with _ledger("fraud", seed, out, config_path) as run_id:
        cfg = load_config(config_path).with_overrides(
            "fraud",
            mode=FraudMode(mode) if mode else None,
            regions=regions,
            probability=probability,
            favored=Candidate(favored) if favored else None,
        )
        _require(out, art.POPULATION_CSV, art.BALLOTS_CSV, art.RESULTS_CSV)
        manifest = art.read_manifest(out)
        population = art.read_population(out)
        ballots = art.read_ballots(Path(out) / art.BALLOTS_CSV, population, manifest.get("generate"))
        pre = art.read_results(Path(out) / art.RESULTS_CSV)
        fc = cfg.fraud
        p = fc.probability
        if level is not None:
            favored_share = pre.global_share if fc.favored is Candidate.A else 1.0 - pre.global_share
            p = probability_for_level(level / 100.0, fc.mode, favored_share)
        spec = FraudSpec(fc.mode, fc.regions, p, fc.favored, seed, None if level is None else level / 100.0)
        fraud_ballots, labels = inject_fraud(ballots, population, spec)
        post = tally(fraud_ballots, population)
        significance = fraud_significance(labels, pre, post) if labels.fraud_regions.size else None

        art.write_ballots(Path(out) / art.BALLOTS_FRAUD_CSV, fraud_ballots, population)
        art.write_results(Path(out) / art.RESULTS_FRAUD_CSV, post)
        art.write_labels(Path(out) / art.LABELS_CSV, labels)
        art.update_manifest(
            out,
            "fraud",
            {
                **spec.to_dict(),
                "pre_share": labels.pre_share,
                "post_share": labels.post_share,
                "base_votes": labels.base_votes,
                "affected_votes": int(labels.affected.sum()),
                "realized_level": labels.realized_level,
                "significance": significance,
            },
        )
        _activity(run_id, "fraud", f"{spec.mode.value} in {spec.n_fraud_regions} regions", spec.to_dict())
        poll_share = manifest.get("poll", {}).get("poll_share")

    click.echo(f"{G}Injected{N} {spec.mode.value} fraud (p={p:.4f}) → {out}")
    print_columnar(
        [
            {
                "er": _fmt(pre.global_share, 3),
                "poll": _fmt(poll_share, 3),
                "fraud": _fmt(post.global_share, 3),
                "sig": f"{round(significance * labels.fraud_regions.size)}/{labels.fraud_regions.size}"
                if significance is not None
                else "n/a",
            }
        ],
        [("ER", "er"), ("Poll", "poll"), ("ER w/ fraud", "fraud"), ("Sig. of fraud", "sig")],
    )


# ── Detection ───────────────────────────────────────────


def _election_files(out):
    """Population plus the post-fraud ballots when fraud was injected."""
    _require(out, art.POPULATION_CSV, art.BALLOTS_CSV)
    manifest = art.read_manifest(out)
    population = art.read_population(out)
    name = art.BALLOTS_FRAUD_CSV if (Path(out) / art.BALLOTS_FRAUD_CSV).exists() else art.BALLOTS_CSV
    ballots = art.read_ballots(Path(out) / name, population, manifest.get("generate"))
    return population, ballots, name


@cli.command()
@_config_option
@_seed_option
@_out_option
@click.option("--nu", type=click.FloatRange(0, 1, min_open=True), default=None, help="One-class SVM nu")
@click.option("--gamma", type=click.FloatRange(0, min_open=True), default=None, help="RBF width (default from the pooled (ŷ, ẑ) variance)")
@click.option("--k", type=click.IntRange(min=1), default=None, help="Clusters (default: silhouette)")
@click.option("--restarts", type=click.IntRange(min=1), default=None, help="k-means restarts")
@click.option("--embedding", type=click.Choice(EMBEDDINGS), default=None, help="Test-point construction")
@click.option("--per-cluster-regression", is_flag=True, default=None, help="Fit one regression per cluster")
def detect(config_path, seed, out, nu, gamma, k, restarts, embedding, per_cluster_regression):
    """Flag anomalous regions"""
    with _ledger("detect", seed, out, config_path) as run_id:
        cfg = load_config(config_path)
        params = replace(
            cfg.detector,
            seed=seed,
            nu=nu if nu is not None else cfg.detector.nu,
            gamma=gamma if gamma is not None else cfg.detector.gamma,
            k=k if k is not None else cfg.detector.k,
            restarts=restarts or cfg.detector.restarts,
            embedding=embedding or cfg.detector.embedding,
            per_cluster_regression=per_cluster_regression or cfg.detector.per_cluster_regression,
        )
        population, ballots, source = _election_files(out)
        _require(out, art.POLL_CSV)
        table = art.read_poll(out, population.schema)
        report = run_pipeline(population, ballots, table, params)
        art.write_report(out, report)
        art.update_manifest(out, "detect", {"ballots": source, **params.to_dict(), "k_used": report.meta["k"]})
        _activity(run_id, "detect", f"{len(report.flagged_regions)} flagged", {"k": report.meta["k"]})

    flagged = report.flagged_regions
    click.echo(f"{G}Scored{N} {len(report.region_ids)} regions in {report.meta['k']} clusters, {len(flagged)} flagged")
    frame = report.to_frame()
    rows = [
        {
            "region": int(r.region_id),
            "cluster": int(r.cluster),
            "y_hat": f"{r.y_hat:.4f}",
            "z_hat": f"{r.z_hat:.4f}",
            "actual": f"{r.actual:.4f}",
            "decision": f"{r.decision:.4g}",
        }
        for r in frame[frame["flagged"] == 1].itertuples()
    ]
    print_columnar(
        rows,
        [("Region", "region"), ("Cluster", "cluster"), ("ŷ", "y_hat"), ("ẑ", "z_hat"), ("Actual", "actual"), ("f", "decision")],
    )


@cli.command()
@_config_option
@_seed_option
@_out_option
@click.option("--k", type=click.IntRange(min=1), default=None, help="Clusters (default: silhouette)")
@click.option("--eps", type=click.FloatRange(0, min_open=True), default=None, help="Density radius (default per cluster)")
@click.option("--min-pts", type=click.IntRange(min=1), default=3, show_default=True, help="Density min points")
@click.option("--restarts", type=click.IntRange(min=1), default=None, help="k-means restarts")
def baseline1(config_path, seed, out, k, eps, min_pts, restarts):
    """Flag regions with the demographic-clustering + density comparator"""
    with _ledger("baseline1", seed, out, config_path) as run_id:
        cfg = load_config(config_path)
        population, ballots, source = _election_files(out)
        results = tally(ballots, population)
        report = run_baseline1(
            build_design_matrix(population),
            results,
            k or cfg.detector.k,
            DensityParams(eps=eps, min_pts=min_pts),
            seed,
            restarts or cfg.detector.restarts,
        )
        art.write_baseline1(Path(out) / art.BASELINE1_CSV, report)
        art.update_manifest(
            out, "baseline1", {"ballots": source, "seed": seed, "k": report.k, "eps": eps, "min_pts": min_pts}
        )
        _activity(run_id, "baseline1", f"{len(report.flagged_regions)} flagged")
    click.echo(f"{G}Baseline1{N} k={report.k}, {len(report.flagged_regions)} flagged: {report.flagged_regions}")


@cli.command("evaluate")
@_out_option
@click.option("--report", "which", type=click.Choice(["detect", "baseline1"]), default="detect", show_default=True)
def evaluate_cmd(out, which):
    """Score a report against the fraud labels"""
    with _ledger("evaluate", None, out) as run_id:
        _require(out, art.LABELS_CSV)
        labels = art.read_labels(Path(out) / art.LABELS_CSV, art.read_manifest(out).get("fraud"))
        if which == "detect":
            _require(out, art.REPORT_CSV)
            report = art.read_report(out)
        else:
            _require(out, art.BASELINE1_CSV)
            report = art.read_baseline1(Path(out) / art.BASELINE1_CSV)
        metrics = evaluate(report, labels)
        metrics_path = Path(out) / art.METRICS_JSON
        existing = art.read_json(metrics_path) if metrics_path.exists() else {}
        art.write_json(metrics_path, {**existing, which: metrics.to_dict()})
        _activity(run_id, "evaluate", which, metrics.to_dict())
    click.echo(f"{B}{which}{N}  TP {metrics.tp}  FP {metrics.fp}  FN {metrics.fn}  TN {metrics.tn}")
    click.echo(
        f"  precision {_fmt(metrics.precision)}  recall {_fmt(metrics.recall)}"
        f"  accuracy {_fmt(metrics.accuracy)}  f1 {_fmt(metrics.f1)}"
    )


# ── Experiments & export ────────────────────────────────


@cli.command()
@_config_option
@_out_option
@click.option("--seeds", type=click.IntRange(min=1), default=None, help="Seeds per cell (0..n-1)")
@click.option("--workers", type=click.IntRange(min=1), default=WORKERS, show_default=True, help="Worker processes")
@click.option("--baseline", is_flag=True, default=None, help="Also run baseline1 on every cell")
def experiment(config_path, out, seeds, workers, baseline):
    """Run the fraud level × fraud-region grid"""
    with _ledger("experiment", None, out, config_path) as run_id:
        cfg = load_config(config_path).with_overrides(
            "experiment", seeds=tuple(range(seeds)) if seeds else None, baseline=True if baseline else None
        )
        grid = ExperimentGrid.from_config(cfg)
        result = run_experiment(grid, cfg, workers)
        art.write_csv(Path(out) / art.EXPERIMENT_RUNS_CSV, result.runs)
        art.write_csv(Path(out) / art.EXPERIMENT_SUMMARY_CSV, result.summary)
        art.update_manifest(out, "experiment", {"config": cfg.to_dict(), "cells": len(grid.cells())})
        failures = int((result.runs["error"] != "").sum())
        _activity(run_id, "experiment", f"{len(result.runs)} runs, {failures} failed")

    if failures:
        click.echo(f"{Y}{failures} run(s) failed; see the error column{N}", err=True)
    rows = []
    for r in result.summary.to_dict("records"):
        row = {
            "mode": r["mode"],
            "level": r["level"],
            "fr": r["region_fraction"],
            "precision": _fmt(r.get("precision"), 3),
            "recall": _fmt(r.get("recall"), 3),
            "f1": _fmt(r.get("f1"), 3),
            "pair": f"{_fmt(r.get('flagged_pct'), 2)} / {_fmt(r.get('tp_pct'), 2)}",
        }
        if grid.baseline:
            row["b1"] = f"{_fmt(r.get('b1_flagged_pct'), 2)} / {_fmt(r.get('b1_tp_pct'), 2)}"
        rows.append(row)
    columns = [
        ("Mode", "mode"), ("Level%", "level"), ("%FR", "fr"), ("Precision", "precision"),
        ("Recall", "recall"), ("F1", "f1"), ("Flagged% / TP%", "pair"),
    ]
    if grid.baseline:
        columns.append(("Baseline1", "b1"))
    print_columnar(rows, columns)


@cli.command()
@_out_option
@click.option("--cluster", type=click.IntRange(min=0), default=0, show_default=True, help="Cluster model to export")
@click.option("--resolution", type=int, default=100, show_default=True, help="Grid points per axis")
@click.option("--margin", type=click.FloatRange(min=0), default=0.1, show_default=True, help="Padding around support points")
def boundary(out, cluster, resolution, margin):
    """Export one cluster's decision function over a grid"""
    with _ledger("boundary", None, out) as run_id:
        _require(out, art.MODELS_JSON)
        models = art.read_models(Path(out) / art.MODELS_JSON)
        if cluster not in models:
            raise ConfigError(f"no model for cluster {cluster} (have {sorted(models)})")
        model = models[cluster]
        bounds = boundary_bounds(model, margin)
        grid = export_boundary_grid(model, bounds, resolution)
        art.write_csv(Path(out) / art.BOUNDARY_CSV, grid)
        art.update_manifest(out, "boundary", {"cluster": cluster, "resolution": resolution, "bounds": list(bounds)})
        _activity(run_id, "boundary", f"cluster {cluster}, {len(grid)} points")
    click.echo(f"{G}Exported{N} {len(grid)} grid points for cluster {cluster} → {Path(out) / art.BOUNDARY_CSV}")


# ── Ledger ──────────────────────────────────────────────


@cli.command()
@click.option("--command", "command", default=None, help="Filter by command")
@click.option("--status", type=click.Choice(db.RUN_STATUSES), default=None, help="Filter by status")
@click.option("-n", "--limit", type=click.IntRange(min=1), default=20, show_default=True)
def history(command, status, limit):
    """List recent runs"""
    with db.get_db() as conn:
        rows = db.list_runs(conn, command, status, limit)
    if not rows:
        click.echo("No runs.")
        return
    print_columnar(
        rows,
        [
            ("ID", "id"),
            ("Command", "command"),
            ("Seed", "seed"),
            ("Out", "out_dir"),
            ("Status", "status"),
            ("Started", "started_at"),
        ],
    )


@cli.command()
@click.argument("run_id", type=int)
def show(run_id):
    """Show a run and its activity"""
    with db.get_db() as conn:
        ok, run = db.get_run(conn, run_id)
        activity = db.get_run_activity(conn, run_id) if ok else []
    if not ok:
        click.echo(f"{R}{run}{N}", err=True)
        sys.exit(1)
    color = {"done": G, "failed": R}.get(run["status"], Y)
    click.echo(f"{B}#{run['id']} {run['command']}{N}")
    click.echo(f"  Status:   {color}{run['status']}{N}")
    if run["seed"] is not None:
        click.echo(f"  Seed:     {run['seed']}")
    if run["out_dir"]:
        click.echo(f"  Out:      {run['out_dir']}")
    if run["config_path"]:
        click.echo(f"  Config:   {run['config_path']}")
    if run["manifest"]:
        click.echo(f"  Manifest: {run['manifest']}")
    if run["detail"]:
        click.echo(f"  Detail:   {run['detail']}")
    click.echo(f"  Started:  {run['started_at']}")
    if run["finished_at"]:
        click.echo(f"  Finished: {run['finished_at']}")
    if activity:
        click.echo(f"\n{C}Activity:{N}")
        for a in activity:
            meta = f" {a['meta']}" if a["meta"] else ""
            click.echo(f"  [{a['created_at']}] {a['action']}: {a['detail']}{meta}")


@cli.command("help")
@click.pass_context
def help_cmd(ctx):
    """Show help"""
    click.echo(ctx.parent.get_help())
