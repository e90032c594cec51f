"""pollwatch — run-directory files.

Every tabular artifact is a UTF-8 CSV with a header row (pandas); metadata goes
to JSON sidecars and manifest.json. Readers rebuild the in-memory types so each
CLI step can start from the previous step's files.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

import numpy as np
import pandas as pd

from pollwatch import __version__
from pollwatch.baseline1 import Baseline1Report
from pollwatch.detector import DetectionReport
from pollwatch.errors import ConfigError
from pollwatch.fraudinject import FraudLabels, FraudMode
from pollwatch.ocsvm import OcSvmModel
from pollwatch.polling import PollTable
from pollwatch.popgen import AttributeSchema, Population, schema_from_dict
from pollwatch.votecast import Ballots, Candidate, RegionResults

log = logging.getLogger(__name__)

PathLike = Union[str, Path]

POPULATION_CSV = "population.csv"
POPULATION_JSON = "population.json"
BALLOTS_CSV = "ballots.csv"
RESULTS_CSV = "results.csv"
POLL_CSV = "poll.csv"
POLL_JSON = "poll.json"
BALLOTS_FRAUD_CSV = "ballots_fraud.csv"
RESULTS_FRAUD_CSV = "results_fraud.csv"
LABELS_CSV = "labels.csv"
REPORT_CSV = "report.csv"
REPORT_JSON = "report.json"
MODELS_JSON = "models.json"
BASELINE1_CSV = "baseline1.csv"
METRICS_JSON = "metrics.json"
EXPERIMENT_RUNS_CSV = "experiment_runs.csv"
EXPERIMENT_SUMMARY_CSV = "experiment_summary.csv"
BOUNDARY_CSV = "boundary.csv"
MANIFEST_JSON = "manifest.json"


def _jsonable(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    if hasattr(value, "value"):
        return value.value
    raise TypeError(f"not JSON serializable: {type(value).__name__}")


def write_json(path: PathLike, data: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=_jsonable) + "\n", encoding="utf-8")
    return path


def read_json(path: PathLike) -> Dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"missing {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None


def write_csv(path: PathLike, frame: pd.DataFrame) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, encoding="utf-8")
    return path


def read_csv(path: PathLike) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"missing {path}")
    return pd.read_csv(path, encoding="utf-8", keep_default_na=False, na_values=[""])


def update_manifest(out_dir: PathLike, section: str, data: Mapping[str, Any]) -> Path:
    """Merge one command's section into manifest.json."""
    path = Path(out_dir) / MANIFEST_JSON
    manifest = read_json(path) if path.exists() else {}
    manifest["version"] = __version__
    manifest[section] = dict(data)
    return write_json(path, manifest)


def read_manifest(out_dir: PathLike) -> Dict[str, Any]:
    path = Path(out_dir) / MANIFEST_JSON
    return read_json(path) if path.exists() else {}


# ── Population ──────────────────────────────────────────


def write_population(out_dir: PathLike, population: Population) -> Path:
    schema = population.schema
    columns: Dict[str, Any] = {"region_id": population.region_ids}
    for a, attr in enumerate(schema.attributes):
        columns[attr.name] = np.asarray(attr.categories, dtype=object)[population.codes[:, a]]
    columns["mail_in"] = population.mail_in.astype(int)
    path = write_csv(Path(out_dir) / POPULATION_CSV, pd.DataFrame(columns))
    write_json(
        Path(out_dir) / POPULATION_JSON,
        {
            **schema.to_dict(),
            "seed": population.seed,
            "n_regions": population.n_regions,
            "params": dict(population.params),
            "desirability": [t.tolist() for t in population.desirability or ()] or None,
        },
    )
    return path


def read_population(out_dir: PathLike) -> Population:
    meta = read_json(Path(out_dir) / POPULATION_JSON)
    schema = schema_from_dict(meta)
    frame = read_csv(Path(out_dir) / POPULATION_CSV)
    codes = np.empty((len(frame), len(schema.attributes)), dtype=np.int16)
    for a, attr in enumerate(schema.attributes):
        lookup = {label: i for i, label in enumerate(attr.categories)}
        labels = frame[attr.name].astype(str)
        unknown = sorted(set(labels) - set(lookup))
        if unknown:
            raise ConfigError(f"{POPULATION_CSV}: unknown {attr.name} labels {unknown}")
        codes[:, a] = labels.map(lookup).to_numpy()
    desirability = meta.get("desirability")
    return Population(
        schema=schema,
        codes=codes,
        region_ids=frame["region_id"].to_numpy(dtype=np.int64),
        mail_in=frame["mail_in"].to_numpy(dtype=int).astype(bool),
        n_regions=int(meta["n_regions"]),
        seed=int(meta["seed"]),
        desirability=tuple(np.asarray(t, dtype=float) for t in desirability) if desirability else None,
        params=meta.get("params", {}),
    )


# ── Ballots & results ───────────────────────────────────


def ballots_frame(ballots: Ballots, population: Population, favored: Candidate = Candidate.A) -> pd.DataFrame:
    """Deleted ballots are left out; synthetic ballots get individual -1."""
    present = np.flatnonzero(~ballots.removed)
    frame = pd.DataFrame(
        {
            "region_id": ballots.region_ids[present],
            "individual": present,
            "mail_in": population.mail_in[present].astype(int),
            "vote": ballots.votes()[present],
            "synthetic": 0,
        }
    )
    extra = []
    for label, counts in ((Candidate.A.value, ballots.extra_a), (Candidate.B.value, ballots.extra_b)):
        regions = np.repeat(np.arange(ballots.n_regions), counts)
        if regions.size:
            extra.append(
                pd.DataFrame(
                    {"region_id": regions, "individual": -1, "mail_in": 0, "vote": label, "synthetic": 1}
                )
            )
    return pd.concat([frame, *extra], ignore_index=True) if extra else frame


def write_ballots(path: PathLike, ballots: Ballots, population: Population) -> Path:
    return write_csv(path, ballots_frame(ballots, population))


def read_ballots(path: PathLike, population: Population, meta: Optional[Mapping[str, Any]] = None) -> Ballots:
    meta = meta or {}
    frame = read_csv(path)
    real = frame[frame["synthetic"] == 0]
    synthetic = frame[frame["synthetic"] == 1]
    n = population.size
    idx = real["individual"].to_numpy(dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise ConfigError(f"{path}: individual index out of range")
    removed = np.ones(n, dtype=bool)
    removed[idx] = False
    vote_a = np.zeros(n, dtype=bool)
    vote_a[idx] = (real["vote"] == Candidate.A.value).to_numpy()
    syn_regions = synthetic["region_id"].to_numpy(dtype=np.int64)
    syn_a = (synthetic["vote"] == Candidate.A.value).to_numpy()
    return Ballots(
        region_ids=population.region_ids.copy(),
        vote_a=vote_a,
        removed=removed,
        extra_a=np.bincount(syn_regions[syn_a], minlength=population.n_regions),
        extra_b=np.bincount(syn_regions[~syn_a], minlength=population.n_regions),
        scores=np.full(n, np.nan),
        threshold=float(meta.get("threshold", np.nan)),
        n_regions=population.n_regions,
        target_share=float(meta.get("target_share", np.nan)),
        noise_halfwidth=float(meta.get("noise_halfwidth", np.nan)),
    )


def write_results(path: PathLike, results: RegionResults) -> Path:
    frame = pd.DataFrame(
        {
            "region_id": np.arange(results.n_regions),
            "share_A": results.share_a,
            "total": results.totals,
            "count_A": results.counts_a,
            "count_B": results.counts_b,
        }
    )
    return write_csv(path, frame)


def read_results(path: PathLike) -> RegionResults:
    frame = read_csv(path).sort_values("region_id")
    return RegionResults(
        counts_a=frame["count_A"].to_numpy(dtype=np.int64),
        counts_b=frame["count_B"].to_numpy(dtype=np.int64),
    )


# ── Poll ────────────────────────────────────────────────


def write_poll(out_dir: PathLike, poll: PollTable) -> Path:
    schema = poll.schema
    cells = list(np.ndindex(*schema.sizes))
    columns: Dict[str, Any] = {
        attr.name: [attr.categories[cell[a]] for cell in cells]
        for a, attr in enumerate(schema.attributes)
    }
    columns["count_A"] = [poll.counts_a[cell] for cell in cells]
    columns["count_B"] = [poll.counts_b[cell] for cell in cells]
    path = write_csv(Path(out_dir) / POLL_CSV, pd.DataFrame(columns))
    write_json(
        Path(out_dir) / POLL_JSON,
        {
            "rate": poll.rate,
            "target_error": poll.target_error,
            "seed": poll.seed,
            "noise_seed": poll.noise_seed,
            "respondents": poll.respondents,
            "epsilon": poll.epsilon,
        },
    )
    return path


def read_poll(out_dir: PathLike, schema: AttributeSchema) -> PollTable:
    meta = read_json(Path(out_dir) / POLL_JSON)
    frame = read_csv(Path(out_dir) / POLL_CSV)
    counts_a = np.zeros(schema.sizes)
    counts_b = np.zeros(schema.sizes)
    index = []
    for attr in schema.attributes:
        lookup = {label: i for i, label in enumerate(attr.categories)}
        index.append(frame[attr.name].astype(str).map(lookup).to_numpy())
    if any(pd.isna(ix).any() for ix in index):
        raise ConfigError(f"{POLL_CSV}: labels do not match the population schema")
    cells = tuple(ix.astype(np.int64) for ix in index)
    counts_a[cells] = frame["count_A"].to_numpy(dtype=float)
    counts_b[cells] = frame["count_B"].to_numpy(dtype=float)
    return PollTable(
        schema,
        counts_a,
        counts_b,
        rate=float(meta["rate"]),
        seed=int(meta["seed"]),
        respondents=int(meta["respondents"]),
        target_error=float(meta.get("target_error", 0.0)),
        noise_seed=meta.get("noise_seed"),
        epsilon=float(meta.get("epsilon", 0.0)),
    )


# ── Labels ──────────────────────────────────────────────


def write_labels(path: PathLike, labels: FraudLabels) -> Path:
    frame = pd.DataFrame(
        {
            "region_id": np.arange(labels.n_regions),
            "fraudulent": labels.fraudulent.astype(int),
            "mode": labels.mode.value,
            "affected_votes": labels.affected,
        }
    )
    return write_csv(path, frame)


def read_labels(path: PathLike, meta: Optional[Mapping[str, Any]] = None) -> FraudLabels:
    """Rebuild labels from labels.csv; global figures come from the fraud manifest section."""
    meta = meta or {}
    frame = read_csv(path).sort_values("region_id")
    modes = frame["mode"].unique()
    return FraudLabels(
        fraudulent=frame["fraudulent"].to_numpy(dtype=int).astype(bool),
        affected=frame["affected_votes"].to_numpy(dtype=np.int64),
        mode=FraudMode(modes[0] if len(modes) else meta.get("mode", FraudMode.SWITCHING.value)),
        favored=Candidate(meta.get("favored", Candidate.A.value)),
        probability=float(meta.get("probability", 0.0)),
        pre_share=float(meta.get("pre_share", np.nan)),
        post_share=float(meta.get("post_share", np.nan)),
        base_votes=int(meta.get("base_votes", 0)),
        requested_level=meta.get("requested_level"),
    )


# ── Reports ─────────────────────────────────────────────


def write_report(out_dir: PathLike, report: DetectionReport) -> Path:
    path = write_csv(Path(out_dir) / REPORT_CSV, report.to_frame())
    write_json(Path(out_dir) / REPORT_JSON, dict(report.meta))
    write_json(
        Path(out_dir) / MODELS_JSON, {str(c): m.to_dict() for c, m in sorted(report.models.items())}
    )
    return path


def read_models(path: PathLike) -> Dict[int, OcSvmModel]:
    return {int(c): OcSvmModel.from_dict(d) for c, d in read_json(path).items()}


def read_report(out_dir: PathLike) -> DetectionReport:
    frame = read_csv(Path(out_dir) / REPORT_CSV).sort_values("region_id")
    models_path = Path(out_dir) / MODELS_JSON
    return DetectionReport(
        region_ids=frame["region_id"].to_numpy(dtype=np.int64),
        cluster=frame["cluster"].to_numpy(dtype=np.int64),
        y_hat=frame["y_hat"].to_numpy(dtype=float),
        z_hat=frame["z_hat"].to_numpy(dtype=float),
        actual=frame["actual"].to_numpy(dtype=float),
        decision=frame["decision"].to_numpy(dtype=float),
        meta=read_json(Path(out_dir) / REPORT_JSON) if (Path(out_dir) / REPORT_JSON).exists() else {},
        models=read_models(models_path) if models_path.exists() else {},
    )


def write_baseline1(path: PathLike, report: Baseline1Report) -> Path:
    return write_csv(path, report.to_frame())


def read_baseline1(path: PathLike) -> Baseline1Report:
    frame = read_csv(path).sort_values("region_id")
    cluster = frame["cluster"].to_numpy(dtype=np.int64)
    return Baseline1Report(
        region_ids=frame["region_id"].to_numpy(dtype=np.int64),
        cluster=cluster,
        actual=frame["actual"].to_numpy(dtype=float),
        flags=frame["flagged"].to_numpy(dtype=int).astype(bool),
        k=int(cluster.max()) + 1 if cluster.size else 0,
    )
