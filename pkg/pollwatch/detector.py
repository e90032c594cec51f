"""pollwatch — regional anomaly detection.

Pipeline (run_pipeline):

  tally -> build_design_matrix -> select_variables (stepwise AIC) -> fit_regression
  -> cluster_regions (k-means) -> extrapolate_poll per region
  -> train_cluster_svms on (ŷ, ẑ) -> detect

Only demographics, the poll and post-fraud ballots flow in. Fraud labels never
reach this module; scoring against them is harness.evaluate's job.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import reduce
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import statsmodels.api as sm
from scipy.spatial.distance import cdist
from sklearn.metrics import silhouette_score

from pollwatch.errors import ConvergenceError, DetectorError, PollError, PollwatchError
from pollwatch.ocsvm import DEFAULT_NU, KernelParams, OcSvmModel, decision, default_gamma, fit_ocsvm
from pollwatch.polling import PollTable
from pollwatch.popgen import DemographicProfile, Population, demographic_counts
from pollwatch.streams import KMEANS, substream
from pollwatch.votecast import Ballots, RegionResults, tally

log = logging.getLogger(__name__)

EMBEDDINGS = ("regression", "poll")
AIC_IMPROVEMENT = 1e-12
RSS_FLOOR = 1e-12
MAX_LLOYD_ITER = 300
MIN_INPUT_VARIANCE = 0.05


def _canonical_order(points: np.ndarray) -> np.ndarray:
    """Row order sorted by first column, then second, ..."""
    if points.shape[1] == 0:
        return np.arange(points.shape[0])
    return np.lexsort(points.T[::-1])


# ── Design matrix ───────────────────────────────────────


@dataclass(frozen=True, eq=False)
class DemographicMatrix:
    """values[r, m]: fraction of region r in category column m ("attribute=label")."""

    values: np.ndarray
    columns: Tuple[str, ...]
    region_ids: np.ndarray

    def __post_init__(self) -> None:
        if self.values.ndim != 2 or self.values.shape[1] != len(self.columns):
            raise DetectorError(f"design matrix shape {self.values.shape} vs {len(self.columns)} columns")
        if self.values.shape[0] != self.region_ids.shape[0]:
            raise DetectorError("design matrix rows must match region ids")
        if not np.isfinite(self.values).all():
            raise DetectorError("design matrix has non-finite entries")
        self.values.setflags(write=False)

    @property
    def n_rows(self) -> int:
        return int(self.values.shape[0])

    def constant_columns(self) -> List[int]:
        if self.n_rows == 0:
            return []
        return [int(i) for i in np.flatnonzero(np.ptp(self.values, axis=0) == 0)]

    def varying_columns(self) -> List[int]:
        constant = set(self.constant_columns())
        return [i for i in range(len(self.columns)) if i not in constant]

    def subset(self, indices: Sequence[int]) -> "DemographicMatrix":
        idx = list(indices)
        return DemographicMatrix(
            self.values[:, idx].copy(), tuple(self.columns[i] for i in idx), self.region_ids
        )


def build_design_matrix(population: Population) -> DemographicMatrix:
    """Category fractions per region; the first category of each attribute is the
    dropped reference."""
    sizes = population.region_sizes
    empty = np.flatnonzero(sizes == 0)
    if empty.size:
        raise DetectorError(f"empty regions: {empty.tolist()}", stage="design")
    blocks, columns = [], []
    for attr, counts in zip(population.schema.attributes, demographic_counts(population)):
        fractions = counts / sizes[:, None]
        blocks.append(fractions[:, 1:])
        columns.extend(f"{attr.name}={label}" for label in attr.categories[1:])
    values = np.hstack(blocks) if blocks else np.zeros((population.n_regions, 0))
    return DemographicMatrix(values, tuple(columns), np.arange(population.n_regions))


# ── Variable selection & regression ─────────────────────


def _design(values: np.ndarray, cols: Sequence[int]) -> np.ndarray:
    ones = np.ones((values.shape[0], 1))
    return np.hstack([ones, values[:, list(cols)]]) if len(cols) else ones


def _full_rank(design: np.ndarray) -> bool:
    return int(np.linalg.matrix_rank(design)) == design.shape[1]


def aic_score(values: np.ndarray, y: np.ndarray, cols: Sequence[int]) -> float:
    """n·ln(RSS/n) + 2(p + 1) for an OLS fit with intercept on `cols`.

    RSS is floored at 1e-12 × TSS so exact fits stay finite.
    """
    n = y.shape[0]
    rss = float(sm.OLS(y, _design(values, cols)).fit().ssr)
    tss = float(np.sum((y - y.mean()) ** 2))
    floor = max(RSS_FLOOR * tss, np.finfo(float).tiny)
    return n * np.log(max(rss, floor) / n) + 2.0 * (len(cols) + 1)


def select_variables(matrix: DemographicMatrix, y) -> List[int]:
    """Forward-backward stepwise search for the AIC-minimal column subset.

    Each step takes the single add or drop with the lowest AIC; it stops when no
    move improves AIC. Constant columns are never candidates, and a subset of
    size p is only considered while p ≤ n − 3.
    """
    y = np.asarray(y, dtype=float)
    n = matrix.n_rows
    if y.shape != (n,):
        raise DetectorError(f"expected {n} election results, got {y.shape}", stage="select")
    values = matrix.values
    candidates = matrix.varying_columns()
    current: List[int] = []
    best = aic_score(values, y, current)

    while True:
        moves: List[Tuple[float, List[int]]] = []
        if len(current) + 1 <= n - 3:
            for c in candidates:
                if c in current:
                    continue
                trial = sorted(current + [c])
                if _full_rank(_design(values, trial)):
                    moves.append((aic_score(values, y, trial), trial))
        for c in current:
            trial = [i for i in current if i != c]
            moves.append((aic_score(values, y, trial), trial))
        if not moves:
            break
        score, trial = min(moves, key=lambda m: m[0])
        if score >= best - AIC_IMPROVEMENT:
            break
        best, current = score, trial

    if current and not _full_rank(_design(values, current)):
        raise DetectorError("rank-deficient design after selection", stage="select")
    log.debug("selected %s (AIC %.4f)", [matrix.columns[i] for i in current], best)
    return current


@dataclass(frozen=True, eq=False)
class RegressionModel:
    """beta[0] is the intercept; fitted = ŷ per region."""

    columns: Tuple[str, ...]
    beta: np.ndarray
    fitted: np.ndarray

    def predict(self, values: np.ndarray) -> np.ndarray:
        return _design(values, range(values.shape[1])) @ self.beta


def fit_regression(matrix: DemographicMatrix, y) -> RegressionModel:
    y = np.asarray(y, dtype=float)
    design = _design(matrix.values, range(len(matrix.columns)))
    n, k = design.shape
    if y.shape != (n,):
        raise DetectorError(f"expected {n} election results, got {y.shape}", stage="regression")
    if n <= k:
        raise DetectorError(f"{n} regions cannot fit {k} coefficients", stage="regression")
    if not _full_rank(design):
        raise DetectorError("singular normal equations", stage="regression")
    res = sm.OLS(y, design).fit()
    return RegressionModel(matrix.columns, np.asarray(res.params), np.asarray(res.fittedvalues))


# ── Clustering ──────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class ClusterModel:
    """labels[r] is region r's cluster; history holds the objective after every
    Lloyd iteration of the winning restart."""

    k: int
    labels: np.ndarray
    centroids: np.ndarray
    objective: float
    history: Tuple[float, ...] = ()

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.k)

    def members(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.labels == cluster)


def _kmeans_pp(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = cdist(points, points[chosen], "sqeuclidean").min(axis=1)
    while len(chosen) < k:
        total = float(d2.sum())
        if total <= 0.0:
            free = np.setdiff1d(np.arange(n), chosen)
            nxt = int(free[rng.integers(free.size)])
        else:
            cdf = np.cumsum(d2)
            nxt = min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), n - 1)
        chosen.append(nxt)
        d2 = np.minimum(d2, cdist(points, points[[nxt]], "sqeuclidean")[:, 0])
    return points[chosen].copy()


def _centroids(points: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    sums = np.zeros((k, points.shape[1]))
    np.add.at(sums, labels, points)
    counts = np.bincount(labels, minlength=k)
    return sums / np.maximum(counts, 1)[:, None]


def _fill_empty(labels: np.ndarray, d2: np.ndarray, k: int) -> np.ndarray:
    counts = np.bincount(labels, minlength=k)
    for c in np.flatnonzero(counts == 0):
        own = d2[np.arange(labels.size), labels]
        movable = counts[labels] > 1
        j = int(np.flatnonzero(movable)[np.argmax(own[movable])])
        log.warning("k-means cluster %d empty; re-seeded at point %d", c, j)
        counts[labels[j]] -= 1
        labels[j] = c
        counts[c] = 1
    return labels


def _lloyd(points: np.ndarray, centroids: np.ndarray) -> Tuple[np.ndarray, np.ndarray, List[float]]:
    k = centroids.shape[0]
    prev: Optional[np.ndarray] = None
    history: List[float] = []
    labels = np.zeros(points.shape[0], dtype=np.int64)
    for _ in range(MAX_LLOYD_ITER):
        d2 = cdist(points, centroids, "sqeuclidean")
        labels = _fill_empty(np.argmin(d2, axis=1), d2, k)
        centroids = _centroids(points, labels, k)
        history.append(float(((points - centroids[labels]) ** 2).sum()))
        if prev is not None and np.array_equal(labels, prev):
            break
        prev = labels
    return labels, centroids, history


def _relabel(labels: np.ndarray, centroids: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Number clusters by first appearance."""
    _, first = np.unique(labels, return_index=True)
    order = np.unique(labels)[np.argsort(first)]
    mapping = np.empty(centroids.shape[0], dtype=np.int64)
    mapping[order] = np.arange(order.size)
    return mapping[labels], centroids[order]


def cluster_regions(matrix: DemographicMatrix, k: int, restarts: int = 10, seed: int = 0) -> ClusterModel:
    """Best of `restarts` k-means++ / Lloyd runs by within-cluster sum of squares."""
    n = matrix.n_rows
    if not 1 <= k <= n:
        raise DetectorError(f"k={k} outside [1, {n}]", stage="cluster")
    if restarts < 1:
        raise DetectorError("restarts must be at least 1", stage="cluster")
    values = matrix.values if matrix.values.shape[1] else np.zeros((n, 1))
    order = _canonical_order(values)
    points = values[order]

    best: Optional[Tuple[np.ndarray, np.ndarray, List[float]]] = None
    for rep in range(restarts):
        rng = substream(seed, KMEANS, rep)
        labels, centroids, history = _lloyd(points, _kmeans_pp(points, k, rng))
        if best is None or history[-1] < best[2][-1]:
            best = (labels, centroids, history)
    assert best is not None

    labels_sorted, centroids = _relabel(best[0], best[1])
    labels = np.empty(n, dtype=np.int64)
    labels[order] = labels_sorted
    return ClusterModel(k, labels, centroids, best[2][-1], tuple(best[2]))


def choose_k(
    matrix: DemographicMatrix,
    k_range: Tuple[int, int] = (2, 12),
    restarts: int = 10,
    seed: int = 0,
) -> int:
    """k with the highest mean silhouette in k_range (capped at n − 1); 1 if none applies."""
    n = matrix.n_rows
    lo, hi = k_range[0], min(k_range[1], n - 1)
    values = matrix.values if matrix.values.shape[1] else np.zeros((n, 1))
    if hi < lo or np.ptp(values, axis=0).max(initial=0.0) == 0:
        return 1
    best_k, best_score = 1, -np.inf
    for k in range(lo, hi + 1):
        labels = cluster_regions(matrix, k, restarts, seed).labels
        if np.unique(labels).size < 2:
            continue
        score = float(silhouette_score(values, labels))
        if score > best_score:
            best_k, best_score = k, score
    log.debug("silhouette picked k=%d (%.4f)", best_k, best_score)
    return best_k


def merge_small_clusters(model: ClusterModel, matrix: DemographicMatrix, min_size: int = 4) -> ClusterModel:
    """Fold clusters with fewer than min_size members into the nearest centroid's cluster."""
    values = matrix.values if matrix.values.shape[1] else np.zeros((matrix.n_rows, 1))
    labels = model.labels.copy()
    centroids = model.centroids.copy()
    alive = list(range(model.k))
    merged = 0
    while len(alive) > 1:
        sizes = {c: int((labels == c).sum()) for c in alive}
        small = [c for c in alive if sizes[c] < min_size]
        if not small:
            break
        c = min(small, key=lambda s: (sizes[s], s))
        others = [o for o in alive if o != c]
        dist = cdist(centroids[[c]], centroids[others], "sqeuclidean")[0]
        target = others[int(np.argmin(dist))]
        labels[labels == c] = target
        centroids[target] = values[labels == target].mean(axis=0)
        alive.remove(c)
        merged += 1
    if not merged:
        return model

    mapping = {c: i for i, c in enumerate(alive)}
    new_labels = np.array([mapping[c] for c in labels], dtype=np.int64)
    new_centroids = centroids[alive]
    objective = float(((values - new_centroids[new_labels]) ** 2).sum())
    log.info("merged %d small clusters (min size %d); k %d -> %d", merged, min_size, model.k, len(alive))
    return ClusterModel(len(alive), new_labels, new_centroids, objective, model.history)


# ── Poll extrapolation ──────────────────────────────────


@dataclass(frozen=True, eq=False)
class PollPrediction:
    z_hat: np.ndarray

    def __post_init__(self) -> None:
        if ((self.z_hat < 0) | (self.z_hat > 1)).any():
            raise DetectorError("poll predictions must lie in [0, 1]", stage="poll")


def cell_shares(poll: PollTable) -> np.ndarray:
    """a / (a + b) per cell. Empty cells take the share of the cell with one
    attribute marginalized out (last attribute first), then the global share."""
    a = np.asarray(poll.counts_a, dtype=float)
    b = np.asarray(poll.counts_b, dtype=float)
    total = a + b
    if total.sum() <= 0:
        raise PollError("poll has no respondents")
    shares = np.divide(a, total, out=np.full(a.shape, np.nan), where=total > 0)
    missing = int(np.isnan(shares).sum())
    if missing:
        for axis in reversed(range(a.ndim)):
            gap = np.isnan(shares)
            if not gap.any():
                break
            ma = np.broadcast_to(a.sum(axis=axis, keepdims=True), a.shape)
            mt = np.broadcast_to(total.sum(axis=axis, keepdims=True), a.shape)
            fill = gap & (mt > 0)
            shares[fill] = ma[fill] / mt[fill]
        shares[np.isnan(shares)] = a.sum() / total.sum()
        log.info("%d empty poll cells filled from marginalized shares", missing)
    return shares


def extrapolate_poll(
    poll: PollTable, profile: DemographicProfile, shares: Optional[np.ndarray] = None
) -> float:
    """ẑ = Σ over cells of (product of the region's category fractions) × cell share."""
    if shares is None:
        shares = cell_shares(poll)
    if len(profile.fractions) != shares.ndim:
        raise DetectorError("profile and poll use different schemas", stage="poll")
    weights = reduce(np.multiply.outer, profile.fractions)
    base = float(shares.flat[0])
    z = base + float(np.sum(weights * (shares - base)))
    return min(max(z, 0.0), 1.0)


def predict_poll(poll: PollTable, population: Population) -> PollPrediction:
    shares = cell_shares(poll)
    sizes = population.region_sizes
    counts = demographic_counts(population)
    z_hat = np.empty(population.n_regions)
    for r in range(population.n_regions):
        if sizes[r] == 0:
            raise DetectorError(f"region {r} is empty", stage="poll")
        profile = DemographicProfile(population.schema, tuple(c[r] / sizes[r] for c in counts))
        z_hat[r] = extrapolate_poll(poll, profile, shares)
    return PollPrediction(z_hat)


# ── Per-cluster SVMs & detection ────────────────────────


def _cluster_points(first: np.ndarray, second: np.ndarray, idx: np.ndarray) -> np.ndarray:
    points = np.column_stack([first[idx], second[idx]])
    return points[_canonical_order(points)]


def pooled_gamma(y_hat, z_hat, min_variance: float = MIN_INPUT_VARIANCE) -> float:
    """Kernel width shared by every cluster, from all regions' (ŷ, ẑ) points.

    The variance is floored at min_variance, so gamma ≤ 1 / (2 × min_variance).
    """
    points = np.column_stack([np.asarray(y_hat, dtype=float), np.asarray(z_hat, dtype=float)])
    return default_gamma(points, min_variance)


def train_cluster_svms(
    y_hat,
    z_hat,
    clusters: ClusterModel,
    nu: float = DEFAULT_NU,
    params: Optional[KernelParams] = None,
    workers: int = 1,
) -> Dict[int, OcSvmModel]:
    """One model per cluster on its (ŷ, ẑ) points. gamma defaults to pooled_gamma."""
    y_hat = np.asarray(y_hat, dtype=float)
    z_hat = np.asarray(z_hat, dtype=float)
    params = params or KernelParams(pooled_gamma(y_hat, z_hat))

    def fit_one(c: int) -> OcSvmModel:
        points = _cluster_points(y_hat, z_hat, clusters.members(c))
        if points.shape[0] < 2:
            log.warning("cluster %d has %d member(s)", c, points.shape[0])
        try:
            return fit_ocsvm(points, nu, params)
        except (ConvergenceError, ValueError) as exc:
            raise DetectorError(str(exc), stage="svm", cluster=c) from exc

    ids = list(range(clusters.k))
    if workers > 1 and len(ids) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            fitted = list(pool.map(fit_one, ids))
    else:
        fitted = [fit_one(c) for c in ids]
    return dict(zip(ids, fitted))


@dataclass(frozen=True, eq=False)
class DetectionReport:
    region_ids: np.ndarray
    cluster: np.ndarray
    y_hat: np.ndarray
    z_hat: np.ndarray
    actual: np.ndarray
    decision: np.ndarray
    meta: Mapping[str, Any] = field(default_factory=dict)
    models: Mapping[int, OcSvmModel] = field(default_factory=dict)

    @property
    def flagged(self) -> np.ndarray:
        return self.decision < 0.0

    @property
    def flagged_regions(self) -> List[int]:
        return [int(r) for r in self.region_ids[self.flagged]]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "region_id": self.region_ids,
                "cluster": self.cluster,
                "y_hat": self.y_hat,
                "z_hat": self.z_hat,
                "actual": self.actual,
                "decision": self.decision,
                "flagged": self.flagged.astype(int),
            }
        )


def observation_points(y_hat, z_hat, actual, embedding: str = "regression") -> np.ndarray:
    """Test points in the (ŷ, ẑ) training plane.

    "regression": (ŷ, actual), the actual result in the poll slot.
    "poll": (ẑ, actual), the poll prediction in the regression slot and the
    actual result in the poll slot.
    """
    if embedding == "regression":
        return np.column_stack([y_hat, actual])
    if embedding == "poll":
        return np.column_stack([z_hat, actual])
    raise DetectorError(f"unknown embedding {embedding!r}", stage="detect")


def detect(
    models: Mapping[int, OcSvmModel],
    clusters: ClusterModel,
    actual,
    y_hat,
    z_hat,
    embedding: str = "regression",
    meta: Optional[Mapping[str, Any]] = None,
) -> DetectionReport:
    """Score each region's actual result with its cluster's model; decision < 0 flags it.

    `actual` is a RegionResults or an array of A-shares.
    """
    shares = actual.share_a if isinstance(actual, RegionResults) else np.asarray(actual, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    z_hat = np.asarray(z_hat, dtype=float)
    n = clusters.labels.shape[0]
    if not (shares.shape == y_hat.shape == z_hat.shape == (n,)):
        raise DetectorError("actual, ŷ, ẑ and clusters cover different regions", stage="detect")
    missing = sorted(set(range(clusters.k)) - set(models))
    if missing:
        raise DetectorError(f"no model for clusters {missing}", stage="detect")

    points = observation_points(y_hat, z_hat, shares, embedding)
    values = np.empty(n)
    for c in range(clusters.k):
        idx = clusters.members(c)
        if idx.size:
            values[idx] = decision(models[c], points[idx])
    return DetectionReport(
        region_ids=np.arange(n),
        cluster=clusters.labels.copy(),
        y_hat=y_hat,
        z_hat=z_hat,
        actual=shares,
        decision=values,
        meta=dict(meta or {}, embedding=embedding, k=clusters.k),
        models=dict(models),
    )


# ── Pipeline ────────────────────────────────────────────


@dataclass(frozen=True)
class DetectorParams:
    nu: float = DEFAULT_NU
    gamma: Optional[float] = None
    k: Optional[int] = None
    k_range: Tuple[int, int] = (2, 12)
    restarts: int = 10
    seed: int = 0
    embedding: str = "regression"
    per_cluster_regression: bool = False
    min_cluster_size: int = 4
    workers: int = 1

    def to_dict(self) -> Dict[str, Any]:
        return {
            "nu": self.nu,
            "gamma": self.gamma,
            "k": self.k,
            "k_range": list(self.k_range),
            "restarts": self.restarts,
            "seed": self.seed,
            "embedding": self.embedding,
            "per_cluster_regression": self.per_cluster_regression,
            "min_cluster_size": self.min_cluster_size,
        }


class _Stage:
    """Re-raise failures inside the block as DetectorError tagged with the stage."""

    def __init__(self, name: str):
        self.name = name

    def __enter__(self) -> "_Stage":
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        if exc is None or isinstance(exc, DetectorError) and exc.stage:
            return False
        if isinstance(exc, (PollwatchError, ValueError, np.linalg.LinAlgError)):
            cluster = exc.cluster if isinstance(exc, DetectorError) else None
            raise DetectorError(str(exc), stage=self.name, cluster=cluster) from exc
        return False


def per_cluster_fit(
    matrix: DemographicMatrix, y: np.ndarray, clusters: ClusterModel, fallback: np.ndarray
) -> np.ndarray:
    """ŷ from one regression per cluster; clusters too small for the fit keep `fallback`."""
    fitted = fallback.copy()
    for c in range(clusters.k):
        idx = clusters.members(c)
        design = _design(matrix.values[idx], range(len(matrix.columns)))
        if idx.size <= design.shape[1] or not _full_rank(design):
            log.warning("cluster %d: too few regions for its own regression, using global fit", c)
            continue
        fitted[idx] = sm.OLS(y[idx], design).fit().fittedvalues
    return fitted


def run_pipeline(
    population: Population,
    ballots: Ballots,
    poll: PollTable,
    params: Optional[DetectorParams] = None,
) -> DetectionReport:
    params = params or DetectorParams()
    if population.schema != poll.schema:
        raise DetectorError("poll and population use different schemas", stage="input")

    with _Stage("tally"):
        results = tally(ballots, population)
        y = results.share_a
    with _Stage("design"):
        matrix = build_design_matrix(population)
    with _Stage("select"):
        selected = select_variables(matrix, y)
        x_sel = matrix.subset(selected)
    with _Stage("regression"):
        regression = fit_regression(x_sel, y)
    with _Stage("cluster"):
        features = x_sel if selected else matrix.subset(matrix.varying_columns())
        k = params.k or choose_k(features, params.k_range, params.restarts, params.seed)
        clusters = cluster_regions(features, min(k, matrix.n_rows), params.restarts, params.seed)
        clusters = merge_small_clusters(clusters, features, params.min_cluster_size)
    with _Stage("regression"):
        y_hat = regression.fitted
        if params.per_cluster_regression:
            y_hat = per_cluster_fit(x_sel, y, clusters, y_hat)
    with _Stage("poll"):
        z_hat = predict_poll(poll, population).z_hat
    with _Stage("svm"):
        kernel = KernelParams(params.gamma) if params.gamma is not None else None
        models = train_cluster_svms(y_hat, z_hat, clusters, params.nu, kernel, params.workers)
    with _Stage("detect"):
        report = detect(
            models,
            clusters,
            results,
            y_hat,
            z_hat,
            params.embedding,
            meta={
                **params.to_dict(),
                "k_chosen": k,
                "selected": list(x_sel.columns),
                "beta": regression.beta.tolist(),
                "gamma_used": next(iter(models.values())).params.gamma,
            },
        )
    log.info(
        "detection: k=%d, %d variables, %d of %d regions flagged",
        clusters.k, len(selected), int(report.flagged.sum()), population.n_regions,
    )
    return report
