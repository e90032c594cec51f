"""pollwatch — unsupervised two-step comparator.

Regions are clustered on demographics, then each cluster's election results are
run through DBSCAN; regions DBSCAN labels as noise are flagged. No poll input.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
from sklearn.cluster import DBSCAN

from pollwatch.detector import ClusterModel, DemographicMatrix, choose_k, cluster_regions
from pollwatch.errors import DetectorError
from pollwatch.votecast import RegionResults

log = logging.getLogger(__name__)

EPS_FLOOR = 1e-9


@dataclass(frozen=True)
class DensityParams:
    """eps None means 1.5 × the median nearest-neighbour distance per cluster."""

    eps: Optional[float] = None
    min_pts: int = 3
    eps_factor: float = 1.5

    def __post_init__(self) -> None:
        if self.eps is not None and not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.min_pts < 1:
            raise ValueError(f"min_pts must be at least 1, got {self.min_pts}")


def default_eps(values: np.ndarray, factor: float = 1.5) -> float:
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if v.size < 2:
        return EPS_FLOOR
    gaps = np.diff(v)
    nearest = np.minimum(np.concatenate([[np.inf], gaps]), np.concatenate([gaps, [np.inf]]))
    return max(factor * float(np.median(nearest)), EPS_FLOOR)


def density_noise(values: np.ndarray, eps: float, min_pts: int) -> np.ndarray:
    """True where DBSCAN leaves the 1-D value unclustered (neighbourhoods include distance == eps)."""
    labels = DBSCAN(eps=eps, min_samples=min_pts).fit_predict(
        np.asarray(values, dtype=float).reshape(-1, 1)
    )
    return labels == -1


@dataclass(frozen=True, eq=False)
class Baseline1Report:
    region_ids: np.ndarray
    cluster: np.ndarray
    actual: np.ndarray
    flags: np.ndarray
    k: int
    eps: Dict[int, float] = field(default_factory=dict)

    @property
    def flagged(self) -> set:
        return {int(r) for r in self.region_ids[self.flags]}

    @property
    def flagged_regions(self) -> List[int]:
        return sorted(self.flagged)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "region_id": self.region_ids,
                "cluster": self.cluster,
                "y_hat": np.nan,
                "z_hat": np.nan,
                "actual": self.actual,
                "decision": np.nan,
                "flagged": self.flags.astype(int),
            }
        )


def run_baseline1(
    matrix: DemographicMatrix,
    actual,
    k: Optional[int] = None,
    params: Optional[DensityParams] = None,
    seed: int = 0,
    restarts: int = 10,
    clusters: Optional[ClusterModel] = None,
) -> Baseline1Report:
    """k None picks k by silhouette, as the detector does."""
    params = params or DensityParams()
    shares = actual.share_a if isinstance(actual, RegionResults) else np.asarray(actual, dtype=float)
    if shares.shape != (matrix.n_rows,):
        raise DetectorError("results and demographics cover different regions", stage="baseline1")
    if clusters is None:
        features = matrix.subset(matrix.varying_columns())
        k = k or choose_k(features, restarts=restarts, seed=seed)
        clusters = cluster_regions(features, min(k, matrix.n_rows), restarts, seed)

    flags = np.zeros(matrix.n_rows, dtype=bool)
    eps_used: Dict[int, float] = {}
    for c in range(clusters.k):
        idx = clusters.members(c)
        if idx.size == 0:
            continue
        values = shares[idx]
        eps = params.eps if params.eps is not None else default_eps(values, params.eps_factor)
        eps_used[c] = eps
        # clusters smaller than min_pts are one dense group
        flags[idx] = density_noise(values, eps, min(params.min_pts, idx.size))
    log.info("baseline1: k=%d, %d regions flagged", clusters.k, int(flags.sum()))
    return Baseline1Report(
        region_ids=np.arange(matrix.n_rows),
        cluster=clusters.labels.copy(),
        actual=shares,
        flags=flags,
        k=clusters.k,
        eps=eps_used,
    )
