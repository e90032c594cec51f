"""pollwatch — one-class SVM with an RBF kernel.

Dual problem, for n training points and C = 1 / (nu × n):

    minimize   ½ αᵀ K α
    subject to 0 ≤ α_i ≤ C,  Σ α_i = 1

solved by two-coordinate (SMO) steps on the maximal KKT-violating pair.
Decision function: f(x) = Σ α_i K(x_i, x) − ρ; f ≥ 0 is an inlier.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Optional, Union

import numpy as np
from scipy.spatial.distance import cdist

from pollwatch.errors import ConvergenceError

log = logging.getLogger(__name__)

DEFAULT_NU = 0.01
DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 100_000
ALPHA_EPS = 1e-12
BOUNDARY_EPS = 1e-12


class Verdict(str, Enum):
    INLIER = "inlier"
    OUTLIER = "outlier"


@dataclass(frozen=True)
class KernelParams:
    gamma: float

    def __post_init__(self) -> None:
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ValueError(f"gamma must be positive, got {self.gamma}")


def rbf_kernel(x, x2, params: KernelParams) -> float:
    a = np.asarray(x, dtype=float)
    b = np.asarray(x2, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.exp(-params.gamma * np.sum((a - b) ** 2)))


def rbf_matrix(a: np.ndarray, b: np.ndarray, params: KernelParams) -> np.ndarray:
    """K[i, j] = exp(−gamma ‖a_i − b_j‖²)."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    return np.exp(-params.gamma * cdist(a, b, "sqeuclidean"))


def default_gamma(points: np.ndarray, min_variance: float = 0.0) -> float:
    """1 / (2 × variance of the input coordinates), the variance floored at min_variance.

    1.0 when both are zero.
    """
    var = max(float(np.var(np.asarray(points, dtype=float))), min_variance)
    return 1.0 / (2.0 * var) if var > 0 else 1.0


@dataclass(frozen=True, eq=False)
class OcSvmModel:
    """Trained model. Only points with α > 0 are kept as support."""

    support: np.ndarray
    alpha: np.ndarray
    rho: float
    nu: float
    params: KernelParams
    n_train: int
    iterations: int = 0
    kkt_gap: float = 0.0
    objective: float = 0.0

    @property
    def box(self) -> float:
        return 1.0 / (self.nu * self.n_train)

    def decision_function(self, points) -> np.ndarray:
        k = rbf_matrix(points, self.support, self.params)
        f = (k * self.alpha).sum(axis=1) - self.rho
        f[np.abs(f) < BOUNDARY_EPS] = 0.0
        return f

    def to_dict(self) -> Dict[str, Any]:
        return {
            "support": self.support.tolist(),
            "alpha": self.alpha.tolist(),
            "rho": self.rho,
            "nu": self.nu,
            "gamma": self.params.gamma,
            "n_train": self.n_train,
            "iterations": self.iterations,
            "kkt_gap": self.kkt_gap,
            "objective": self.objective,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "OcSvmModel":
        return cls(
            support=np.asarray(data["support"], dtype=float),
            alpha=np.asarray(data["alpha"], dtype=float),
            rho=float(data["rho"]),
            nu=float(data["nu"]),
            params=KernelParams(float(data["gamma"])),
            n_train=int(data["n_train"]),
            iterations=int(data.get("iterations", 0)),
            kkt_gap=float(data.get("kkt_gap", 0.0)),
            objective=float(data.get("objective", 0.0)),
        )


def _initial_alpha(n: int, box: float) -> np.ndarray:
    alpha = np.zeros(n)
    n_full = min(int(math.floor(1.0 / box + 1e-9)), n)
    alpha[:n_full] = box
    if n_full < n:
        alpha[n_full] = 1.0 - n_full * box
    return np.clip(alpha, 0.0, box)


def fit_ocsvm(
    points,
    nu: float = DEFAULT_NU,
    params: Optional[KernelParams] = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> OcSvmModel:
    x = np.atleast_2d(np.asarray(points, dtype=float))
    n = x.shape[0]
    if n < 1:
        raise ValueError("need at least one training point")
    if not 0.0 < nu <= 1.0:
        raise ValueError(f"nu {nu} outside (0, 1]")
    if not np.isfinite(x).all():
        raise ValueError("training points must be finite")
    if params is None:
        params = KernelParams(default_gamma(x))

    box = 1.0 / (nu * n)
    k = rbf_matrix(x, x, params)
    diag = np.diag(k)
    alpha = _initial_alpha(n, box)
    grad = k @ alpha

    iterations = 0
    gap = 0.0
    while True:
        up = alpha < box
        down = alpha > 0.0
        if not up.any() or not down.any():
            gap = 0.0
            break
        i = int(np.flatnonzero(up)[np.argmin(grad[up])])
        j = int(np.flatnonzero(down)[np.argmax(grad[down])])
        gap = float(grad[j] - grad[i])
        if gap <= tol:
            break
        if iterations >= max_iter:
            raise ConvergenceError("one-class SVM did not converge", gap, iterations)
        eta = max(diag[i] + diag[j] - 2.0 * k[i, j], 1e-12)
        step = min(gap / eta, box - alpha[i], alpha[j])
        alpha[i] += step
        alpha[j] -= step
        if box - alpha[i] <= ALPHA_EPS:
            alpha[i] = box
        if alpha[j] <= ALPHA_EPS:
            alpha[j] = 0.0
        grad += step * (k[:, i] - k[:, j])
        iterations += 1

    keep = alpha > 0.0
    # same summation path as decision_function
    sums = (k[:, keep] * alpha[keep]).sum(axis=1)
    free = (alpha > ALPHA_EPS) & (alpha < box - ALPHA_EPS)
    if free.any():
        rho = float(sums[free].mean())
    else:
        rho = float(sums[keep].max())

    model = OcSvmModel(
        support=x[keep],
        alpha=alpha[keep],
        rho=rho,
        nu=nu,
        params=params,
        n_train=n,
        iterations=iterations,
        kkt_gap=max(gap, 0.0),
        objective=float(0.5 * alpha @ k @ alpha),
    )
    log.debug(
        "ocsvm: n=%d nu=%.3g gamma=%.3g iterations=%d support=%d",
        n, nu, params.gamma, iterations, int(keep.sum()),
    )
    return model


def decision(model: Optional[OcSvmModel], x) -> Union[float, np.ndarray]:
    """f(x) for one point (float) or a block of points (array)."""
    if model is None:
        raise ValueError("model is not trained")
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        return float(model.decision_function(arr[None, :])[0])
    return model.decision_function(arr)


def predict(model: Optional[OcSvmModel], x) -> Union[Verdict, List[Verdict]]:
    """Verdict for one point, or one verdict per row of a block."""
    if model is None:
        raise ValueError("model is not trained")
    arr = np.asarray(x, dtype=float)
    values = model.decision_function(np.atleast_2d(arr))
    verdicts = [Verdict.INLIER if v >= 0.0 else Verdict.OUTLIER for v in values]
    return verdicts[0] if arr.ndim == 1 else verdicts
