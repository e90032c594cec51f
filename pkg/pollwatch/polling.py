"""pollwatch — polling.

A poll is a joint-frequency table: for every combination of attribute categories,
how many respondents voted A and how many voted B.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy import stats

from pollwatch.errors import PollError
from pollwatch.popgen import AttributeSchema, Population
from pollwatch.streams import POLL_NOISE, POLL_SAMPLE, substream
from pollwatch.votecast import Ballots, RegionResults

log = logging.getLogger(__name__)

TRUNCATION = 3.0
POLL_SCOPES = ("global", "region")

# E|Z| for Z ~ N(0, 1) truncated to [-3, 3]
_MEAN_ABS_TRUNC = (
    2.0 * (stats.norm.pdf(0.0) - stats.norm.pdf(TRUNCATION))
    / (2.0 * stats.norm.cdf(TRUNCATION) - 1.0)
)


@dataclass(frozen=True, eq=False)
class PollTable:
    """counts_a / counts_b have one axis per attribute, sized by its categories."""

    schema: AttributeSchema
    counts_a: np.ndarray
    counts_b: np.ndarray
    rate: float
    seed: int
    respondents: int
    target_error: float = 0.0
    noise_seed: Optional[int] = None
    epsilon: float = 0.0

    def __post_init__(self) -> None:
        if self.counts_a.shape != self.schema.sizes or self.counts_b.shape != self.schema.sizes:
            raise PollError(f"poll cells must have shape {self.schema.sizes}")
        self.counts_a.setflags(write=False)
        self.counts_b.setflags(write=False)

    @property
    def total(self) -> float:
        return float(self.counts_a.sum() + self.counts_b.sum())

    @property
    def share_a(self) -> float:
        """Poll-implied global share for A."""
        total = self.total
        if total <= 0:
            raise PollError("poll has no respondents")
        return float(self.counts_a.sum() / total)


def draw_poll(population: Population, ballots: Ballots, rate: float, seed: int) -> PollTable:
    """Sample floor(rate × N) individuals without replacement and record their votes."""
    if not 0.0 < rate < 1.0:
        raise PollError(f"poll rate {rate} outside (0, 1)")
    if ballots.vote_a.shape[0] != population.size:
        raise PollError("ballots do not cover the population")
    n = math.floor(rate * population.size + 1e-9)
    if n == 0:
        raise PollError(f"rate {rate} on {population.size} individuals yields no respondents")

    rng = substream(seed, POLL_SAMPLE)
    sample = rng.choice(population.size, size=n, replace=False)
    sizes = population.schema.sizes
    flat = np.ravel_multi_index(tuple(population.codes[sample].T.astype(np.int64)), sizes)
    votes = ballots.vote_a[sample]
    n_cells = int(np.prod(sizes))
    counts_a = np.bincount(flat[votes], minlength=n_cells).reshape(sizes)
    counts_b = np.bincount(flat[~votes], minlength=n_cells).reshape(sizes)
    log.debug("poll: %d respondents, share A %.4f", n, votes.mean())
    return PollTable(population.schema, counts_a, counts_b, rate=rate, seed=seed, respondents=n)


def noise_sigma(share: float, target_error: float) -> float:
    """Std of the pre-truncation Gaussian that yields mean |error| ≈ target_error at this share."""
    spread = 2.0 * share * (1.0 - share)
    if spread == 0.0:
        return 0.0
    return target_error / (spread * _MEAN_ABS_TRUNC)


def inject_poll_noise(poll: PollTable, target_error: float, seed: int) -> PollTable:
    """Scale every A-count by (1 + ε) and every B-count by (1 − ε) with one shared ε.

    ε is a Gaussian truncated at ±3σ, σ from noise_sigma. Counts are clipped at 0.
    """
    if target_error < 0:
        raise PollError("target_error must be non-negative")
    if target_error == 0:
        return poll

    share = poll.share_a
    sigma = noise_sigma(share, target_error)
    if sigma == 0.0:
        log.warning("poll is unanimous (share A %.1f); noise cannot move it", share)
        return replace(poll, target_error=target_error, noise_seed=seed)
    if sigma > 1.0 / TRUNCATION:
        log.warning("poll noise sigma %.3f capped at %.3f", sigma, 1.0 / TRUNCATION)
        sigma = 1.0 / TRUNCATION

    rng = substream(seed, POLL_NOISE)
    z = float(stats.truncnorm.rvs(-TRUNCATION, TRUNCATION, random_state=rng))
    eps = sigma * z
    counts_a = np.clip(poll.counts_a * (1.0 + eps), 0.0, None)
    counts_b = np.clip(poll.counts_b * (1.0 - eps), 0.0, None)
    return replace(
        poll,
        counts_a=counts_a,
        counts_b=counts_b,
        target_error=target_error,
        noise_seed=seed,
        epsilon=eps,
    )


def poll_error(
    poll: PollTable,
    results: RegionResults,
    scope: str = "global",
    z_hat: Optional[np.ndarray] = None,
) -> float:
    """|poll-implied share − actual share|.

    scope="region" instead averages |ẑ − actual| over regions; pass the
    per-region poll predictions as z_hat.
    """
    if poll.total <= 0:
        raise PollError("poll has no respondents")
    if scope == "global":
        return abs(poll.share_a - results.global_share)
    if scope == "region":
        if z_hat is None:
            raise PollError("region scope needs per-region poll predictions")
        z = np.asarray(z_hat, dtype=float)
        if z.shape != (results.n_regions,):
            raise PollError(f"expected {results.n_regions} poll predictions, got {z.shape}")
        return float(np.mean(np.abs(z - results.share_a)))
    raise PollError(f"unknown poll error scope {scope!r}")
