"""pollwatch — vote casting.

A randomly initialised one-hidden-layer network turns each individual's one-hot
attributes into a voting score. Scores are split by one global threshold so the
popular vote hits a target share, then uniform noise flips near-threshold votes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from pollwatch.errors import VotingError
from pollwatch.popgen import AttributeSchema, Individual, Population
from pollwatch.streams import NETWORK, SCORES, TIES, VOTE_NOISE, substream

log = logging.getLogger(__name__)

ACTIVATIONS = ("identity", "tanh")


class Candidate(str, Enum):
    A = "A"
    B = "B"

    @property
    def other(self) -> "Candidate":
        return Candidate.B if self is Candidate.A else Candidate.A


def encode(schema: AttributeSchema, codes: np.ndarray) -> np.ndarray:
    """One-hot encode category codes; accepts one row or a (n, attributes) block."""
    codes = np.atleast_2d(np.asarray(codes))
    _check_codes(schema, codes)
    out = np.zeros((codes.shape[0], schema.n_features))
    rows = np.arange(codes.shape[0])[:, None]
    out[rows, schema.offsets + codes] = 1.0
    return out


def _check_codes(schema: AttributeSchema, codes: np.ndarray) -> None:
    if codes.shape[1] != len(schema.attributes):
        raise VotingError(
            f"individual has {codes.shape[1]} attributes, network expects {len(schema.attributes)}"
        )
    if (codes < 0).any() or (codes >= np.asarray(schema.sizes)).any():
        raise VotingError("category index out of range for the network's schema")


# ── Network ─────────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class VoteNetwork:
    """weights has shape (input features, 2 × input features)."""

    schema: AttributeSchema
    weights: np.ndarray
    dropout_rate: float = 0.1
    activation: str = "identity"

    def __post_init__(self) -> None:
        n_in = self.schema.n_features
        if self.weights.shape != (n_in, 2 * n_in):
            raise VotingError(f"weights must have shape ({n_in}, {2 * n_in}), got {self.weights.shape}")
        if not np.isfinite(self.weights).all():
            raise VotingError("network weights must be finite")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise VotingError(f"dropout_rate {self.dropout_rate} outside [0, 1)")
        if self.activation not in ACTIVATIONS:
            raise VotingError(f"unknown activation {self.activation!r}")
        self.weights.setflags(write=False)

    @property
    def input_size(self) -> int:
        return self.weights.shape[0]

    @property
    def hidden_size(self) -> int:
        return self.weights.shape[1]

    def hidden(self, codes: np.ndarray) -> np.ndarray:
        """Activated hidden layer for a (n, attributes) block of codes."""
        codes = np.atleast_2d(np.asarray(codes))
        _check_codes(self.schema, codes)
        pre = self.weights[self.schema.offsets + codes].sum(axis=1)
        return np.tanh(pre) if self.activation == "tanh" else pre

    def score_block(self, codes: np.ndarray, rng: Optional[np.random.Generator]) -> np.ndarray:
        """Scores for consecutive individuals; draws the same masks as repeated voting_score calls."""
        h = self.hidden(codes)
        if self.dropout_rate > 0.0:
            if rng is None:
                raise VotingError("dropout needs a random stream")
            h = np.where(rng.random(h.shape) >= self.dropout_rate, h, 0.0)
        return h.sum(axis=1)


def init_vote_network(
    schema: AttributeSchema,
    dropout_rate: float = 0.1,
    seed: int = 0,
    activation: str = "identity",
) -> VoteNetwork:
    n_in = schema.n_features
    if n_in == 0:
        raise VotingError("schema has no encoded features")
    rng = substream(seed, NETWORK)
    weights = rng.normal(0.0, 1.0 / np.sqrt(n_in), size=(n_in, 2 * n_in))
    return VoteNetwork(schema, weights, dropout_rate, activation)


def voting_score(
    network: VoteNetwork, individual: Individual, rng: Optional[np.random.Generator] = None
) -> float:
    """Sum of the hidden layer with a fresh dropout mask."""
    return float(network.score_block(np.asarray([individual.codes]), rng)[0])


def target_count(n: int, target_share: float) -> int:
    """round(target_share × n), halves rounded up."""
    return int(np.floor(target_share * n + 0.5))


def compute_threshold(scores: Sequence[float], target_share: float) -> float:
    """The target_count-th highest score.

    Fewer than target_count scores lie strictly above it; cast_votes breaks
    ties at the threshold.
    """
    arr = np.asarray(scores, dtype=float)
    if arr.size == 0:
        raise VotingError("no scores to threshold")
    if not 0.0 <= target_share <= 1.0:
        raise VotingError(f"target_share {target_share} outside [0, 1]")
    n = arr.size
    k = target_count(n, target_share)
    if k == 0:
        return float(np.nextafter(arr.max(), np.inf))
    return float(np.partition(arr, n - k)[n - k])


# ── Ballots ─────────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class Ballots:
    """Per-individual votes plus fraud bookkeeping.

    `removed` marks deleted ballots; `extra_a` / `extra_b` count synthetic
    ballots added per region.
    """

    region_ids: np.ndarray
    vote_a: np.ndarray
    removed: np.ndarray
    extra_a: np.ndarray
    extra_b: np.ndarray
    scores: np.ndarray
    threshold: float
    n_regions: int
    target_share: float
    noise_halfwidth: float

    def __post_init__(self) -> None:
        for arr in (self.region_ids, self.vote_a, self.removed, self.extra_a, self.extra_b, self.scores):
            arr.setflags(write=False)

    @property
    def counts_a(self) -> np.ndarray:
        cast = self.vote_a & ~self.removed
        return np.bincount(self.region_ids[cast], minlength=self.n_regions) + self.extra_a

    @property
    def counts_b(self) -> np.ndarray:
        cast = ~self.vote_a & ~self.removed
        return np.bincount(self.region_ids[cast], minlength=self.n_regions) + self.extra_b

    def votes(self) -> np.ndarray:
        return np.where(self.vote_a, Candidate.A.value, Candidate.B.value)


def cast_votes(
    population: Population,
    network: VoteNetwork,
    target_share: float,
    noise_halfwidth: Optional[float] = None,
    seed: int = 0,
    noise_scale: float = 0.25,
) -> Ballots:
    """Score everyone, threshold on the unperturbed scores, then add uniform noise.

    noise_halfwidth defaults to noise_scale × std of the unperturbed scores.
    Each region draws dropout masks and noise from its own substreams. With
    zero noise, a seeded draw among scores tied at the threshold makes exactly
    target_count individuals vote A.
    """
    if noise_halfwidth is not None and noise_halfwidth < 0:
        raise VotingError("noise_halfwidth must be non-negative")
    if population.schema != network.schema:
        raise VotingError("population and network use different schemas")

    members = population.members()
    scores = np.empty(population.size)
    for r, idx in enumerate(members):
        scores[idx] = network.score_block(population.codes[idx], substream(seed, SCORES, r))

    threshold = compute_threshold(scores, target_share)
    if noise_halfwidth is None:
        noise_halfwidth = noise_scale * float(scores.std())

    perturbed = scores.copy()
    if noise_halfwidth > 0:
        for r, idx in enumerate(members):
            rng = substream(seed, VOTE_NOISE, r)
            perturbed[idx] += rng.uniform(-noise_halfwidth, noise_halfwidth, size=idx.size)
    vote_a = perturbed > threshold
    tied = np.flatnonzero(perturbed == threshold)
    if noise_halfwidth == 0 and tied.size:
        need = int(np.clip(target_count(population.size, target_share) - vote_a.sum(), 0, tied.size))
        vote_a[substream(seed, TIES).choice(tied, size=need, replace=False)] = True
    else:
        vote_a[tied] = True
    log.debug(
        "threshold %.6g, halfwidth %.6g, share A %.4f", threshold, noise_halfwidth, vote_a.mean()
    )

    n = population.size
    zeros = np.zeros(population.n_regions, dtype=np.int64)
    return Ballots(
        region_ids=population.region_ids.copy(),
        vote_a=vote_a,
        removed=np.zeros(n, dtype=bool),
        extra_a=zeros,
        extra_b=zeros.copy(),
        scores=scores,
        threshold=threshold,
        n_regions=population.n_regions,
        target_share=target_share,
        noise_halfwidth=float(noise_halfwidth),
    )


# ── Tally ───────────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class RegionResults:
    counts_a: np.ndarray
    counts_b: np.ndarray

    @property
    def n_regions(self) -> int:
        return int(self.counts_a.shape[0])

    @property
    def totals(self) -> np.ndarray:
        return self.counts_a + self.counts_b

    @property
    def share_a(self) -> np.ndarray:
        totals = self.totals
        return np.divide(
            self.counts_a, totals, out=np.zeros(self.n_regions), where=totals > 0
        )

    @property
    def share_b(self) -> np.ndarray:
        totals = self.totals
        return np.divide(
            self.counts_b, totals, out=np.zeros(self.n_regions), where=totals > 0
        )

    @property
    def global_share(self) -> float:
        total = int(self.totals.sum())
        return float(self.counts_a.sum() / total) if total else 0.0

    def winners(self) -> np.ndarray:
        """'A', 'B' or '' (tie) per region."""
        a, b = self.counts_a, self.counts_b
        return np.where(a > b, Candidate.A.value, np.where(b > a, Candidate.B.value, ""))


def tally(ballots: Ballots, population: Population) -> RegionResults:
    if ballots.region_ids.shape[0] != population.size:
        raise VotingError(
            f"{ballots.region_ids.shape[0]} ballots for {population.size} individuals"
        )
    if ballots.n_regions != population.n_regions or not np.array_equal(
        ballots.region_ids, population.region_ids
    ):
        raise VotingError("ballot regions do not match the population")
    results = RegionResults(
        counts_a=ballots.counts_a.astype(np.int64), counts_b=ballots.counts_b.astype(np.int64)
    )
    empty = np.flatnonzero(results.totals == 0)
    if empty.size:
        log.warning("regions with no votes (share reported as 0): %s", empty.tolist())
    return results
