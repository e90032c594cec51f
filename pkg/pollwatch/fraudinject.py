"""pollwatch — labeled fraud injection.

Fraud runs after polling. It picks regions uniformly, then subjects each eligible
ballot in them to fraud independently, regardless of the voter's attributes or
mail-in status.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from pollwatch.errors import FraudError
from pollwatch.popgen import Population
from pollwatch.streams import FRAUD, FRAUD_REGIONS, substream
from pollwatch.votecast import Ballots, Candidate, RegionResults, tally

log = logging.getLogger(__name__)


class FraudMode(str, Enum):
    DELETION = "deletion"
    ADDITION = "addition"
    SWITCHING = "switching"


@dataclass(frozen=True)
class FraudSpec:
    mode: FraudMode
    n_fraud_regions: int
    probability: float
    favored: Candidate = Candidate.A
    seed: int = 0
    requested_level: Optional[float] = None

    def validate(self, n_regions: int) -> None:
        if not 0.0 <= self.probability <= 1.0:
            raise FraudError(f"fraud probability {self.probability} outside [0, 1]")
        if self.n_fraud_regions < 0:
            raise FraudError("n_fraud_regions must be non-negative")
        if self.n_fraud_regions > n_regions:
            raise FraudError(
                f"cannot pick {self.n_fraud_regions} fraud regions out of {n_regions}"
            )

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "n_fraud_regions": self.n_fraud_regions,
            "probability": self.probability,
            "favored": self.favored.value,
            "seed": self.seed,
            "requested_level": self.requested_level,
        }


@dataclass(frozen=True, eq=False)
class FraudLabels:
    """Ground truth per region, plus the global before/after shares for A."""

    fraudulent: np.ndarray
    affected: np.ndarray
    mode: FraudMode
    favored: Candidate
    probability: float
    pre_share: float
    post_share: float
    base_votes: int
    requested_level: Optional[float] = None

    @property
    def n_regions(self) -> int:
        return int(self.fraudulent.shape[0])

    @property
    def fraud_regions(self) -> np.ndarray:
        return np.flatnonzero(self.fraudulent)

    @property
    def realized_level(self) -> float:
        """Affected votes as a share of the fraud regions' pre-fraud votes."""
        return float(self.affected.sum() / self.base_votes) if self.base_votes else 0.0


def probability_for_level(level: float, mode: FraudMode, favored_share: float) -> float:
    """Per-ballot probability whose expected affected votes are `level` of all votes.

    Switching and deletion can only touch the non-favored share of votes;
    addition draws against the full region size.
    """
    if not 0.0 <= level <= 1.0:
        raise FraudError(f"fraud level {level} outside [0, 1]")
    if mode is FraudMode.ADDITION:
        return level
    eligible = 1.0 - favored_share
    if eligible <= 0.0:
        raise FraudError("no ballots for the non-favored candidate to tamper with")
    p = level / eligible
    if p > 1.0:
        log.warning("fraud level %.3f unreachable at favored share %.3f; using p=1", level, favored_share)
    return float(min(p, 1.0))


def choose_fraud_regions(n_regions: int, spec: FraudSpec) -> np.ndarray:
    spec.validate(n_regions)
    rng = substream(spec.seed, FRAUD_REGIONS)
    return np.sort(rng.choice(n_regions, size=spec.n_fraud_regions, replace=False))


def inject_fraud(
    ballots: Ballots, population: Population, spec: FraudSpec
) -> Tuple[Ballots, FraudLabels]:
    pre = tally(ballots, population)
    regions = choose_fraud_regions(population.n_regions, spec)
    favored_a = spec.favored is Candidate.A

    vote_a = ballots.vote_a.copy()
    removed = ballots.removed.copy()
    extra_a = ballots.extra_a.copy()
    extra_b = ballots.extra_b.copy()
    affected = np.zeros(population.n_regions, dtype=np.int64)
    members = population.members()

    for r in regions:
        rng = substream(spec.seed, FRAUD, int(r))
        idx = members[r]
        if spec.mode is FraudMode.ADDITION:
            added = int(rng.binomial(idx.size, spec.probability))
            if favored_a:
                extra_a[r] += added
            else:
                extra_b[r] += added
            affected[r] = added
            continue
        present = idx[~removed[idx]]
        eligible = present[vote_a[present] != favored_a]
        hit = eligible[rng.random(eligible.size) < spec.probability]
        if spec.mode is FraudMode.SWITCHING:
            vote_a[hit] = favored_a
        else:
            removed[hit] = True
        affected[r] = hit.size

    # probability 0 leaves every region clean
    fraudulent = np.zeros(population.n_regions, dtype=bool)
    if spec.probability > 0:
        fraudulent[regions] = True
    post_ballots = replace(
        ballots, vote_a=vote_a, removed=removed, extra_a=extra_a, extra_b=extra_b
    )
    post = tally(post_ballots, population)

    if spec.mode is FraudMode.DELETION:
        emptied = np.flatnonzero(fraudulent & (post.totals == 0))
        if emptied.size:
            log.warning("deletion fraud left regions without votes: %s", emptied.tolist())

    labels = FraudLabels(
        fraudulent=fraudulent,
        affected=affected,
        mode=spec.mode,
        favored=spec.favored,
        probability=spec.probability,
        pre_share=pre.global_share,
        post_share=post.global_share,
        base_votes=int(pre.totals[fraudulent].sum()),
        requested_level=spec.requested_level,
    )
    if spec.requested_level is not None:
        log.info(
            "fraud level requested %.4f, realized %.4f", spec.requested_level, labels.realized_level
        )
    return post_ballots, labels


def fraud_significance(labels: FraudLabels, pre: RegionResults, post: RegionResults) -> float:
    """Share of fraud regions whose majority moved from the other candidate to the favored one."""
    regions = labels.fraud_regions
    if regions.size == 0:
        raise FraudError("no fraudulent regions to measure")
    if labels.favored is Candidate.A:
        fav_pre, oth_pre, fav_post, oth_post = pre.counts_a, pre.counts_b, post.counts_a, post.counts_b
    else:
        fav_pre, oth_pre, fav_post, oth_post = pre.counts_b, pre.counts_a, post.counts_b, post.counts_a
    flipped = (oth_pre[regions] > fav_pre[regions]) & (fav_post[regions] > oth_post[regions])
    return float(flipped.sum() / regions.size)
