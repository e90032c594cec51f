"""Tests for pollwatch.votecast — scoring network, threshold and tally."""

import numpy as np
import pytest

from pollwatch.config import BUNDLED_CONFIG
from pollwatch.errors import VotingError
from pollwatch.popgen import Individual, generate_population, load_schema
from pollwatch.streams import substream
from pollwatch.votecast import (
    Candidate,
    RegionResults,
    VoteNetwork,
    cast_votes,
    compute_threshold,
    encode,
    init_vote_network,
    tally,
    target_count,
    voting_score,
)

# ── Network ───────────────────────────────────────────


class TestEncode:
    """One-hot encoding of category codes."""

    def test_one_hot(self, schema):
        x = encode(schema, [2, 0, 1])
        assert x.tolist() == [[0, 0, 1, 1, 0, 0, 1]]

    def test_block_rows_sum_to_attribute_count(self, schema):
        pop = generate_population(schema, 2, 50, 0)
        assert (encode(schema, pop.codes).sum(axis=1) == 3).all()

    def test_wrong_attribute_count(self, schema):
        with pytest.raises(VotingError, match="attributes"):
            encode(schema, [0, 0])

    def test_category_out_of_range(self, schema):
        with pytest.raises(VotingError, match="out of range"):
            encode(schema, [3, 0, 0])


class TestVoteNetwork:
    """Random single-hidden-layer scorer."""

    def test_shape(self, schema):
        net = init_vote_network(schema, seed=1)
        assert net.weights.shape == (7, 14)
        assert net.hidden_size == 2 * net.input_size

    def test_same_seed_same_weights(self, schema):
        assert np.array_equal(init_vote_network(schema, seed=3).weights, init_vote_network(schema, seed=3).weights)

    def test_no_dropout_is_linear_sum(self, schema):
        net = init_vote_network(schema, dropout_rate=0.0, seed=1)
        person = Individual((1, 0, 1), False, 0)
        expected = float(encode(schema, person.codes)[0] @ net.weights.sum(axis=1))
        assert voting_score(net, person) == pytest.approx(expected)

    def test_block_matches_sequential_scores(self, schema):
        """Scoring a block draws the same dropout masks as scoring one by one."""
        net = init_vote_network(schema, dropout_rate=0.3, seed=1)
        pop = generate_population(schema, 1, 6, 0)
        block = net.score_block(pop.codes, substream(11, 0))
        rng = substream(11, 0)
        sequential = [voting_score(net, pop.individual(i), rng) for i in range(6)]
        assert np.allclose(block, sequential)

    def test_dropout_halves_expected_score(self, schema):
        """Dropped units contribute nothing; survivors are not rescaled."""
        net = init_vote_network(schema, dropout_rate=0.5, seed=1)
        full = VoteNetwork(schema, net.weights, dropout_rate=0.0)
        codes = np.tile([1, 0, 1], (10_000, 1))
        samples = net.score_block(codes, substream(4, 0))
        expected = 0.5 * full.score_block(codes[:1], None)[0]
        se = samples.std(ddof=1) / np.sqrt(samples.size)
        assert abs(samples.mean() - expected) <= 3 * se

    def test_dropout_needs_stream(self, schema):
        net = init_vote_network(schema, dropout_rate=0.1, seed=1)
        with pytest.raises(VotingError, match="random stream"):
            voting_score(net, Individual((0, 0, 0), False, 0), None)

    def test_dropout_rate_bounds(self, schema):
        with pytest.raises(VotingError):
            init_vote_network(schema, dropout_rate=1.0)

    def test_wrong_weight_shape(self, schema):
        with pytest.raises(VotingError, match="shape"):
            VoteNetwork(schema, np.zeros((7, 7)))

    def test_tanh_bounds_hidden_units(self, schema):
        net = init_vote_network(schema, seed=1, activation="tanh")
        h = net.hidden(np.array([[0, 1, 1]]))
        assert (np.abs(h) < 1).all()


# ── Threshold ─────────────────────────────────────────


class TestComputeThreshold:
    """The round(target × n)-th highest score."""

    def test_exact_count(self):
        scores = np.arange(1.0, 11.0)
        t = compute_threshold(scores, 0.3)
        assert t == 8.0
        assert (scores >= t).sum() == 3

    def test_zero_target(self):
        scores = np.array([0.1, 0.5, 0.2])
        assert (scores >= compute_threshold(scores, 0.0)).sum() == 0

    def test_full_target(self):
        scores = np.array([0.1, 0.5, 0.2])
        assert (scores >= compute_threshold(scores, 1.0)).sum() == 3

    def test_ties_sit_at_threshold(self):
        scores = np.array([1.0, 2.0, 2.0, 2.0, 3.0])
        t = compute_threshold(scores, 0.4)
        assert t == 2.0
        assert (scores > t).sum() < target_count(5, 0.4) <= (scores >= t).sum()

    def test_empty_scores(self):
        with pytest.raises(VotingError):
            compute_threshold([], 0.5)

    def test_target_out_of_range(self):
        with pytest.raises(VotingError):
            compute_threshold([1.0, 2.0], 1.5)


# ── Casting & tally ───────────────────────────────────


class TestCastVotes:
    """Threshold on unperturbed scores, then uniform noise."""

    def test_share_near_target(self):
        schema = load_schema(BUNDLED_CONFIG)
        pop = generate_population(schema, 10, 20000, seed=2)
        net = init_vote_network(schema, seed=2)
        ballots = cast_votes(pop, net, 0.5, seed=2)
        assert abs(ballots.vote_a.mean() - 0.5) < 0.03

    def test_threshold_from_unperturbed_scores(self, schema):
        pop = generate_population(schema, 4, 400, 0)
        ballots = cast_votes(pop, init_vote_network(schema, seed=0), 0.4, seed=0)
        assert ballots.threshold == compute_threshold(ballots.scores, 0.4)

    def test_zero_noise_follows_scores(self, schema):
        pop = generate_population(schema, 4, 400, 0)
        ballots = cast_votes(pop, init_vote_network(schema, seed=0), 0.4, noise_halfwidth=0.0, seed=0)
        assert ballots.vote_a[ballots.scores > ballots.threshold].all()
        assert not ballots.vote_a[ballots.scores < ballots.threshold].any()
        assert ballots.vote_a.sum() == 160

    def test_ties_at_threshold_give_exact_count(self, schema):
        """Without dropout every cell shares one score, so most voters tie."""
        pop = generate_population(schema, 4, 401, 0)
        net = init_vote_network(schema, dropout_rate=0.0, seed=0)
        ballots = cast_votes(pop, net, 0.5, noise_halfwidth=0.0, seed=0)
        tied = ballots.scores == ballots.threshold
        assert tied.sum() > 1
        assert ballots.vote_a.sum() == target_count(401, 0.5) == 201
        assert ballots.vote_a[ballots.scores > ballots.threshold].all()
        again = cast_votes(pop, net, 0.5, noise_halfwidth=0.0, seed=0)
        assert np.array_equal(ballots.vote_a, again.vote_a)

    def test_flip_rate_falls_with_distance_from_threshold(self, schema):
        """Votes flip only within the noise halfwidth, and less often further out."""
        net = init_vote_network(schema, seed=6)
        gaps, flips = [], []
        for seed in range(20):
            pop = generate_population(schema, 4, 2000, seed)
            ballots = cast_votes(pop, net, 0.5, seed=seed)
            gap = np.abs(ballots.scores - ballots.threshold) / ballots.noise_halfwidth
            gaps.append(gap)
            flips.append(ballots.vote_a != (ballots.scores >= ballots.threshold))
        gap = np.concatenate(gaps)
        flip = np.concatenate(flips)
        edges = [0.0, 0.25, 0.5, 0.75, 1.0, np.inf]
        rates = [flip[(gap >= lo) & (gap < hi)].mean() for lo, hi in zip(edges, edges[1:])]
        assert all(a >= b for a, b in zip(rates, rates[1:]))
        assert rates[0] > 0.3
        assert rates[-1] == 0.0

    def test_default_halfwidth_scales_score_spread(self, schema):
        pop = generate_population(schema, 4, 400, 0)
        ballots = cast_votes(pop, init_vote_network(schema, seed=0), 0.5, seed=0, noise_scale=0.5)
        assert ballots.noise_halfwidth == pytest.approx(0.5 * ballots.scores.std())

    def test_region_scores_ignore_other_regions(self, schema):
        small = generate_population(schema, 10, 100, seed=3)
        large = generate_population(schema, 20, 200, seed=3)
        net = init_vote_network(schema, seed=3)
        a = cast_votes(small, net, 0.5, seed=3)
        b = cast_votes(large, net, 0.5, seed=3)
        assert np.array_equal(a.scores[small.members()[0]], b.scores[large.members()[0]])

    def test_reproducible(self, schema):
        pop = generate_population(schema, 4, 400, 0)
        net = init_vote_network(schema, seed=0)
        assert np.array_equal(cast_votes(pop, net, 0.5, seed=5).vote_a, cast_votes(pop, net, 0.5, seed=5).vote_a)

    def test_negative_halfwidth(self, schema):
        pop = generate_population(schema, 2, 20, 0)
        with pytest.raises(VotingError):
            cast_votes(pop, init_vote_network(schema), 0.5, noise_halfwidth=-1.0)

    def test_schema_mismatch(self, schema):
        census = load_schema(BUNDLED_CONFIG)
        pop = generate_population(schema, 2, 20, 0)
        with pytest.raises(VotingError, match="schemas"):
            cast_votes(pop, init_vote_network(census), 0.5)


class TestTally:
    """Per-region counts of A and B."""

    def test_counts_cover_every_voter(self, election):
        results = election.results
        assert (results.totals == election.population.region_sizes).all()
        assert results.global_share == pytest.approx(election.ballots.vote_a.mean())

    def test_ballots_from_another_population(self, election, schema):
        other = generate_population(schema, 20, 400, 0)
        with pytest.raises(VotingError):
            tally(election.ballots, other)

    def test_empty_region_share_is_zero(self):
        results = RegionResults(np.array([3, 0]), np.array([1, 0]))
        assert results.share_a.tolist() == [0.75, 0.0]

    def test_winners(self):
        results = RegionResults(np.array([3, 2, 1]), np.array([1, 2, 4]))
        assert results.winners().tolist() == ["A", "", "B"]

    def test_candidate_other(self):
        assert Candidate.A.other is Candidate.B
        assert Candidate.B.other is Candidate.A
