"""
Tests for the star, general-graph and independent-vote identification procedures.
"""

import math

import numpy as np
import pytest

import src.algorithms as algorithms
from src.algorithms import (
    ensemble_vote, ledger_closed_form, num_rounds, play_round, run_gen, run_ma_od_linbai,
    run_star, survivors_after,
)
from src.bandit_core import RngStream, make_instance
from src.cache_manager import DesignCache
from src.design import design_matrix_from_weights
from src.experiments import gen_graph, gen_random_sphere_instance, gen_standard_instance
from src.linalg import quad_norm_sq
from src.models import (
    AlgorithmKind, CommLedger, HubVote, InsufficientBudgetError, InvalidPartitionError, Partition,
    PullAllocation,
)
from src.topology import build_partition, greedy_dominating_set, make_graph, star_graph


class TestSchedule:
    """Test cases for the halving schedule helpers."""

    @pytest.mark.parametrize("K,rounds", [(2, 1), (3, 2), (4, 2), (5, 3), (8, 3), (10, 4), (64, 6), (100, 7)])
    def test_num_rounds(self, K, rounds):
        """ceil(log2 K) rounds."""
        assert num_rounds(K) == rounds

    def test_survivors(self):
        """ceil(K / 2^p) arms survive round p."""
        assert [survivors_after(10, p) for p in range(1, 5)] == [5, 3, 2, 1]


class TestRunStar:
    """Test cases for run_star."""

    @pytest.mark.parametrize("d", [2, 4, 8, 10])
    @pytest.mark.parametrize("M", [1, 3])
    def test_noiseless_soundness(self, d, M):
        """Without noise the best arm is always found."""
        inst = gen_standard_instance(d, 0.1, noise_std=0.0)
        T = 40 * num_rounds(d)
        for seed in range(50):
            outcome = run_star(inst, M, T, RngStream(seed))
            assert outcome.chosen_arm == 1
            assert outcome.correct

    @pytest.mark.parametrize("K", range(2, 65))
    def test_halving(self, K):
        """Each round keeps ceil(K / 2^p) of the previous survivors."""
        inst = gen_random_sphere_instance(3, K, RngStream(K))
        T = 10 * num_rounds(K) * 3
        outcome = run_star(inst, 2, T, RngStream(1))
        assert len(outcome.traces) == num_rounds(K)
        assert len(outcome.traces[0].before) == K
        for p, trace in enumerate(outcome.traces, start=1):
            assert len(trace.after) == survivors_after(K, p)
            assert set(trace.after) <= set(trace.before)
            assert sum(trace.allocation.values()) == T // num_rounds(K)
        assert outcome.traces[-1].after == (outcome.chosen_arm,)

    def test_traces_record_reduced_dimension(self):
        """Once few arms remain the round works in their span."""
        inst = gen_standard_instance(8, 0.5, noise_std=0.0)
        outcome = run_star(inst, 2, 48, RngStream(0))
        assert [t.dim for t in outcome.traces] == [8, 4, 2]

    def test_insufficient_budget(self):
        """T below ceil(log2 K) * d is rejected."""
        inst = gen_standard_instance(10, 0.5)
        with pytest.raises(InsufficientBudgetError):
            run_star(inst, 3, 39, RngStream(0))

    def test_deterministic(self):
        """Same seed, same outcome."""
        inst = gen_standard_instance(6, 0.2)
        a = run_star(inst, 4, 90, RngStream(12)).to_json()
        b = run_star(inst, 4, 90, RngStream(12)).to_json()
        assert a == b

    def test_noisy_error_is_small(self):
        """d=10, delta=0.5, M=15, T=150 almost never errs."""
        inst = gen_standard_instance(10, 0.5)
        errors = sum(not run_star(inst, 15, 150, RngStream(seed)).correct for seed in range(20))
        assert errors <= 2

    def test_cache_does_not_change_outcome(self, mocker):
        """Cached designs reproduce uncached runs and are consulted."""
        inst = gen_standard_instance(6, 0.3)
        cache = DesignCache()
        spy = mocker.spy(cache, "get")
        plain = run_star(inst, 3, 60, RngStream(5)).to_json()
        cached = run_star(inst, 3, 60, RngStream(5), cache=cache).to_json()
        again = run_star(inst, 3, 60, RngStream(5), cache=cache).to_json()
        assert plain == cached == again
        assert spy.call_count == 2 * num_rounds(6)
        assert cache.get_stats()["hits"] >= num_rounds(6)


class TestAggregation:
    """Test cases for the server-side aggregation."""

    def test_aggregated_gram_scales_design(self):
        """On divisible allocations V_S = b M V(pi), so norms scale by 1 / (b M)."""
        rng = np.random.default_rng(2024)
        for _ in range(20):
            d = int(rng.integers(2, 6))
            K = int(rng.integers(d, d + 6))
            M = int(rng.integers(1, 6))
            arms = rng.standard_normal((K, d))
            inst = make_instance(arms, rng.standard_normal(d))
            counts = rng.integers(1, 6, size=K)
            b = int(counts.sum())
            alloc = PullAllocation(counts=tuple(int(c) for c in counts), total=b)
            server = play_round(inst, list(range(1, K + 1)), arms, alloc, M, RngStream(0), 0, 1)
            V_pi = design_matrix_from_weights(arms, counts / b)
            for a in arms:
                lhs = quad_norm_sq(server.V, a) * b * M
                assert lhs == pytest.approx(quad_norm_sq(V_pi, a), rel=1e-9)

    def test_noiseless_statistics_recover_theta(self):
        """Without noise the least-squares solve is exact."""
        theta = np.array([0.4, -0.2, 0.1])
        inst = make_instance(np.eye(3), theta, noise_std=0.0)
        alloc = PullAllocation(counts=(2, 3, 4), total=9)
        server = play_round(inst, [1, 2, 3], np.eye(3), alloc, 2, RngStream(0), 0, 1)
        np.testing.assert_allclose(np.linalg.solve(server.V, server.D), theta)

    def test_round_messages_counted_per_remote_participant(self):
        """Each remote participant costs one allocation and one statistics message."""
        inst = make_instance(np.eye(3), np.array([0.4, -0.2, 0.1]))
        alloc = PullAllocation(counts=(2, 3, 4), total=9)
        remote = CommLedger()
        play_round(inst, [1, 2, 3], np.eye(3), alloc, 4, RngStream(0), 0, 1, ledger=remote)
        assert (remote.allocation_messages, remote.statistics_messages) == (4, 4)
        hub = CommLedger()
        play_round(inst, [1, 2, 3], np.eye(3), alloc, 4, RngStream(0), 0, 1, ledger=hub, local_rank=0)
        assert (hub.allocation_messages, hub.statistics_messages) == (3, 3)
        assert hub.index_broadcasts == hub.vote_messages == 0


class TestRunGen:
    """Test cases for run_gen."""

    def test_single_block_matches_star(self):
        """A star graph with one block reproduces run_star decisions exactly."""
        rng = np.random.default_rng(77)
        for _ in range(20):
            M = int(rng.integers(1, 7))
            d = int(rng.integers(2, 7))
            seed = int(rng.integers(0, 10_000))
            inst = gen_standard_instance(d, 0.2)
            T = 3 * num_rounds(d) * d
            graph = star_graph(M)
            partition = Partition(blocks=(tuple(range(1, M + 1)),), hubs=(1,))
            gen = run_gen(inst, graph, partition, T, RngStream(seed))
            star = run_star(inst, M, T, RngStream(seed))
            assert gen.decision_json() == star.decision_json()

    @pytest.mark.parametrize("d", [2, 4, 8, 10])
    @pytest.mark.parametrize("M", [1, 3])
    def test_noiseless_soundness(self, d, M):
        """Greedy partition of a star graph finds the best arm without noise."""
        inst = gen_standard_instance(d, 0.1, noise_std=0.0)
        graph = star_graph(M)
        partition = build_partition(graph, greedy_dominating_set(graph))
        T = 40 * num_rounds(d)
        for seed in range(50):
            assert run_gen(inst, graph, partition, T, RngStream(seed)).chosen_arm == 1

    def test_invalid_partition(self):
        """Partitions that break the hub rules are refused."""
        graph = star_graph(4)
        bad = Partition(blocks=((1, 2), (3, 4)), hubs=(1, 3))
        with pytest.raises(InvalidPartitionError):
            run_gen(gen_standard_instance(4, 0.3), graph, bad, 40, RngStream(0))

    def test_one_block_per_agent_only_votes(self):
        """|P| = M gives M votes and no round trips."""
        # singleton blocks are only valid on a graph with no edges
        graph = make_graph(3, [])
        partition = Partition(blocks=((1,), (2,), (3,)), hubs=(1, 2, 3))
        outcome = run_gen(gen_standard_instance(4, 0.3, noise_std=0.0), graph, partition, 40, RngStream(0))
        assert outcome.ledger.data_messages == 3
        assert outcome.ledger.vote_messages == 3
        assert len(outcome.votes) == 3


class TestLedger:
    """Test cases for communication accounting."""

    def test_star_and_gen_match_closed_forms(self):
        """Simulated message counts equal the closed forms exactly."""
        rng = np.random.default_rng(31)
        for i in range(50):
            M = int(rng.integers(2, 11))
            d = int(rng.integers(2, 9))
            inst = gen_standard_instance(d, 0.3)
            T = 2 * num_rounds(d) * d
            R = num_rounds(inst.num_arms)

            star = run_star(inst, M, T, RngStream(i))
            assert star.ledger.data_messages == 2 * M * R
            assert star.ledger == ledger_closed_form("star", M, inst.num_arms)

            graph = gen_graph("random", M, 0.5, seed=i)
            partition = build_partition(graph, greedy_dominating_set(graph))
            P = len(partition.blocks)
            gen = run_gen(inst, graph, partition, T, RngStream(i))
            assert gen.ledger.data_messages == 2 * (M - P) * R + P
            assert gen.ledger == ledger_closed_form(AlgorithmKind.GEN, M, inst.num_arms, partition)

    def test_ledger_follows_simulated_exchanges(self, mocker):
        """A run that talks to fewer agents records fewer messages."""
        real_play_round = algorithms.play_round

        def one_participant(inst, active, proj, alloc, participants, *args, **kwargs):
            return real_play_round(inst, active, proj, alloc, 1, *args, **kwargs)

        mocker.patch.object(algorithms, "play_round", side_effect=one_participant)
        outcome = run_star(gen_standard_instance(10, 0.5), 15, 150, RngStream(0))
        assert outcome.ledger.allocation_messages == num_rounds(10)
        assert outcome.ledger.statistics_messages == num_rounds(10)

    def test_statistics_match_remote_pulls(self, mocker):
        """One statistics message per remote agent that sampled in a round."""
        spy = mocker.spy(algorithms, "sample_pulls")
        star = run_star(gen_standard_instance(6, 0.3), 5, 60, RngStream(2))
        assert star.ledger.statistics_messages == spy.call_count

        spy.reset_mock()
        graph = gen_graph("path", 7, 0.2, seed=0)
        partition = build_partition(graph, greedy_dominating_set(graph))
        gen = run_gen(gen_standard_instance(6, 0.3), graph, partition, 60, RngStream(2))
        hub_pulls = len(partition.blocks) * num_rounds(6)
        assert gen.ledger.statistics_messages == spy.call_count - hub_pulls
        assert gen.ledger.vote_messages == len(partition.blocks)

    def test_ma_od_closed_form(self):
        """Independent agents only send votes."""
        assert ledger_closed_form("ma-od", 7, 100).data_messages == 7

    def test_gen_needs_partition(self):
        """The gen formula depends on the partition size."""
        with pytest.raises(ValueError):
            ledger_closed_form("gen", 5, 10)

    def test_star_index_broadcasts(self):
        """Every agent receives the K arm indices once."""
        assert ledger_closed_form("star", 15, 100).index_broadcasts == 1500


class TestVoting:
    """Test cases for ensemble_vote and run_ma_od_linbai."""

    def test_majority(self):
        """The most common arm wins."""
        votes = [HubVote(0, 1, 3, 0.5), HubVote(1, 2, 3, 0.9), HubVote(2, 3, 1, 0.1)]
        assert ensemble_vote(votes) == 3

    def test_tie_by_uncertainty(self):
        """Tied arms are split by the lowest reported uncertainty."""
        votes = [HubVote(0, 1, 2, 0.4), HubVote(1, 2, 5, 0.2), HubVote(2, 3, 2, 0.3), HubVote(3, 4, 5, 0.6)]
        assert ensemble_vote(votes) == 5

    def test_tie_by_index(self):
        """Equal uncertainty falls back to the lower arm."""
        votes = [HubVote(0, 1, 4, 0.2), HubVote(1, 2, 2, 0.2)]
        assert ensemble_vote(votes) == 2

    def test_no_votes(self):
        """An empty vote is an error."""
        with pytest.raises(ValueError):
            ensemble_vote([])

    def test_single_agent_matches_star(self):
        """One independent agent reproduces run_star(M=1)."""
        inst = gen_standard_instance(5, 0.2)
        for seed in range(10):
            ma = run_ma_od_linbai(inst, 1, 60, RngStream(seed))
            star = run_star(inst, 1, 60, RngStream(seed))
            assert ma.decision_json() == star.decision_json()

    def test_noiseless_vote(self):
        """All agents agree without noise."""
        outcome = run_ma_od_linbai(gen_standard_instance(6, 0.3, noise_std=0.0), 4, 60, RngStream(3))
        assert outcome.chosen_arm == 1
        assert [v.arm for v in outcome.votes] == [1, 1, 1, 1]
        assert outcome.ledger.data_messages == 4
        assert outcome.algorithm is AlgorithmKind.MA_OD

    def test_vote_uncertainty_is_positive(self):
        """Reported uncertainties come from the final aggregated Gram matrix."""
        outcome = run_ma_od_linbai(gen_standard_instance(4, 0.3), 2, 40, RngStream(1))
        assert all(v.uncertainty > 0 and math.isfinite(v.uncertainty) for v in outcome.votes)
