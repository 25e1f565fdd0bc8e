"""
Tests for instance generators, bound evaluators and Monte-Carlo estimation.
"""

import math

import numpy as np
import pytest

from src.bandit_core import RngStream, expected_rewards, gap_profile
from src.experiments import (
    _Resample, aggregate, bound_consistent, bound_gap_factor, comm_gap_factor,
    communication_lower_bound, gen_graph, gen_random_sphere_instance, gen_standard_instance,
    grid_points, lemma1_bound, lemma2_bound, log_error_slope, lower_bound_exponent, monte_carlo,
    spearman_trend, theorem1_bound, theorem2_bound,
)
from src.models import (
    AlgorithmKind, ConfigError, ErrorEstimate, GenerationFailedError, GraphSpec, InstanceFamily,
    SweepConfig, TrialFailedError,
)
from src.topology import is_connected


class TestGenerators:
    """Test cases for the synthetic instance and graph generators."""

    def test_standard_instance(self):
        """Canonical arms with theta = delta e_1."""
        inst = gen_standard_instance(10, 0.3)
        np.testing.assert_array_equal(inst.arms, np.eye(10))
        np.testing.assert_allclose(inst.theta, [0.3] + [0.0] * 9)
        assert inst.noise_std == 1.0
        assert gap_profile(inst).best_index == 1

    def test_standard_instance_rejects_bad_parameters(self):
        """d < 2 or delta <= 0 are invalid."""
        with pytest.raises(ValueError):
            gen_standard_instance(1, 0.3)
        with pytest.raises(ValueError):
            gen_standard_instance(4, 0.0)

    def test_sphere_instance(self):
        """Unit-norm arms and a strictly best closest-pair arm."""
        inst = gen_random_sphere_instance(6, 40, RngStream(4))
        np.testing.assert_allclose(np.linalg.norm(inst.arms, axis=1), 1.0, atol=1e-9)
        rewards = expected_rewards(inst)
        best = gap_profile(inst).best_index - 1
        assert rewards[best] == rewards.max()
        # theta = u + 0.01 (u - v): recover v and check the margin identity
        u = inst.arms[best]
        v = (1.01 * u - inst.theta) / 0.01
        margin = inst.theta @ u - inst.theta @ v
        assert margin == pytest.approx(1.02 * (1.0 - u @ v), rel=1e-6)
        assert margin > 0

    def test_sphere_instance_is_reproducible(self):
        """The same stream gives the same instance."""
        a = gen_random_sphere_instance(5, 20, RngStream(9, (1,)))
        b = gen_random_sphere_instance(5, 20, RngStream(9, (1,)))
        np.testing.assert_array_equal(a.arms, b.arms)
        np.testing.assert_array_equal(a.theta, b.theta)

    def test_sphere_generation_gives_up(self, mocker):
        """Persistent rejection ends in GenerationFailedError."""
        attempt = mocker.patch("src.experiments._sphere_attempt", side_effect=_Resample("rejected"))
        with pytest.raises(GenerationFailedError):
            gen_random_sphere_instance(3, 5, RngStream(0))
        assert attempt.call_count == 100

    @pytest.mark.parametrize("kind,edges", [("star", 5), ("path", 5), ("cycle", 6), ("complete", 15)])
    def test_named_graphs(self, kind, edges):
        """Named topologies on six agents."""
        g = gen_graph(kind, 6)
        assert g.n == 6
        assert len(g.edges) == edges
        assert is_connected(g)

    def test_random_graph_is_connected(self):
        """Random graphs are redrawn until connected."""
        assert is_connected(gen_graph("random", 20, 0.15, seed=3))

    def test_unknown_graph_kind(self):
        """Only the listed kinds exist."""
        with pytest.raises(ValueError):
            gen_graph("torus", 5)


class TestBounds:
    """Test cases for the bound evaluators."""

    def test_theorem1_value(self):
        """T=2000, M=15, d=10, K=10, delta=0.5 gives about 1.147e-2."""
        assert theorem1_bound(2000, 15, 10, 10, 0.5) == pytest.approx(1.147e-2, rel=1e-3)

    def test_theorem1_vacuous_plateau(self):
        """A vanishing gap leaves 4 log2 K."""
        assert theorem1_bound(100, 2, 5, 8, 1e-9) == pytest.approx(4 * 3.0)

    def test_doubling_budget_squares_the_exponential(self):
        """bound(2T) / 4log2K = (bound(T) / 4log2K)^2."""
        c = 4 * math.log2(20)
        one = theorem1_bound(300, 4, 8, 20, 0.2) / c
        two = theorem1_bound(600, 4, 8, 20, 0.2) / c
        assert two == pytest.approx(one ** 2, rel=1e-12)

    def test_theorem2_is_twice_single_agent_theorem1(self):
        """No M dependence; twice the M=1 star bound."""
        assert theorem2_bound(2000, 10, 10, 0.5) == pytest.approx(2 * theorem1_bound(2000, 1, 10, 10, 0.5))

    def test_bound_parameters_must_be_positive(self):
        """Zero budgets and K < 2 are rejected."""
        with pytest.raises(ValueError):
            theorem1_bound(0, 1, 2, 4, 0.1)
        with pytest.raises(ValueError):
            theorem2_bound(10, 2, 1, 0.1)

    def test_lemmas(self):
        """The elimination bound is twice the pairwise bound."""
        one = lemma1_bound(150, 15, 10, 10, 0.5)
        assert one == pytest.approx(math.exp(-150 * 15 * 0.25 / (16 * 10 * 4)))
        assert lemma2_bound(150, 15, 10, 10, 0.5) == pytest.approx(2 * one)

    def test_lower_bound_exponent(self):
        """Standard d=10, delta=0.5, T=1000 gives 1000 / (40 log2 10)."""
        inst = gen_standard_instance(10, 0.5)
        assert lower_bound_exponent(inst, 1000) == pytest.approx(7.525, abs=1e-3)

    def test_lower_bound_exponent_halves_with_hardness(self):
        """Halving delta^2 (doubling H) halves the exponent."""
        a = lower_bound_exponent(gen_standard_instance(4, 0.4), 500)
        b = lower_bound_exponent(gen_standard_instance(4, 0.4 / math.sqrt(2)), 500)
        assert b == pytest.approx(a / 2)

    def test_lower_bound_exponent_small_d(self):
        """d = 2 uses log2 d = 1."""
        inst = gen_standard_instance(2, 1.0)
        assert lower_bound_exponent(inst, 10) == pytest.approx(10 / 2.0)

    def test_communication_factors(self):
        """Star cost over M / ln T is 2 ceil(log2 K) ln T."""
        assert communication_lower_bound(15, math.e ** 2) == pytest.approx(7.5)
        assert comm_gap_factor(15, 100, 150) == pytest.approx(2 * 7 * math.log(150))
        assert bound_gap_factor(8, 64) == pytest.approx(0.5)


class TestEvaluators:
    """Test cases for the acceptance property helpers."""

    def test_spearman(self):
        """Perfectly decreasing sequences give -1; constant ones NaN."""
        assert spearman_trend([1, 2, 3, 4], [0.9, 0.5, 0.2, 0.0]) == pytest.approx(-1.0)
        assert math.isnan(spearman_trend([1, 2, 3], [0.0, 0.0, 0.0]))

    def test_log_error_slope(self):
        """Exponential decay has a negative log slope; zeros are skipped."""
        xs = [1, 2, 3, 4]
        ps = [math.exp(-0.5 * x) for x in xs[:3]] + [0.0]
        assert log_error_slope(xs, ps) == pytest.approx(-0.5)
        with pytest.raises(ValueError):
            log_error_slope([1, 2], [0.1, 0.0])

    def test_bound_consistent(self):
        """p_hat is compared with bound + 3 stderr."""
        est = ErrorEstimate(params={}, p_hat=0.05, stderr=0.01, trials=100, errors=5,
                            mean_messages=0.0, mean_index_broadcasts=0.0, bound=0.03)
        assert bound_consistent(est)
        assert not bound_consistent(est, bound=0.01)


class TestMonteCarlo:
    """Test cases for grid expansion and Monte-Carlo estimation."""

    def test_grid_expansion(self):
        """Standard family: K follows d; grid order is d, delta, M, T."""
        cfg = SweepConfig(AlgorithmKind.STAR, InstanceFamily.STANDARD, d=(4, 6), delta=(0.1, 0.2), M=(3,), T=(60,))
        points = grid_points(cfg)
        assert [(p["d"], p["delta"], p["K"]) for p in points] == [(4, 0.1, 4), (4, 0.2, 4), (6, 0.1, 6), (6, 0.2, 6)]

    def test_noiseless_sweep_has_no_errors(self):
        """p_hat = 0 and stderr = 0 without noise."""
        cfg = SweepConfig(AlgorithmKind.STAR, InstanceFamily.STANDARD, d=(6,), delta=(0.2,), M=(3,), T=(60,),
                          trials=10, noise_std=0.0)
        [est] = monte_carlo(cfg)
        assert est.p_hat == 0.0
        assert est.stderr == 0.0
        assert est.mean_messages == 2 * 3 * 3

    def test_threads_do_not_change_results(self):
        """One and four workers produce identical estimates."""
        cfg = SweepConfig(AlgorithmKind.STAR, InstanceFamily.SPHERE, d=(4,), K=(12,), M=(2,), T=(40,),
                          trials=16, master_seed=5)
        one = [e.to_dict() for e in monte_carlo(cfg, threads=1)]
        four = [e.to_dict() for e in monte_carlo(cfg, threads=4)]
        assert one == four

    def test_gen_sweep_uses_generated_graph(self):
        """Gen sweeps build a graph of M agents and count its votes."""
        cfg = SweepConfig(AlgorithmKind.GEN, InstanceFamily.STANDARD, d=(4,), delta=(0.3,), M=(6,), T=(40,),
                          trials=4, noise_std=0.0, graph=GraphSpec(kind="path"))
        [est] = monte_carlo(cfg)
        # path on 6 agents: greedy picks 2 and 5, two blocks of three
        assert est.mean_messages == 2 * (6 - 2) * 2 + 2
        assert est.bound == pytest.approx(theorem2_bound(40, 4, 4, 0.3))

    def test_failed_trial_is_reported(self, mocker):
        """A raising trial aborts with its trial and grid index."""
        mocker.patch("src.experiments.run_star", side_effect=RuntimeError("boom"))
        cfg = SweepConfig(AlgorithmKind.STAR, InstanceFamily.STANDARD, d=(4,), delta=(0.3,), M=(2,), T=(40,), trials=3)
        with pytest.raises(TrialFailedError) as exc:
            monte_carlo(cfg)
        assert exc.value.trial == 0
        assert exc.value.grid_index == 0
        assert isinstance(exc.value.cause, RuntimeError)

    def test_empty_grid(self):
        """An empty parameter grid is a configuration error."""
        cfg = SweepConfig(AlgorithmKind.STAR, InstanceFamily.STANDARD, delta=())
        with pytest.raises(ConfigError):
            monte_carlo(cfg)

    def test_aggregate(self, mocker):
        """Error fraction and its standard error."""
        outcomes = [mocker.Mock(correct=c, ledger=mocker.Mock(data_messages=4, index_broadcasts=8))
                    for c in [True, False, True, True]]
        est = aggregate({"d": 2}, outcomes)
        assert est.p_hat == 0.25
        assert est.stderr == pytest.approx(math.sqrt(0.25 * 0.75 / 4))
        assert est.mean_messages == 4.0

    def test_bound_consistency_on_easy_grid_point(self):
        """Where the bound is small the empirical error stays below it."""
        cfg = SweepConfig(AlgorithmKind.STAR, InstanceFamily.STANDARD, d=(10,), delta=(0.5,), M=(15,), T=(2000,),
                          trials=200, master_seed=1)
        [est] = monte_carlo(cfg, threads=4)
        assert est.bound == pytest.approx(1.147e-2, rel=1e-3)
        assert bound_consistent(est)

    def test_error_decreases_with_gap(self):
        """Error is rank-anticorrelated with delta and small at delta = 0.5."""
        deltas = tuple(round(0.05 * i, 2) for i in range(1, 11))
        cfg = SweepConfig(AlgorithmKind.STAR, InstanceFamily.STANDARD, d=(10,), delta=deltas, M=(15,), T=(150,),
                          trials=100, master_seed=2024)
        estimates = monte_carlo(cfg, threads=4)
        p_hats = [e.p_hat for e in estimates]
        assert p_hats[-1] <= 0.05
        assert any(p > 0 for p in p_hats)
        assert spearman_trend(deltas, p_hats) <= -0.8

    def test_error_decreases_with_agents(self):
        """The fitted log-error slope in M is negative."""
        cfg = SweepConfig(AlgorithmKind.STAR, InstanceFamily.STANDARD, d=(10,), delta=(0.1,), M=(1, 2, 4, 8),
                          T=(150,), trials=100, master_seed=7)
        estimates = monte_carlo(cfg, threads=4)
        assert log_error_slope([1, 2, 4, 8], [e.p_hat for e in estimates]) < 0

    def test_error_non_increasing_in_agents(self):
        """More agents never raise the error beyond two pooled standard errors."""
        trials = 500
        cfg = SweepConfig(AlgorithmKind.STAR, InstanceFamily.STANDARD, d=(10,), delta=(0.1,), M=(1, 5, 15),
                          T=(60,), trials=trials, master_seed=11)
        p_hats = [e.p_hat for e in monte_carlo(cfg, threads=4)]
        for fewer, more in zip(p_hats, p_hats[1:]):
            pooled = (fewer + more) / 2
            assert more <= fewer + 2 * math.sqrt(pooled * (1 - pooled) * 2 / trials)
        assert p_hats[-1] < p_hats[0]
