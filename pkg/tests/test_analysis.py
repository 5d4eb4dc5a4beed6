import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ibevo.analysis import (
    ModeMap,
    SystemEvaluation,
    canonical_word_order,
    evaluate_system,
    gamma_beta_table,
    mode_map,
    spearman_rank_correlation,
)
from ibevo.baselines import PermutationParams, permute_encoder
from ibevo.domain import DomainParams, build_domain
from ibevo.ib_solver import IBProblem, compute_ib_bound, default_beta_schedule
from ibevo.probkit import ConditionalDistribution

from conftest import random_encoder


@pytest.fixture(scope="module")
def setup10():
    dom = build_domain(DomainParams(n=10, gamma=1.0, alpha=0.5))
    problem = IBProblem(need=dom.prior, belief_channel=dom.confusion)
    curve = compute_ib_bound(problem, default_beta_schedule(120, 1.0, 1e6))
    return dom, problem, curve


class TestEvaluateSystem:
    def test_on_grid_encoder_near_zero_loss(self, setup10):
        dom, problem, curve = setup10
        for idx in (20, 60, 100):
            point = curve.points[min(idx, len(curve.points) - 1)]
            ev = evaluate_system(point.encoder, problem, curve, source_kind="ib_optimal")
            assert ev.epsilon_bits <= 1e-4
            assert ev.expected_utility is None

    def test_constant_encoder_origin(self, setup10):
        dom, problem, curve = setup10
        enc = ConditionalDistribution(np.tile(np.eye(10)[0], (10, 1)))
        ev = evaluate_system(enc, problem, curve)
        assert ev.complexity_bits == pytest.approx(0.0, abs=1e-12)
        assert ev.accuracy_bits == pytest.approx(0.0, abs=1e-12)
        assert ev.epsilon_bits >= -1e-6

    def test_expected_utility_needs_domain(self, setup10):
        dom, problem, curve = setup10
        enc = ConditionalDistribution(np.eye(10))
        with pytest.raises(ValueError):
            evaluate_system(enc, problem, curve, domain=None, receiver=enc)

    def test_with_receiver_reports_utility(self, setup10):
        dom, problem, curve = setup10
        enc = ConditionalDistribution(np.eye(10))
        ev = evaluate_system(enc, problem, curve, dom, enc, gamma=1.0, seed=3)
        assert ev.expected_utility is not None
        assert 0.0 < ev.expected_utility <= 1.0
        assert ev.gamma == 1.0 and ev.seed == 3

    def test_invalid_source_kind(self):
        with pytest.raises(ValueError):
            SystemEvaluation(1.0, 0.5, None, 0.0, 1.0, source_kind="mystery")

    def test_epsilon_floor_enforced(self):
        with pytest.raises(ValueError):
            SystemEvaluation(1.0, 0.5, None, -1e-3, 1.0)


class TestModeMap:
    def test_bijection(self):
        perm = np.array([3, 0, 2, 1])
        enc = ConditionalDistribution(np.eye(4)[:, perm].T @ np.eye(4))
        enc = ConditionalDistribution(np.eye(4)[perm])
        mm = mode_map(enc)
        np.testing.assert_array_equal(mm.modal_word, perm)
        np.testing.assert_allclose(mm.modal_prob, 1.0)

    def test_constant_encoder(self):
        enc = ConditionalDistribution(np.tile(np.eye(6)[2], (6, 1)))
        mm = mode_map(enc)
        np.testing.assert_array_equal(mm.modal_word, np.full(6, 2))
        # unused words fall back to the uniform prior: mean (n-1)/2
        np.testing.assert_allclose(mm.mean_referent, np.full(6, 2.5), atol=1e-12)

    def test_ties_break_to_lower_word(self):
        enc = ConditionalDistribution(np.array([[0.5, 0.5], [0.25, 0.75]]))
        mm = mode_map(enc)
        assert mm.modal_word[0] == 0
        assert mm.modal_word[1] == 1

    def test_canonical_order_invariant_to_word_relabeling(self, rng):
        enc = random_encoder(rng, 8, 8)
        mm = mode_map(enc)
        shuffle = rng.permutation(8)
        relabeled = ConditionalDistribution(enc.rows[:, shuffle])
        mm2 = mode_map(relabeled)
        order1 = canonical_word_order(mm)
        order2 = canonical_word_order(mm2)
        # modal words, expressed in canonical positions, agree
        inv1 = np.argsort(order1)
        inv2 = np.argsort(order2)
        np.testing.assert_array_equal(inv1[mm.modal_word], inv2[mm2.modal_word])


class TestSpearman:
    def test_perfect_positive(self):
        rho, p = spearman_rank_correlation([1, 2, 3, 4, 5], [10, 20, 30, 40, 50])
        assert rho == pytest.approx(1.0)
        assert p < 0.05

    def test_perfect_negative(self):
        rho, _ = spearman_rank_correlation([1, 2, 3, 4], [4, 3, 2, 1])
        assert rho == pytest.approx(-1.0)

    def test_hand_computed(self):
        rho, _ = spearman_rank_correlation([1, 2, 3, 4], [1, 3, 2, 4])
        assert rho == pytest.approx(0.8, abs=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            spearman_rank_correlation([1, 2, 3], [1, 2])

    def test_needs_three_points(self):
        with pytest.raises(ValueError):
            spearman_rank_correlation([1, 2], [1, 2])

    @given(st.permutations(list(range(6))))
    @settings(max_examples=25, deadline=None)
    def test_monotone_transform_invariance(self, ys):
        xs = list(range(6))
        rho1, _ = spearman_rank_correlation(xs, ys, n_resamples=50, rng=0)
        rho2, _ = spearman_rank_correlation(
            [np.exp(x) for x in xs], [y**3 for y in ys], n_resamples=50, rng=0)
        assert rho1 == pytest.approx(rho2, abs=1e-12)

    def test_deterministic_p_value(self):
        a = spearman_rank_correlation([1, 2, 3, 4, 5], [2, 1, 4, 3, 5], rng=7)
        b = spearman_rank_correlation([1, 2, 3, 4, 5], [2, 1, 4, 3, 5], rng=7)
        assert a == b


class TestGammaBetaTable:
    def make(self, gamma, beta, eps, seed=0):
        return SystemEvaluation(1.0, 0.5, None, eps, beta, gamma=gamma, seed=seed)

    def test_single_row(self):
        table = gamma_beta_table([self.make(0.5, 10.0, 0.01)])
        assert table == [(0.5, 10.0, 0.01)]

    def test_groups_and_sorts(self):
        evs = [
            self.make(1.0, 20.0, 0.02, 0),
            self.make(0.1, 5.0, 0.01, 0),
            self.make(1.0, 40.0, 0.04, 1),
        ]
        table = gamma_beta_table(evs)
        assert table[0] == (0.1, 5.0, 0.01)
        assert table[1][0] == 1.0
        assert table[1][1] == pytest.approx(30.0)
        assert table[1][2] == pytest.approx(0.03)

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            gamma_beta_table([])

    def test_rejects_missing_gamma(self):
        with pytest.raises(ValueError):
            gamma_beta_table([SystemEvaluation(1.0, 0.5, None, 0.0, 1.0)])


class TestPermutationInteraction:
    def test_permuted_loss_exceeds_source_on_average(self, setup10):
        dom, problem, curve = setup10
        comp = curve.complexities
        idx = next(i for i in range(1, len(comp) - 1)
                   if comp[i] - comp[i - 1] > 1e-3 and comp[i + 1] - comp[i] > 1e-3)
        source = curve.points[idx].encoder
        ev0 = evaluate_system(source, problem, curve, source_kind="ib_optimal")
        losses = []
        for s in range(100):
            permuted = permute_encoder(source, PermutationParams(tau=10.0 + s, seed=s))
            ev = evaluate_system(permuted, problem, curve, source_kind="permutation")
            losses.append(ev.epsilon_bits)
        assert np.mean(losses) > ev0.epsilon_bits