import numpy as np
import pytest

from ibevo.baselines import (
    NK99Params,
    PermutationParams,
    nk99_fitness,
    nk99_simulate,
    permute_encoder,
    sample_meaning_permutation,
)
from ibevo.domain import DomainParams, build_domain
from ibevo.ib_solver import IBProblem, accuracy, complexity
from ibevo.probkit import ConditionalDistribution, ProbVector


def smooth_encoder(n):
    """Banded stochastic encoder: a plausible converged system shape."""
    x = np.arange(n)
    raw = np.exp(-0.1 * (x[:, None] - x[None, :]) ** 2)
    return ConditionalDistribution(raw / raw.sum(axis=1, keepdims=True))


class TestPermutation:
    def test_tau_validation(self):
        with pytest.raises(ValueError):
            PermutationParams(tau=0.0)

    def test_low_tau_is_identity(self):
        enc = smooth_encoder(12)
        out = permute_encoder(enc, PermutationParams(tau=1e-9, seed=4))
        np.testing.assert_array_equal(out.rows, enc.rows)

    def test_high_tau_is_roughly_uniform(self):
        counts = np.zeros(5)
        for s in range(1000):
            pi = sample_meaning_permutation(5, 1e12, np.random.default_rng(s))
            counts[pi[0]] += 1
        assert np.all(counts > 100) and np.all(counts < 300)

    def test_output_is_row_permutation(self):
        enc = smooth_encoder(9)
        out = permute_encoder(enc, PermutationParams(tau=50.0, seed=7))
        got = sorted(map(tuple, out.rows))
        want = sorted(map(tuple, enc.rows))
        assert got == want

    def test_deterministic_given_seed(self):
        enc = smooth_encoder(9)
        a = permute_encoder(enc, PermutationParams(tau=50.0, seed=3))
        b = permute_encoder(enc, PermutationParams(tau=50.0, seed=3))
        np.testing.assert_array_equal(a.rows, b.rows)

    def test_complexity_invariant_under_uniform_need(self):
        enc = smooth_encoder(10)
        need = ProbVector.uniform(10)
        base = complexity(enc, need)
        for s in range(20):
            out = permute_encoder(enc, PermutationParams(tau=100.0, seed=s))
            assert complexity(out, need) == pytest.approx(base, abs=1e-12)

    def test_accuracy_decreases_on_average(self):
        dom = build_domain(DomainParams(n=10, alpha=0.5))
        problem = IBProblem(need=dom.prior, belief_channel=dom.confusion)
        enc = smooth_encoder(10)
        base = accuracy(enc, problem)
        rng = np.random.default_rng(0)
        taus = 10.0 ** rng.uniform(0, 3, size=100)
        accs = [
            accuracy(permute_encoder(enc, PermutationParams(tau=t, seed=s)), problem)
            for s, t in enumerate(taus)
        ]
        assert np.mean(accs) < base

    def test_never_degenerate_at_extreme_distances(self):
        # tau=1 with n=100: unstabilized weights would underflow entirely
        pi = sample_meaning_permutation(100, 1.0, np.random.default_rng(0))
        assert sorted(pi) == list(range(100))


class TestNK99Fitness:
    def test_shared_bijection_is_maximal(self):
        n = 6
        S = np.eye(n)
        R = np.eye(n)
        f = nk99_fitness((S, R), (S, R))
        assert f == pytest.approx(n, abs=1e-12)

    def test_uniform_listeners(self):
        n_m, n_w = 5, 5
        rng = np.random.default_rng(1)
        s1 = rng.random((n_m, n_w)); s1 /= s1.sum(axis=1, keepdims=True)
        s2 = rng.random((n_m, n_w)); s2 /= s2.sum(axis=1, keepdims=True)
        r = np.full((n_w, n_m), 1.0 / n_m)
        f = nk99_fitness((s1, r), (s2, r))
        assert f == pytest.approx(n_m / n_w, abs=1e-12)

    def test_symmetric(self, rng):
        def lang():
            s = rng.random((4, 4)); s /= s.sum(axis=1, keepdims=True)
            r = rng.random((4, 4)); r /= r.sum(axis=1, keepdims=True)
            return s, r
        a, b = lang(), lang()
        assert nk99_fitness(a, b) == pytest.approx(nk99_fitness(b, a), abs=1e-15)


class TestNK99Simulate:
    def test_reproducible(self):
        params = NK99Params(pop_size=4, generations=5, samples=5,
                            n_meanings=6, n_words=6, seed=9)
        s1, f1 = nk99_simulate(params)
        s2, f2 = nk99_simulate(params)
        np.testing.assert_array_equal(s1.rows, s2.rows)
        assert f1 == f2

    def test_mean_sender_row_stochastic(self):
        params = NK99Params(pop_size=5, generations=10, samples=10,
                            n_meanings=8, n_words=8, seed=2)
        mean_sender, _ = nk99_simulate(params)
        np.testing.assert_allclose(mean_sender.rows.sum(axis=1), 1.0, atol=1e-12)

    def test_fitness_trace_bounds(self):
        params = NK99Params(pop_size=6, generations=15, samples=10,
                            n_meanings=7, n_words=7, seed=3)
        _, trace = nk99_simulate(params)
        assert len(trace) == 15
        upper = params.n_meanings * (params.pop_size - 1) * 2
        assert all(0.0 <= f <= upper for f in trace)

    def test_single_individual_is_pure_drift(self):
        params = NK99Params(pop_size=1, generations=5, samples=10,
                            n_meanings=4, n_words=4, seed=5)
        mean_sender, trace = nk99_simulate(params)
        assert trace == [0.0] * 5
        np.testing.assert_allclose(mean_sender.rows.sum(axis=1), 1.0, atol=1e-12)

    def test_large_sample_count_recovers_parent(self):
        # mutation vanishes as the per-row sample count grows
        from ibevo.baselines import _resample_rows
        rng = np.random.default_rng(7)
        parent = rng.random((6, 6))
        parent /= parent.sum(axis=1, keepdims=True)
        dev_small = np.abs(
            _resample_rows(parent, 10, np.random.default_rng(1)) - parent).mean()
        dev_big = np.abs(
            _resample_rows(parent, 1_000_000, np.random.default_rng(1)) - parent).mean()
        assert dev_big < dev_small
        assert dev_big < 1e-3

    def test_offspring_support_cannot_exceed_sample_count(self):
        params = NK99Params(pop_size=3, generations=3, samples=4,
                            n_meanings=12, n_words=12, seed=11)
        mean_sender, _ = nk99_simulate(params)
        # each individual's row has at most `samples` support points, so the
        # population average has at most pop_size * samples
        support = (mean_sender.rows > 0).sum(axis=1)
        assert np.all(support <= params.pop_size * params.samples)
