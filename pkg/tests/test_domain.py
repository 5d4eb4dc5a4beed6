import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ibevo.domain import (
    DomainParams,
    build_confusion_matrix,
    build_domain,
    build_utility_matrix,
    similarity,
)
from ibevo.probkit import ProbVector, joint_from_prior_and_channel, mutual_information


class TestParams:
    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            DomainParams(n=0)
        with pytest.raises(ValueError):
            DomainParams(gamma=-0.1)
        with pytest.raises(ValueError):
            DomainParams(alpha=-1.0)
        with pytest.raises(ValueError):
            DomainParams(prior_kind="powerlaw")


class TestSimilarity:
    def test_zero_distance(self):
        for g in (0.0, 0.5, 100.0):
            assert similarity(7, 7, g) == 1.0

    def test_gamma_zero_flat(self):
        assert similarity(0, 99, 0.0) == 1.0

    def test_direct_value(self):
        assert similarity(0, 2, 0.5) == pytest.approx(math.exp(-2.0), rel=1e-15)

    def test_negative_gamma_rejected(self):
        with pytest.raises(ValueError):
            similarity(0, 1, -0.5)


class TestUtilityMatrix:
    def test_gamma_zero_all_ones(self):
        u = build_utility_matrix(DomainParams(n=5, gamma=0.0))
        np.testing.assert_array_equal(u, np.ones((5, 5)))

    def test_large_gamma_identity(self):
        u = build_utility_matrix(DomainParams(n=5, gamma=1e6))
        np.testing.assert_array_equal(u, np.eye(5))

    def test_frozen_three_state(self):
        u = build_utility_matrix(DomainParams(n=3, gamma=0.5))
        e1, e2 = math.exp(-0.5), math.exp(-2.0)
        np.testing.assert_allclose(u, [[1, e1, e2], [e1, 1, e1], [e2, e1, 1]], rtol=1e-15)

    @given(st.integers(2, 12), st.floats(1e-3, 4.0))
    def test_strictly_decreasing_in_distance(self, n, gamma):
        u = build_utility_matrix(DomainParams(n=n, gamma=gamma))
        for x in range(n):
            right = u[x, x:]
            k = int((right > 0).sum())  # strict decrease until underflow
            assert np.all(np.diff(right[:k]) < 0)
            assert np.all(right[k:] == 0)

    def test_symmetric_unit_diagonal(self):
        u = build_utility_matrix(DomainParams(n=20, gamma=2.0))
        np.testing.assert_array_equal(u, u.T)
        np.testing.assert_array_equal(np.diag(u), np.ones(20))


class TestConfusionMatrix:
    def test_alpha_zero_uniform(self):
        c = build_confusion_matrix(DomainParams(n=4, alpha=0.0))
        np.testing.assert_allclose(c.rows, np.full((4, 4), 0.25))

    def test_large_alpha_identity(self):
        c = build_confusion_matrix(DomainParams(n=4, alpha=1e9))
        np.testing.assert_array_equal(c.rows, np.eye(4))

    def test_frozen_row(self):
        c = build_confusion_matrix(DomainParams(n=3, alpha=0.5))
        np.testing.assert_allclose(
            c.rows[0],
            [0.5740969929676946, 0.3482074278837349, 0.0776955791485706],
            rtol=1e-14,
        )

    def test_row_max_on_diagonal(self):
        c = build_confusion_matrix(DomainParams(n=50, alpha=0.3))
        assert np.all(c.rows.argmax(axis=1) == np.arange(50))

    @given(st.integers(1, 10), st.floats(0.0, 4.0))
    @settings(max_examples=60)
    def test_matches_bruteforce_renormalization(self, n, alpha):
        c = build_confusion_matrix(DomainParams(n=n, alpha=alpha))
        sim = np.array([[similarity(x, y, alpha) for y in range(n)] for x in range(n)])
        expect = sim / sim.sum(axis=1, keepdims=True)
        np.testing.assert_array_equal(c.rows, expect)

    def test_interior_rows_symmetric(self):
        # rows at least 5 sigma from either boundary (alpha=0.5 -> sigma=1)
        c = build_confusion_matrix(DomainParams(n=100, alpha=0.5))
        for x in range(5, 95):
            width = min(x, 99 - x)
            left = c.rows[x, x - width : x][::-1]
            right = c.rows[x, x + 1 : x + width + 1]
            np.testing.assert_allclose(left, right, atol=1e-9)


class TestBuildDomain:
    def test_singleton(self):
        d = build_domain(DomainParams(n=1, gamma=2.0, alpha=0.5))
        np.testing.assert_array_equal(d.prior.p, [1.0])
        np.testing.assert_array_equal(d.utility, [[1.0]])
        np.testing.assert_array_equal(d.confusion.rows, [[1.0]])

    def test_uniform_prior(self):
        d = build_domain(DomainParams(n=100))
        np.testing.assert_allclose(d.prior.p, np.full(100, 0.01))

    def test_gaussian_confusion_width(self):
        # alpha = 0.5 gives exp(-d^2/2): a discretized unit-width Gaussian
        d = build_domain(DomainParams(n=100, alpha=0.5))
        row = d.confusion.rows[50]
        ratio = row[51] / row[50]
        assert ratio == pytest.approx(math.exp(-0.5), rel=1e-9)

    def test_accuracy_ceiling(self):
        # I(M_o; X_a) for the n=100, alpha=0.5 domain: 4.61 +/- 0.05 bits
        d = build_domain(DomainParams(n=100, alpha=0.5))
        joint = joint_from_prior_and_channel(d.prior, d.confusion)
        ceiling = mutual_information(joint)
        assert ceiling == pytest.approx(4.61, abs=0.05)

    def test_derived_kernels_consistent(self, small_domain):
        c = small_domain.confusion.rows
        np.testing.assert_allclose(small_domain.confusion_sq, c @ c, atol=1e-15)
        np.testing.assert_allclose(
            small_domain.smoothed_utility, c @ small_domain.utility, atol=1e-15
        )
