import numpy as np
import pytest

from ibevo.domain import DomainParams, build_domain
from ibevo.ib_solver import IBProblem
from ibevo.probkit import ConditionalDistribution, ProbVector


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_domain():
    """n=3, alpha=0.5, gamma=0.5 game instance."""
    return build_domain(DomainParams(n=3, gamma=0.5, alpha=0.5))


@pytest.fixture
def desk_problem():
    """Compact frontier problem: 10 meanings over the alpha=0.5 channel."""
    dom = build_domain(DomainParams(n=10, gamma=1.0, alpha=0.5))
    return IBProblem(need=dom.prior, belief_channel=dom.confusion)


def random_encoder(rng, n_m, n_w):
    enc = rng.exponential(size=(n_m, n_w))
    return ConditionalDistribution(enc / enc.sum(axis=1, keepdims=True))


def uniform_need(n):
    return ProbVector.uniform(n)
