"""Noisy sim-max numerosity domain: states, prior, utility, confusion.

States are the integers 0..n-1 on a line (no wraparound). Pairwise
similarity is a Gaussian kernel exp(-gamma * (x - x')^2); the same kernel
with sharpness alpha, row-normalized, gives the state-confusion channel.
One confusion matrix serves both perceptual directions.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .probkit import ConditionalDistribution, ProbVector, flush_subnormals

PRIOR_KINDS = ("uniform",)


@dataclass(frozen=True)
class DomainParams:
    """Parameters fixing one game domain.

    n: number of states (= number of available words).
    gamma: pragmatic precision of the payoff; 0 means all guesses pay alike.
    alpha: perceptual certainty of the confusion channel; alpha = 0.5 gives
        a discretized unit-width Gaussian kernel.
    """

    n: int = 100
    gamma: float = 1.0
    alpha: float = 0.5
    prior_kind: str = "uniform"

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.prior_kind not in PRIOR_KINDS:
            raise ValueError(f"unknown prior_kind {self.prior_kind!r}")


def similarity(x: int, x_prime: int, gamma: float) -> float:
    """Gaussian similarity exp(-gamma * (x - x')^2); 1.0 at zero distance."""
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    d = float(x) - float(x_prime)
    d2 = d * d  # square first: bitwise identical to the matrix kernels
    return float(np.exp(-gamma * d2))


def _kernel(n: int, sharpness: float) -> np.ndarray:
    x = np.arange(n, dtype=np.float64)
    d2 = (x[:, None] - x[None, :]) ** 2
    return flush_subnormals(np.exp(-sharpness * d2))


def build_utility_matrix(params: DomainParams) -> np.ndarray:
    """Payoff matrix u(x, x') = similarity(x, x', gamma); symmetric, unit diagonal.

    Entries at large gamma * distance^2 underflow to exact zero in doubles;
    they are mathematically positive but below any tolerance in use.
    """
    return _kernel(params.n, params.gamma)


def build_confusion_matrix(params: DomainParams) -> ConditionalDistribution:
    """Row-normalized similarity kernel with sharpness alpha.

    Row x is the distribution over perceived states given true state x;
    boundary rows lose the truncated tail mass to renormalization.
    """
    raw = _kernel(params.n, params.alpha)
    rows = raw / raw.sum(axis=1, keepdims=True)
    return ConditionalDistribution(flush_subnormals(rows))


@dataclass(frozen=True)
class GameDomain:
    """One fully specified game instance: prior, payoffs, confusion."""

    params: DomainParams
    prior: ProbVector
    utility: np.ndarray
    confusion: ConditionalDistribution

    def __post_init__(self):
        n = self.params.n
        u = np.array(self.utility, dtype=np.float64)
        if u.shape != (n, n):
            raise ValueError(f"utility shape {u.shape} != ({n}, {n})")
        if self.prior.n != n or self.confusion.shape != (n, n):
            raise ValueError("prior/confusion shapes inconsistent with n")
        if np.any(u < 0) or np.any(u > 1) or np.any(np.diag(u) != 1.0):
            raise ValueError("utility entries must lie in [0, 1] with unit diagonal")
        u.setflags(write=False)
        object.__setattr__(self, "utility", u)

    @property
    def n(self) -> int:
        return self.params.n

    # Kernels reused every dynamics step; all derived once per domain.

    @cached_property
    def confusion_sq(self) -> np.ndarray:
        """C @ C: two applications of the confusion channel."""
        c = self.confusion.rows
        return flush_subnormals(c @ c)

    @cached_property
    def smoothed_utility(self) -> np.ndarray:
        """V = C @ U: payoff after reconstruction noise on one side."""
        return flush_subnormals(self.confusion.rows @ self.utility)

    @cached_property
    def smoothed_utility_conf_t(self) -> np.ndarray:
        """V @ C.T: payoff smoothed by confusion on both sides."""
        return flush_subnormals(self.smoothed_utility @ self.confusion.rows.T)


def build_domain(params: DomainParams) -> GameDomain:
    """Assemble the domain: uniform prior, utility and confusion kernels."""
    prior = ProbVector.uniform(params.n)
    return GameDomain(
        params=params,
        prior=prior,
        utility=build_utility_matrix(params),
        confusion=build_confusion_matrix(params),
    )
