"""Exact discrete probability and information-theory primitives.

All information quantities are in bits (log base 2), computed in double
precision with the conventions 0*log(0) = 0 and 0*log(0/0) = 0.

The wrapper types (:class:`ProbVector`, :class:`ConditionalDistribution`,
:class:`JointDistribution`) validate on construction and hold read-only
arrays, so they are safe to share across threads. Construction tolerates
normalization error up to ``NORM_ATOL``; tighter internal identities are
held to ``ALGEBRA_ATOL``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NORM_ATOL = 1e-9
ALGEBRA_ATOL = 1e-12

# Nonzero magnitudes below this floor are flushed to exact zero. The floor
# sits above sqrt(smallest normal double), so products of surviving entries
# never land in the subnormal range (subnormal arithmetic stalls the FPU and
# dominated runtime in early profiling). Relative to row masses of order 1,
# the flushed mass is ~1e-150 and invisible at every tolerance used here.
SUBNORMAL_FLOOR = 1e-152


class DistributionError(ValueError):
    """Invalid probability object (negative mass, bad normalization, shape)."""


class AbsoluteContinuityViolation(DistributionError):
    """KL divergence D[p||q] requested where p has mass but q has none."""


class ZeroRow(DistributionError):
    """Row normalization hit an all-zero row with no fallback policy."""


def flush_subnormals(a: np.ndarray) -> np.ndarray:
    """Zero entries below SUBNORMAL_FLOOR in place and return the array."""
    a[np.abs(a) < SUBNORMAL_FLOOR] = 0.0
    return a


def _readonly(a) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ProbVector:
    """Probability distribution over a finite support."""

    p: np.ndarray

    def __post_init__(self):
        arr = _readonly(self.p)
        if arr.ndim != 1 or arr.size == 0:
            raise DistributionError(f"expected non-empty 1-d vector, got shape {arr.shape}")
        _check_mass(arr, arr.sum(), "ProbVector")
        object.__setattr__(self, "p", arr)

    @property
    def n(self) -> int:
        return self.p.size

    @staticmethod
    def uniform(n: int) -> "ProbVector":
        return ProbVector(np.full(n, 1.0 / n))


@dataclass(frozen=True)
class ConditionalDistribution:
    """Row-stochastic matrix: one distribution per conditioning value."""

    rows: np.ndarray

    def __post_init__(self):
        arr = _readonly(self.rows)
        if arr.ndim != 2 or arr.size == 0:
            raise DistributionError(f"expected non-empty 2-d matrix, got shape {arr.shape}")
        if np.any(arr < 0):
            raise DistributionError("negative entry in conditional distribution")
        sums = arr.sum(axis=1)
        bad = np.abs(sums - 1.0) > NORM_ATOL
        if np.any(bad):
            i = int(np.argmax(bad))
            raise DistributionError(f"row {i} sums to {sums[i]!r}, outside 1 +/- {NORM_ATOL}")
        object.__setattr__(self, "rows", arr)

    @property
    def n_cond(self) -> int:
        return self.rows.shape[0]

    @property
    def n_support(self) -> int:
        return self.rows.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows.shape

    def row(self, i: int) -> ProbVector:
        return ProbVector(self.rows[i])


@dataclass(frozen=True)
class JointDistribution:
    """Joint distribution over a product support (n x m)."""

    p: np.ndarray

    def __post_init__(self):
        arr = _readonly(self.p)
        if arr.ndim != 2 or arr.size == 0:
            raise DistributionError(f"expected non-empty 2-d matrix, got shape {arr.shape}")
        _check_mass(arr, arr.sum(), "JointDistribution")
        object.__setattr__(self, "p", arr)

    @property
    def shape(self) -> tuple[int, int]:
        return self.p.shape

    def marginal_rows(self) -> ProbVector:
        return ProbVector(self.p.sum(axis=1))

    def marginal_cols(self) -> ProbVector:
        return ProbVector(self.p.sum(axis=0))


def _check_mass(arr: np.ndarray, total: float, what: str) -> None:
    if np.any(arr < 0):
        raise DistributionError(f"negative entry in {what}")
    if abs(total - 1.0) > NORM_ATOL:
        raise DistributionError(f"{what} mass {total!r} outside 1 +/- {NORM_ATOL}")


# ---------------------------------------------------------------------------
# Array kernels. These skip validation and are the hot-path implementations
# shared with the solver and dynamics modules.
# ---------------------------------------------------------------------------

def entropy_bits(p: np.ndarray) -> float:
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(p > 0, p * np.log2(p), 0.0)
    return float(-t.sum())


def kl_bits(p: np.ndarray, q: np.ndarray) -> float:
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(p > 0, p * (np.log2(p) - np.log2(q)), 0.0)
    return float(t.sum())


def mi_bits(joint: np.ndarray) -> float:
    r = joint.sum(axis=1, keepdims=True)
    c = joint.sum(axis=0, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(joint > 0, joint * (np.log2(joint) - np.log2(r * c)), 0.0)
    return float(t.sum())


# ---------------------------------------------------------------------------
# Public operations.
# ---------------------------------------------------------------------------

def entropy(p: ProbVector) -> float:
    """Shannon entropy -sum p_i log2 p_i, in bits."""
    return entropy_bits(p.p)


def kl_divergence(p: ProbVector, q: ProbVector) -> float:
    """KL divergence sum p_i log2(p_i / q_i), in bits.

    Requires p absolutely continuous w.r.t. q: any support point with
    q_i == 0 must also have p_i == 0.
    """
    if p.n != q.n:
        raise DistributionError(f"support mismatch: {p.n} vs {q.n}")
    if np.any((q.p == 0) & (p.p > 0)):
        raise AbsoluteContinuityViolation("p has mass where q has none")
    return kl_bits(p.p, q.p)


def mutual_information(joint: JointDistribution) -> float:
    """I(X;Y) in bits: KL between the joint and the product of marginals."""
    return mi_bits(joint.p)


def joint_from_prior_and_channel(
    prior: ProbVector, channel: ConditionalDistribution
) -> JointDistribution:
    """Joint p(i,j) = prior_i * channel[i][j]."""
    if prior.n != channel.n_cond:
        raise DistributionError(
            f"prior support {prior.n} does not match channel rows {channel.n_cond}"
        )
    return JointDistribution(prior.p[:, None] * channel.rows)


def bayes_invert(
    prior: ProbVector, channel: ConditionalDistribution
) -> ConditionalDistribution:
    """Posterior q(i|j) proportional to prior_i * channel[i][j].

    Rows are indexed by the channel's output value j. Outputs carrying zero
    total mass get the prior as their posterior row: such outputs never occur,
    so the choice is observationally inert but keeps every row a distribution.
    """
    if prior.n != channel.n_cond:
        raise DistributionError(
            f"prior support {prior.n} does not match channel rows {channel.n_cond}"
        )
    post = bayes_invert_array(prior.p, channel.rows)
    return ConditionalDistribution(post)


def bayes_invert_array(prior: np.ndarray, channel: np.ndarray) -> np.ndarray:
    """Array kernel for :func:`bayes_invert` (shape (n_out, n_in))."""
    joint = prior[:, None] * channel
    mass = joint.sum(axis=0)
    dead = mass == 0
    post = (joint / np.where(dead, 1.0, mass)[None, :]).T
    if np.any(dead):
        post[dead, :] = prior
    return post


def row_normalize(
    raw: np.ndarray, zero_row_fallback: np.ndarray | None = None
) -> ConditionalDistribution:
    """Divide each row of a non-negative matrix by its total mass.

    All-zero rows raise :class:`ZeroRow` unless ``zero_row_fallback`` gives a
    distribution to substitute.
    """
    arr = np.asarray(raw, dtype=np.float64)
    if arr.ndim != 2:
        raise DistributionError(f"expected 2-d matrix, got shape {arr.shape}")
    if np.any(arr < 0):
        raise DistributionError("negative entry in matrix to normalize")
    sums = arr.sum(axis=1)
    dead = sums == 0
    if np.any(dead):
        if zero_row_fallback is None:
            raise ZeroRow(f"row {int(np.argmax(dead))} has zero total mass")
        out = arr / np.where(dead, 1.0, sums)[:, None]
        out[dead, :] = np.asarray(zero_row_fallback, dtype=np.float64)
        return ConditionalDistribution(out)
    return ConditionalDistribution(arr / sums[:, None])
