"""Information Bottleneck frontier via fixed-point iteration with reverse annealing.

The bound is traced by solving the self-consistent IB equations at a
descending schedule of tradeoff values beta, warm-starting each solve from
the previous converged encoder so the high-accuracy branch is tracked. A
system's efficiency loss is the minimum over the same beta grid of
(1/beta) * (F_beta[system] - F*_beta), in bits.

Objective convention: F_beta[q] = I(M;W) - beta * I(W;X), both terms in
bits. The encoder update uses the distortion in nats, which is the same
fixed point (the exponent base matches the objective's log base).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .probkit import (
    ConditionalDistribution,
    DistributionError,
    ProbVector,
    bayes_invert_array,
    flush_subnormals,
    mi_bits,
)

ENCODER_TOL = 1e-10       # per-beta stop: max abs encoder change in one round
MAX_ROUNDS = 5000         # per-beta iteration cap
STATIONARY_TOL = 1e-4     # accept-at-cap threshold; larger residuals raise
LOG_FLOOR = 1e-300        # clamp before log; keeps underflowed tails finite

DEFAULT_BETA_COUNT = 795
DEFAULT_BETA_RANGE = (1.0, 1e7)

MONOTONE_ATOL = 1e-6      # curve monotonicity slack, bits
CONCAVITY_ATOL = 1e-6     # chord-slope slack
CHORD_MIN_DX = 1e-9       # points closer than this in complexity share a chord


class NonConvergence(RuntimeError):
    """A per-beta solve exceeded the iteration cap with a large residual."""

    def __init__(self, beta: float, residual: float, rounds: int):
        self.beta = beta
        self.residual = residual
        self.rounds = rounds
        super().__init__(
            f"IB fixed point at beta={beta!r} stopped after {rounds} rounds "
            f"with encoder residual {residual:.3e}"
        )


def default_beta_schedule(count: int = DEFAULT_BETA_COUNT,
                          lo: float = DEFAULT_BETA_RANGE[0],
                          hi: float = DEFAULT_BETA_RANGE[1]) -> np.ndarray:
    return np.logspace(np.log10(lo), np.log10(hi), count)


@dataclass(frozen=True)
class IBProblem:
    """Source for the bound: need distribution and meaning-to-state channel."""

    need: ProbVector
    belief_channel: ConditionalDistribution

    def __post_init__(self):
        if self.need.n != self.belief_channel.n_cond:
            raise DistributionError(
                f"need support {self.need.n} does not match "
                f"belief channel rows {self.belief_channel.n_cond}"
            )

    @property
    def n_meanings(self) -> int:
        return self.need.n

    @cached_property
    def ceiling(self) -> float:
        """I(M;X) in bits: the accuracy attainable by a lossless encoder."""
        return mi_bits(self.need.p[:, None] * self.belief_channel.rows)

    @cached_property
    def _neg_entropy_nats(self) -> np.ndarray:
        b = self.belief_channel.rows
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(b > 0, b * np.log(b), 0.0)
        return t.sum(axis=1)


@dataclass(frozen=True)
class IBPoint:
    """One converged frontier point."""

    beta: float
    encoder: ConditionalDistribution | None
    complexity: float
    accuracy: float
    objective: float
    rounds: int = 0
    converged: bool = True

    def __post_init__(self):
        if self.beta < 1.0:
            raise ValueError(f"beta must be >= 1, got {self.beta}")
        if self.complexity < -1e-9:
            raise ValueError(f"negative complexity {self.complexity}")
        if self.accuracy < -1e-9 or self.accuracy > self.complexity + 1e-9:
            raise ValueError(
                f"accuracy {self.accuracy} outside [0, complexity={self.complexity}]"
            )


@dataclass(frozen=True)
class IBCurve:
    """Frontier points sorted by ascending beta, plus the accuracy ceiling."""

    points: tuple[IBPoint, ...]
    ceiling: float

    def __post_init__(self):
        if not self.points:
            raise ValueError("curve must contain at least one point")
        betas = np.array([p.beta for p in self.points])
        if np.any(np.diff(betas) <= 0):
            raise ValueError("curve points must be strictly ascending in beta")
        comp = self.complexities
        acc = self.accuracies
        if np.any(np.diff(comp) < -MONOTONE_ATOL):
            raise ValueError("complexity not non-decreasing in beta")
        if np.any(np.diff(acc) < -MONOTONE_ATOL):
            raise ValueError("accuracy not non-decreasing in beta")
        if np.any(acc > self.ceiling + 1e-6):
            raise ValueError("accuracy exceeds the ceiling")
        slopes = self._chord_slopes()
        if slopes.size > 1 and np.any(np.diff(slopes) > CONCAVITY_ATOL):
            raise ValueError("accuracy-complexity envelope is not concave")

    @cached_property
    def betas(self) -> np.ndarray:
        return np.array([p.beta for p in self.points])

    @cached_property
    def complexities(self) -> np.ndarray:
        return np.array([p.complexity for p in self.points])

    @cached_property
    def accuracies(self) -> np.ndarray:
        return np.array([p.accuracy for p in self.points])

    @cached_property
    def objectives(self) -> np.ndarray:
        return np.array([p.objective for p in self.points])

    def _chord_slopes(self) -> np.ndarray:
        comp, acc = self.complexities, self.accuracies
        keep = np.concatenate([[True], np.diff(comp) > CHORD_MIN_DX])
        c, a = comp[keep], acc[keep]
        if c.size < 2:
            return np.array([])
        return np.diff(a) / np.diff(c)

    def accuracy_at_complexity(self, complexity: float | np.ndarray) -> np.ndarray:
        """Upper envelope accuracy at the given complexity values.

        Piecewise-linear interpolation through the frontier points, anchored
        at the origin and flat at the ceiling beyond the last point (no
        encoder can beat I(M;X) at any rate).
        """
        c = np.concatenate([[0.0], self.complexities, [np.inf]])
        a = np.concatenate([[0.0], self.accuracies, [self.ceiling]])
        order = np.argsort(c, kind="stable")
        return np.interp(complexity, c[order], a[order])


def complexity(encoder: ConditionalDistribution, need: ProbVector) -> float:
    """Encoder information rate I(M;W) in bits."""
    if encoder.n_cond != need.n:
        raise DistributionError(
            f"encoder rows {encoder.n_cond} do not match need support {need.n}"
        )
    return mi_bits(need.p[:, None] * encoder.rows)


def accuracy(encoder: ConditionalDistribution, problem: IBProblem) -> float:
    """I(W;X) in bits from the joint p(w,x) = sum_m p(m) q(w|m) m(x)."""
    if encoder.n_cond != problem.n_meanings:
        raise DistributionError(
            f"encoder rows {encoder.n_cond} do not match "
            f"{problem.n_meanings} meanings"
        )
    joint_wx = encoder.rows.T @ (problem.need.p[:, None] * problem.belief_channel.rows)
    return mi_bits(joint_wx)


def objective(encoder: ConditionalDistribution, problem: IBProblem, beta: float) -> float:
    """F_beta[q] = complexity - beta * accuracy, in bits."""
    return complexity(encoder, problem.need) - beta * accuracy(encoder, problem)


def _ib_round(enc: np.ndarray, beta: float, need: np.ndarray,
              belief: np.ndarray, neg_ent: np.ndarray) -> np.ndarray:
    """One round of the three self-consistent updates; returns the new encoder."""
    qw = need @ enc
    decoder = bayes_invert_array(need, enc)          # (w, m)
    mhat = decoder @ belief                          # listener reconstruction (w, x)
    # Distortion in nats. The log floor keeps underflowed channel tails
    # finite; their true values are astronomically negative either way and
    # produce identically zero encoder mass for every beta >= 1.
    ln_mhat = np.log(np.maximum(mhat, LOG_FLOOR))
    dist = neg_ent[:, None] - belief @ ln_mhat.T     # (m, w)
    with np.errstate(divide="ignore"):
        z = np.where(qw > 0, np.log(np.where(qw > 0, qw, 1.0)), -np.inf)[None, :]
    z = z - beta * dist
    z -= z.max(axis=1, keepdims=True)
    new = np.exp(z)
    mass = new.sum(axis=1)
    dead = mass == 0
    if np.any(dead):
        # Whole row underflowed: fall back to a point mass on the word with
        # the least distortion.
        new[dead, :] = 0.0
        new[dead, np.argmin(dist[dead, :], axis=1)] = 1.0
        mass = new.sum(axis=1)
    new /= mass[:, None]
    flush_subnormals(new)
    new /= new.sum(axis=1, keepdims=True)
    return new


def ib_fixed_point_step(encoder: ConditionalDistribution, problem: IBProblem,
                        beta: float) -> ConditionalDistribution:
    """Apply one self-consistent IB round to an encoder."""
    if beta < 1.0:
        raise ValueError(f"beta must be >= 1, got {beta}")
    if encoder.n_cond != problem.n_meanings:
        raise DistributionError("encoder rows do not match problem meanings")
    new = _ib_round(encoder.rows, beta, problem.need.p,
                    problem.belief_channel.rows, problem._neg_entropy_nats)
    return ConditionalDistribution(new)


def _objective_arrays(enc: np.ndarray, beta: float, need: np.ndarray,
                      belief: np.ndarray) -> tuple[float, float, float]:
    comp = mi_bits(need[:, None] * enc)
    acc = mi_bits(enc.T @ (need[:, None] * belief))
    return comp, acc, comp - beta * acc


def _solve_beta(enc: np.ndarray, beta: float, need: np.ndarray, belief: np.ndarray,
                neg_ent: np.ndarray, tol: float, max_rounds: int,
                check_monotone: bool) -> tuple[np.ndarray, int, bool, float]:
    prev_obj = None
    delta = np.inf
    for rounds in range(1, max_rounds + 1):
        new = _ib_round(enc, beta, need, belief, neg_ent)
        if check_monotone:
            obj = _objective_arrays(new, beta, need, belief)[2]
            if prev_obj is not None and obj > prev_obj + 1e-9 * max(1.0, abs(prev_obj)):
                raise AssertionError(
                    f"objective increased at beta={beta}: {prev_obj} -> {obj}"
                )
            prev_obj = obj
        delta = float(np.abs(new - enc).max())
        enc = new
        if delta < tol:
            return enc, rounds, True, delta
    return enc, max_rounds, False, delta


def initial_encoder(n_meanings: int, n_words: int,
                    rng: np.random.Generator) -> np.ndarray:
    """Near-identity encoder perturbed by 1e-3 uniform noise, rows normalized."""
    enc = np.eye(n_meanings, n_words) + 1e-3 * rng.random((n_meanings, n_words))
    return enc / enc.sum(axis=1, keepdims=True)


def compute_ib_bound(
    problem: IBProblem,
    beta_schedule: np.ndarray | None = None,
    *,
    n_words: int | None = None,
    tol: float = ENCODER_TOL,
    max_rounds: int = MAX_ROUNDS,
    stationary_tol: float = STATIONARY_TOL,
    rng: np.random.Generator | int | None = None,
    keep_encoders: bool = True,
    check_monotone: bool = False,
) -> IBCurve:
    """Trace the frontier over the beta schedule by reverse annealing.

    Solves from the largest beta down, warm-starting each solve from the
    previous converged encoder. Solves that hit the round cap are accepted
    when the residual is below ``stationary_tol`` (the frontier coordinates
    are stationary long before the encoder's residual gauge drift dies out
    near critical beta values); larger residuals raise NonConvergence.
    """
    if beta_schedule is None:
        beta_schedule = default_beta_schedule()
    betas = np.asarray(beta_schedule, dtype=np.float64)
    if betas.size == 0 or np.any(np.diff(betas) <= 0):
        raise ValueError("beta schedule must be non-empty and strictly increasing")
    if betas[0] < 1.0:
        raise ValueError("beta schedule must start at >= 1")

    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(0 if rng is None else rng)
    n_m = problem.n_meanings
    n_w = n_m if n_words is None else int(n_words)
    need = problem.need.p
    belief = problem.belief_channel.rows
    neg_ent = problem._neg_entropy_nats

    enc = initial_encoder(n_m, n_w, rng)
    points: list[IBPoint] = []
    for beta in betas[::-1]:
        enc, rounds, converged, delta = _solve_beta(
            enc, float(beta), need, belief, neg_ent, tol, max_rounds, check_monotone
        )
        if not converged and delta > stationary_tol:
            raise NonConvergence(float(beta), delta, rounds)
        comp, acc, obj = _objective_arrays(enc, float(beta), need, belief)
        points.append(IBPoint(
            beta=float(beta),
            encoder=ConditionalDistribution(enc) if keep_encoders else None,
            complexity=comp, accuracy=acc, objective=obj,
            rounds=rounds, converged=converged,
        ))
    points.reverse()

    kept: list[IBPoint] = []
    for p in points:
        if kept and (p.complexity, p.accuracy, p.objective) == (
            kept[-1].complexity, kept[-1].accuracy, kept[-1].objective
        ):
            continue
        kept.append(p)
    return IBCurve(points=tuple(kept), ceiling=problem.ceiling)


def efficiency_loss(encoder: ConditionalDistribution, problem: IBProblem,
                    curve: IBCurve) -> tuple[float, float]:
    """(epsilon, fitted beta): min over the grid of (1/beta)(F_beta[q] - F*_beta)."""
    comp = complexity(encoder, problem.need)
    acc = accuracy(encoder, problem)
    return efficiency_loss_from_coords(comp, acc, curve)


def efficiency_loss_from_coords(comp: float, acc: float,
                                curve: IBCurve) -> tuple[float, float]:
    """Efficiency loss for a system already reduced to (complexity, accuracy)."""
    betas = curve.betas
    delta_f = (comp - betas * acc) - curve.objectives
    eps = delta_f / betas
    i = int(np.argmin(eps))
    return float(eps[i]), float(betas[i])


# ---------------------------------------------------------------------------
# Curve CSV interface (beta, complexity_bits, accuracy_bits, objective).
# ---------------------------------------------------------------------------

CURVE_HEADER = ["beta", "complexity_bits", "accuracy_bits", "objective"]


def curve_to_csv(curve: IBCurve, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CURVE_HEADER)
        for p in curve.points:
            w.writerow([f"{v:.17g}" for v in (p.beta, p.complexity, p.accuracy, p.objective)])


def curve_from_csv(path, ceiling: float) -> IBCurve:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != CURVE_HEADER:
        raise ValueError(f"unexpected curve CSV header in {path}: {rows[:1]}")
    points = tuple(
        IBPoint(beta=float(b), encoder=None, complexity=float(c),
                accuracy=float(a), objective=float(o))
        for b, c, a, o in rows[1:]
    )
    return IBCurve(points=points, ceiling=ceiling)
