"""Post-hoc evaluation: information-plane coordinates, mode maps, correlations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .domain import GameDomain
from .dynamics import PopulationPair, team_expected_utility
from .ib_solver import IBCurve, IBProblem, accuracy, complexity, efficiency_loss
from .probkit import ConditionalDistribution, ProbVector, bayes_invert

SOURCE_KINDS = ("imitation", "permutation", "nk99", "ib_optimal")


@dataclass(frozen=True)
class SystemEvaluation:
    """Information-plane measurements of one communication system."""

    complexity_bits: float
    accuracy_bits: float
    expected_utility: float | None
    epsilon_bits: float
    fitted_beta: float
    gamma: float | None = None
    seed: int | None = None
    source_kind: str = "imitation"

    def __post_init__(self):
        if self.source_kind not in SOURCE_KINDS:
            raise ValueError(f"unknown source_kind {self.source_kind!r}")
        if self.epsilon_bits < -1e-6:
            raise ValueError(f"epsilon {self.epsilon_bits} below -1e-6")
        if self.accuracy_bits > self.complexity_bits + 1e-9:
            raise ValueError("accuracy exceeds complexity beyond tolerance")


@dataclass(frozen=True)
class ModeMap:
    """Per-meaning modal word and per-word average communicated meaning."""

    modal_word: np.ndarray
    modal_prob: np.ndarray
    mean_referent: np.ndarray


def evaluate_system(
    encoder: ConditionalDistribution,
    problem: IBProblem,
    curve: IBCurve,
    domain: GameDomain | None = None,
    receiver: ConditionalDistribution | None = None,
    *,
    gamma: float | None = None,
    seed: int | None = None,
    source_kind: str = "imitation",
) -> SystemEvaluation:
    """Measure one encoder against the frontier.

    Expected utility is included only when a receiver (and its domain) is
    supplied; complexity and accuracy use the Bayesian-listener reading of
    the encoder regardless.
    """
    comp = complexity(encoder, problem.need)
    acc = accuracy(encoder, problem)
    eps, beta = efficiency_loss(encoder, problem, curve)
    eu = None
    if receiver is not None:
        if domain is None:
            raise ValueError("expected utility requires the game domain")
        pair = PopulationPair(sender=encoder, receiver=receiver)
        eu = team_expected_utility(pair, domain)
    return SystemEvaluation(
        complexity_bits=comp,
        accuracy_bits=acc,
        expected_utility=eu,
        epsilon_bits=eps,
        fitted_beta=beta,
        gamma=gamma,
        seed=seed,
        source_kind=source_kind,
    )


def mode_map(encoder: ConditionalDistribution) -> ModeMap:
    """Modal word per meaning (ties to the lower word index) and per-word
    average meaning under a uniform need prior."""
    rows = encoder.rows
    modal = rows.argmax(axis=1)
    prob = rows[np.arange(rows.shape[0]), modal]
    posterior = bayes_invert(ProbVector.uniform(encoder.n_cond), encoder)
    referent = posterior.rows @ np.arange(encoder.n_cond, dtype=np.float64)
    return ModeMap(modal_word=modal, modal_prob=prob, mean_referent=referent)


def canonical_word_order(mm: ModeMap) -> np.ndarray:
    """Word relabeling that sorts words by their average communicated meaning."""
    return np.argsort(mm.mean_referent, kind="stable")


def spearman_rank_correlation(
    xs,
    ys,
    *,
    n_resamples: int = 10_000,
    rng: np.random.Generator | int | None = None,
) -> tuple[float, float]:
    """Spearman rho with average ranks for ties, and a permutation p-value.

    The p-value is the two-sided plain fraction of `n_resamples` shuffles of
    ys whose |rho| meets or exceeds the observed |rho|.
    """
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("xs and ys must be equal-length 1-d sequences")
    if x.size < 3:
        raise ValueError("need at least 3 observations")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(0 if rng is None else rng)

    rx = rankdata(x)
    ry = rankdata(y)
    rho = _pearson(rx, ry)
    hits = 0
    for _ in range(n_resamples):
        perm = rng.permutation(ry)
        if abs(_pearson(rx, perm)) >= abs(rho) - 1e-15:
            hits += 1
    return float(rho), hits / n_resamples


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    denom = np.sqrt((a * a).sum() * (b * b).sum())
    if denom == 0:
        return 0.0
    return float((a * b).sum() / denom)


def gamma_beta_table(
    evaluations: list[SystemEvaluation],
) -> list[tuple[float, float, float]]:
    """(gamma, mean fitted beta, mean epsilon) rows grouped over seeds,
    sorted by ascending gamma."""
    if not evaluations:
        raise ValueError("no evaluations to tabulate")
    groups: dict[float, list[SystemEvaluation]] = {}
    for ev in evaluations:
        if ev.gamma is None:
            raise ValueError("evaluation without gamma cannot enter the table")
        groups.setdefault(ev.gamma, []).append(ev)
    table = []
    for g in sorted(groups):
        evs = groups[g]
        table.append((
            g,
            float(np.mean([e.fitted_beta for e in evs])),
            float(np.mean([e.epsilon_bits for e in evs])),
        ))
    return table
