"""Comparison systems: tempered meaning permutations and the NK99 dynamic.

The permutation baseline relabels a converged encoder's meaning rows with a
temperature-controlled permutation (identity as tau -> 0, uniformly random
as tau -> infinity). The NK99 baseline evolves a finite population of
signal-object association matrices under fitness-proportional reproduction
with finite-sample (mutating) inheritance, binary payoffs and no
perceptual confusion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .probkit import ConditionalDistribution


@dataclass(frozen=True)
class PermutationParams:
    tau: float
    seed: int = 0

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")


@dataclass(frozen=True)
class NK99Params:
    pop_size: int = 20
    generations: int = 100
    samples: int = 10
    n_meanings: int = 100
    n_words: int = 100
    seed: int = 0

    def __post_init__(self):
        for name in ("pop_size", "generations", "samples", "n_meanings", "n_words"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")


def sample_meaning_permutation(n: int, tau: float, rng: np.random.Generator) -> np.ndarray:
    """Permutation pi of 0..n-1 sampled without replacement, biased to nearby indices.

    Iterating meanings in ascending order, each m is matched to a remaining
    candidate m' with probability proportional to exp(-(m - m')^2 / tau).
    The minimum squared distance is subtracted before exponentiation so the
    restricted distribution always has support in floating point.
    """
    remaining = list(range(n))
    pi = np.empty(n, dtype=np.intp)
    for m in range(n):
        cand = np.asarray(remaining)
        d2 = (m - cand).astype(np.float64) ** 2
        w = np.exp(-(d2 - d2.min()) / tau)
        w /= w.sum()
        choice = rng.choice(cand.size, p=w)
        pi[m] = cand[choice]
        del remaining[choice]
    return pi


def permute_encoder(encoder: ConditionalDistribution,
                    params: PermutationParams) -> ConditionalDistribution:
    """Return the encoder with meaning row m replaced by original row pi(m)."""
    rng = np.random.default_rng(params.seed)
    pi = sample_meaning_permutation(encoder.n_cond, params.tau, rng)
    return ConditionalDistribution(encoder.rows[pi, :])


def nk99_fitness(speaker: tuple[np.ndarray, np.ndarray],
                 listener: tuple[np.ndarray, np.ndarray]) -> float:
    """Symmetric communication payoff between two individuals.

    F(L, L') = 0.5 * sum_m sum_w [S(w|m) R'(m|w) + S'(w|m) R(m|w)], where
    each individual carries a speak matrix S (meanings x words, row
    stochastic) and a hear matrix R (words x meanings, row stochastic).
    """
    s1, r1 = speaker
    s2, r2 = listener
    return 0.5 * (float(np.einsum("mw,wm->", s1, r2)) + float(np.einsum("mw,wm->", s2, r1)))


def _random_language(rng: np.random.Generator, n_m: int, n_w: int) -> tuple[np.ndarray, np.ndarray]:
    s = rng.random((n_m, n_w))
    r = rng.random((n_w, n_m))
    return s / s.sum(axis=1, keepdims=True), r / r.sum(axis=1, keepdims=True)


def _resample_rows(rows: np.ndarray, draws: int, rng: np.random.Generator) -> np.ndarray:
    """Inherit each row as normalized counts of `draws` categorical samples."""
    counts = rng.multinomial(draws, rows)
    return counts / float(draws)


def nk99_simulate(
    params: NK99Params,
    rng: np.random.Generator | None = None,
) -> tuple[ConditionalDistribution, list[float]]:
    """Run the finite-population dynamic; return the mean sender and fitness trace.

    Every ordered pair of distinct individuals communicates each generation;
    raw payoffs are normalized into reproduction probabilities, and each
    offspring inherits every row of its parent's matrices as the empirical
    distribution of `samples` categorical draws. The trace holds the raw
    (pre-normalization) population mean payoff per generation.
    """
    if rng is None:
        rng = np.random.default_rng(params.seed)
    N = params.pop_size
    senders = []
    receivers = []
    for _ in range(N):
        s, r = _random_language(rng, params.n_meanings, params.n_words)
        senders.append(s)
        receivers.append(r)

    mean_fitness: list[float] = []
    for _ in range(params.generations):
        payoff = np.zeros(N)
        for i in range(N):
            for j in range(N):
                if i == j:
                    continue
                f = nk99_fitness((senders[i], receivers[i]), (senders[j], receivers[j]))
                payoff[i] += f
                payoff[j] += f
        mean_fitness.append(float(payoff.mean()))
        total = payoff.sum()
        # N=1 never communicates; selection is then uniform (pure drift).
        fitness = payoff / total if total > 0 else np.full(N, 1.0 / N)
        parents = rng.choice(N, size=N, p=fitness)
        senders = [_resample_rows(senders[p], params.samples, rng) for p in parents]
        receivers = [_resample_rows(receivers[p], params.samples, rng) for p in parents]

    mean_sender = np.mean(senders, axis=0)
    return ConditionalDistribution(mean_sender), mean_fitness
