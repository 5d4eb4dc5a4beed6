"""Imprecise conditional imitation dynamics for the noisy signaling game.

Discrete-time mean-field updates over a Sender population S(w|x_o) and a
Receiver population R(x_o_hat|w). Each step multiplies the probability of a
strategy being imitated through the confusion channel by its expected
utility against the opposite population, then renormalizes. Both updates
are computed synchronously from the time-t pair.

All operations are factorized into n x n matrix contractions; the naive
nested-sum forms appear only as test oracles.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .domain import GameDomain
from .ib_solver import IBCurve, IBProblem, efficiency_loss_from_coords
from .probkit import (
    ConditionalDistribution,
    ProbVector,
    ZeroRow,
    flush_subnormals,
    mi_bits,
)


@dataclass(frozen=True)
class PopulationPair:
    """Sender and Receiver mixed strategy profiles at one time step."""

    sender: ConditionalDistribution      # (n states x n words)
    receiver: ConditionalDistribution    # (n words x n states)
    step: int = 0

    def __post_init__(self):
        ns, nw = self.sender.shape
        if self.receiver.shape != (nw, ns):
            raise ValueError(
                f"receiver shape {self.receiver.shape} does not mirror sender {self.sender.shape}"
            )
        if self.step < 0:
            raise ValueError("step must be non-negative")


@dataclass(frozen=True)
class SimConfig:
    max_steps: int = 100_000
    convergence_tol: float = 1e-5
    record_every: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.convergence_tol <= 0:
            raise ValueError("convergence_tol must be positive")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")


@dataclass(frozen=True)
class TrajectoryRecord:
    """Per-step metric row persisted by the harness."""

    step: int
    complexity_bits: float
    accuracy_bits: float
    expected_utility: float
    epsilon_bits: float
    fitted_beta: float


@dataclass(frozen=True)
class SimResult:
    final: PopulationPair
    trajectory: list[TrajectoryRecord]
    converged: bool
    steps_taken: int


def _check_shapes(domain: GameDomain, mat: np.ndarray, shape: tuple[int, int], name: str):
    if mat.shape != shape:
        raise ValueError(f"{name} shape {mat.shape} != {shape}")


def sender_expected_utility(domain: GameDomain, receiver: ConditionalDistribution) -> np.ndarray:
    """EU_S[x_o, w]: expected payoff of sending w having observed x_o.

    Marginalizes the true state behind the observation, the Receiver's
    interpretation of w, and the Receiver's reconstruction noise:
    sum over (x_a, xhat_o, xhat_a) of
    p(x_a|x_o) R(xhat_o|w) p(xhat_a|xhat_o) u(x_a, xhat_a).
    """
    n = domain.n
    _check_shapes(domain, receiver.rows, (n, n), "receiver")
    # (C @ U) @ C.T is precomputed; utility symmetry folds the chain into one product.
    return domain.smoothed_utility_conf_t @ receiver.rows.T


def sender_imitation_probability(domain: GameDomain, sender: ConditionalDistribution) -> ConditionalDistribution:
    """P_S(w|x_o_im): chance an imitating Sender observing x_o_im adopts w.

    Two confusion passes separate the imitator's observation from the
    imitated Sender's: identity confusion makes imitation exact.
    """
    n = domain.n
    _check_shapes(domain, sender.rows, (n, n), "sender")
    return ConditionalDistribution(domain.confusion_sq @ sender.rows)


def sender_posterior(domain: GameDomain, sender: ConditionalDistribution) -> np.ndarray:
    """Posterior over true states given a word, through prior, confusion and S.

    Rows (one per word) proportional to Pr(x_a) * sum_xo p(x_o|x_a) S(w|x_o);
    words no Sender uses fall back to the prior.
    """
    weighted = domain.prior.p[:, None] * (domain.confusion.rows @ sender.rows)
    mass = weighted.sum(axis=0)
    dead = mass == 0
    post = (weighted / np.where(dead, 1.0, mass)[None, :]).T
    if np.any(dead):
        post[dead, :] = domain.prior.p
    return post


def receiver_expected_utility(domain: GameDomain, sender: ConditionalDistribution) -> np.ndarray:
    """EU_R[w, xhat_o]: expected payoff of interpreting w as xhat_o."""
    n = domain.n
    _check_shapes(domain, sender.rows, (n, n), "sender")
    return sender_posterior(domain, sender) @ domain.smoothed_utility.T


def receiver_imitation_probability(domain: GameDomain, receiver: ConditionalDistribution) -> ConditionalDistribution:
    """P_R(xhat_o_im|w): chance an imitating Receiver adopts xhat_o_im for w."""
    n = domain.n
    _check_shapes(domain, receiver.rows, (n, n), "receiver")
    return ConditionalDistribution(receiver.rows @ domain.confusion_sq)


def _step_arrays(S: np.ndarray, R: np.ndarray, domain: GameDomain) -> tuple[np.ndarray, np.ndarray]:
    """Fused synchronous update on raw arrays; the hot path of simulate()."""
    C = domain.confusion.rows
    C2 = domain.confusion_sq
    V = domain.smoothed_utility
    VCt = domain.smoothed_utility_conf_t
    prior = domain.prior.p

    CS = C @ S
    P_S = C2 @ S
    P_R = R @ C2
    EU_S = VCt @ R.T
    weighted = prior[:, None] * CS
    mass = weighted.sum(axis=0)
    dead = mass == 0
    S_post = (weighted / np.where(dead, 1.0, mass)[None, :]).T
    if np.any(dead):
        S_post[dead, :] = prior
    EU_R = S_post @ V.T

    S_new = P_S * EU_S
    s_mass = S_new.sum(axis=1)
    R_new = P_R * EU_R
    r_mass = R_new.sum(axis=1)
    if np.any(s_mass == 0) or np.any(r_mass == 0):
        raise ZeroRow("strategy update produced an all-zero row")
    S_new /= s_mass[:, None]
    R_new /= r_mass[:, None]
    flush_subnormals(S_new)
    flush_subnormals(R_new)
    S_new /= S_new.sum(axis=1, keepdims=True)
    R_new /= R_new.sum(axis=1, keepdims=True)
    return S_new, R_new


def step(pair: PopulationPair, domain: GameDomain) -> PopulationPair:
    """One synchronous update of both populations."""
    S_new, R_new = _step_arrays(pair.sender.rows, pair.receiver.rows, domain)
    return PopulationPair(
        sender=ConditionalDistribution(S_new),
        receiver=ConditionalDistribution(R_new),
        step=pair.step + 1,
    )


def team_expected_utility(pair: PopulationPair, domain: GameDomain) -> float:
    """Population fitness: expected similarity of actual and reconstructed states.

    Full chain prior -> confusion -> S -> R -> confusion -> utility,
    contracted as prior . diag((C @ S) @ (R @ V)).
    """
    n = domain.n
    _check_shapes(domain, pair.sender.rows, (n, n), "sender")
    CS = domain.confusion.rows @ pair.sender.rows
    RV = pair.receiver.rows @ domain.smoothed_utility
    return float(np.einsum("aw,wa->", domain.prior.p[:, None] * CS, RV))


def random_population(n: int, seed: int | np.random.Generator) -> PopulationPair:
    """Rows drawn uniformly from the simplex (normalized unit exponentials)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    S = rng.exponential(size=(n, n))
    R = rng.exponential(size=(n, n))
    S /= S.sum(axis=1, keepdims=True)
    R /= R.sum(axis=1, keepdims=True)
    return PopulationPair(
        sender=ConditionalDistribution(S),
        receiver=ConditionalDistribution(R),
        step=0,
    )


def _metrics(step_idx: int, S: np.ndarray, R: np.ndarray, domain: GameDomain,
             problem: IBProblem, curve: IBCurve | None) -> TrajectoryRecord:
    need = problem.need.p
    comp = mi_bits(need[:, None] * S)
    acc = mi_bits(S.T @ (need[:, None] * problem.belief_channel.rows))
    CS = domain.confusion.rows @ S
    RV = R @ domain.smoothed_utility
    eu = float(np.einsum("aw,wa->", domain.prior.p[:, None] * CS, RV))
    if curve is not None:
        eps, beta = efficiency_loss_from_coords(comp, acc, curve)
    else:
        eps, beta = float("nan"), float("nan")
    return TrajectoryRecord(step_idx, comp, acc, eu, eps, beta)


def simulate(
    domain: GameDomain,
    config: SimConfig,
    init: PopulationPair | int | None = None,
    *,
    curve: IBCurve | None = None,
) -> SimResult:
    """Iterate the imitation update until the populations stop moving.

    Convergence: the sum of absolute elementwise differences across both
    matrices between successive steps drops below config.convergence_tol.
    Metrics are recorded at steps 0 and 1, every record_every steps, and at
    the final step; efficiency loss columns are NaN unless a frontier curve
    is supplied.
    """
    if init is None:
        pair = random_population(domain.n, config.seed)
    elif isinstance(init, PopulationPair):
        pair = init
    else:
        pair = random_population(domain.n, init)

    problem = IBProblem(need=domain.prior, belief_channel=domain.confusion)
    S, R = pair.sender.rows.copy(), pair.receiver.rows.copy()
    base = pair.step
    trajectory = [_metrics(base, S, R, domain, problem, curve)]
    converged = False
    t = base
    for t in range(base + 1, base + config.max_steps + 1):
        S_new, R_new = _step_arrays(S, R, domain)
        metric = float(np.abs(S_new - S).sum() + np.abs(R_new - R).sum())
        S, R = S_new, R_new
        converged = metric < config.convergence_tol
        final = converged or t == base + config.max_steps
        if t == base + 1 or (t - base) % config.record_every == 0 or final:
            trajectory.append(_metrics(t, S, R, domain, problem, curve))
        if converged:
            break

    out = PopulationPair(
        sender=ConditionalDistribution(S),
        receiver=ConditionalDistribution(R),
        step=t,
    )
    return SimResult(final=out, trajectory=trajectory,
                     converged=converged, steps_taken=t - base)
