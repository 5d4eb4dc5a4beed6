"""Frontier computation and imitation dynamics for noisy signaling games."""

__version__ = "0.1.0"

from .domain import DomainParams, GameDomain, build_domain
from .dynamics import PopulationPair, SimConfig, simulate
from .ib_solver import IBCurve, IBPoint, IBProblem, compute_ib_bound, efficiency_loss
from .probkit import ConditionalDistribution, JointDistribution, ProbVector

__all__ = [
    "__version__",
    "ConditionalDistribution",
    "DomainParams",
    "GameDomain",
    "IBCurve",
    "IBPoint",
    "IBProblem",
    "JointDistribution",
    "PopulationPair",
    "ProbVector",
    "SimConfig",
    "build_domain",
    "compute_ib_bound",
    "efficiency_loss",
    "simulate",
]
