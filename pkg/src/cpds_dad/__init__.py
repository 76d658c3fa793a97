"""Defender-attacker-defender resilience assessment for cyber-physical
distribution systems under fake base station attacks."""

from ._utils import CPDSError, PreconditionError, ScenarioCapError
from ._version import __version__
from .attack import AttackPlan, Budgets, DefensePlan, InspectionParams
from .capture import CaptureModel, CaptureProblem, SignalDistribution, capture_prob
from .milp import SolverError, SolverOptions
from .network import Network, NetworkError, load_network, save_network
from .restoration import (
    OutcomeScenario,
    RestorationCache,
    RestorationResult,
    brute_force_restoration,
    optimal_restoration,
)
from .scenarios import ScenarioEngine, TruncationPolicy, expected_resilience
from .trilevel import GameSolution, exhaustive_defense, solve_ccg, solve_subproblem

__all__ = [
    "CPDSError",
    "PreconditionError",
    "ScenarioCapError",
    "__version__",
    "AttackPlan",
    "Budgets",
    "DefensePlan",
    "InspectionParams",
    "CaptureModel",
    "CaptureProblem",
    "SignalDistribution",
    "capture_prob",
    "SolverError",
    "SolverOptions",
    "Network",
    "NetworkError",
    "load_network",
    "save_network",
    "OutcomeScenario",
    "RestorationCache",
    "RestorationResult",
    "brute_force_restoration",
    "optimal_restoration",
    "ScenarioEngine",
    "TruncationPolicy",
    "expected_resilience",
    "GameSolution",
    "exhaustive_defense",
    "solve_ccg",
    "solve_subproblem",
]
