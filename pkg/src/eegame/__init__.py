"""Nash equilibria of the energy-efficiency power allocation game on a MIMO MAC."""

from .baselines import pareto_filter, sample_utility_region, solve_upa_game, upa_best_response
from .best_response import BrResult, BrSettings, allocation_for_h, bisect_h, exact_br
from .channel import ChannelSet, generate_channel_set, load_channel_set, save_channel_set
from .experiments import ExperimentSpec, emit_csv, run_experiment
from .game import GameConfig, rate, social_welfare, utility, verify_equilibrium
from .solvers import SolveReport, SolverSettings, solve_basic, solve_bisection

__version__ = "0.1.0"

__all__ = [
    "BrResult",
    "BrSettings",
    "ChannelSet",
    "ExperimentSpec",
    "GameConfig",
    "SolveReport",
    "SolverSettings",
    "allocation_for_h",
    "bisect_h",
    "emit_csv",
    "exact_br",
    "generate_channel_set",
    "load_channel_set",
    "pareto_filter",
    "rate",
    "run_experiment",
    "sample_utility_region",
    "save_channel_set",
    "social_welfare",
    "solve_basic",
    "solve_bisection",
    "solve_upa_game",
    "upa_best_response",
    "utility",
    "verify_equilibrium",
]
