"""Gauss-Seidel best-response dynamics for the energy-efficiency game."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .best_response import BrSettings, bisect_h, exact_br
from .channel import ChannelSet
from .game import EquilibriumCheck, GameConfig, check_profile, uniform_profile, utilities, verify_equilibrium

log = logging.getLogger(__name__)

RECTANGULAR_STEP = 0.5

__all__ = ["SolverSettings", "SolveReport", "solve_basic", "solve_bisection", "run_dynamics", "initial_profile"]


@dataclass(frozen=True)
class SolverSettings:
    """Outer-loop settings shared by every dynamics.

    ``initializer`` is ``"uniform_budget_fraction"`` (budget split evenly
    over antennas), ``"zeros"`` or ``"custom"`` with ``initial_profile``.
    ``verify_deviations`` random deviations per user are drawn from
    ``verify_seed`` when the final profile is checked; 0 skips the check.
    """

    max_outer_iters: int = 100
    outer_tol: float = 1e-3
    br: BrSettings = field(default_factory=BrSettings)
    initializer: str = "uniform_budget_fraction"
    initial_profile: np.ndarray | None = None
    verify_deviations: int = 1000
    verify_seed: int = 0

    def __post_init__(self):
        if not self.outer_tol > 0:
            raise ValueError("outer_tol must be > 0")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be >= 1")
        if self.initializer not in ("uniform_budget_fraction", "zeros", "custom"):
            raise ValueError(f"unknown initializer {self.initializer!r}")
        if self.initializer == "custom" and self.initial_profile is None:
            raise ValueError("custom initializer needs initial_profile")


@dataclass(frozen=True)
class SolveReport:
    final_profile: np.ndarray
    utilities: np.ndarray
    welfare: float
    iterations_used: int
    converged: bool
    per_iteration_delta: tuple[float, ...]
    equilibrium: EquilibriumCheck | None
    algorithm: str
    br_rounds: tuple[int, ...] = ()
    warnings: tuple[str, ...] = ()


def initial_profile(cfg: GameConfig, settings: SolverSettings) -> np.ndarray:
    if settings.initializer == "zeros":
        return np.zeros((cfg.k_users, cfg.nt))
    if settings.initializer == "custom":
        return check_profile(cfg, settings.initial_profile).copy()
    return uniform_profile(cfg)


def run_dynamics(
    cfg: GameConfig,
    chans: ChannelSet,
    settings: SolverSettings,
    best_response: Callable,
    algorithm: str,
    step: float = 1.0,
) -> SolveReport:
    """Sweep users in index order, each moving its action towards ``best_response``.

    ``step=1`` replaces the action by the best response; smaller steps
    average the two, which leaves fixed points unchanged. Later users in a
    sweep see the actions already updated earlier in the same sweep. Stops
    once the summed Euclidean change over a sweep drops below ``outer_tol``.
    """
    if not 0 < step <= 1:
        raise ValueError("step must be in (0, 1]")
    cfg.check_channels(chans)
    profile = initial_profile(cfg, settings)
    deltas: list[float] = []
    rounds: list[int] = []
    warnings: list[str] = []
    converged = False
    t = 0
    for t in range(1, settings.max_outer_iters + 1):
        previous = profile.copy()
        for k in range(cfg.k_users):
            res = best_response(cfg, chans, profile, k, settings.br)
            profile[k] = res.allocation if step == 1 else (1 - step) * profile[k] + step * res.allocation
            rounds.append(getattr(res, "rounds", 0))
            warnings.extend(f"sweep {t}, user {k}: {w}" for w in getattr(res, "warnings", ()))
        delta = float(np.linalg.norm(profile - previous, axis=1).sum())
        deltas.append(delta)
        if delta < settings.outer_tol:
            converged = True
            break
    if not converged:
        log.info("%s dynamics did not converge in %d sweeps (last delta %.3g)", algorithm, t, deltas[-1])
    us = utilities(cfg, chans, profile)
    eq = None
    if settings.verify_deviations > 0:
        eq = verify_equilibrium(
            cfg,
            chans,
            profile,
            deviations=settings.verify_deviations,
            tol=10 * settings.outer_tol,
            rng=np.random.default_rng(settings.verify_seed),
            br_settings=settings.br,
        )
    return SolveReport(
        final_profile=profile,
        utilities=us,
        welfare=float(us.sum()),
        iterations_used=t,
        converged=converged,
        per_iteration_delta=tuple(deltas),
        equilibrium=eq,
        algorithm=algorithm,
        br_rounds=tuple(rounds),
        warnings=tuple(warnings),
    )


def solve_basic(cfg: GameConfig, chans: ChannelSet, settings: SolverSettings | None = None) -> SolveReport:
    """Best-response dynamics with exact best responses."""
    return run_dynamics(cfg, chans, settings or SolverSettings(), exact_br, "basic")


def solve_bisection(cfg: GameConfig, chans: ChannelSet, settings: SolverSettings | None = None) -> SolveReport:
    """Best-response dynamics with the bisection-on-h linearised best response.

    For nt != nr the linearised map is not a contraction and plain sweeps
    can cycle, so each update moves halfway towards the response.
    """
    step = 1.0 if cfg.nt == cfg.nr else RECTANGULAR_STEP
    return run_dynamics(cfg, chans, settings or SolverSettings(), bisect_h, "bisection", step=step)
