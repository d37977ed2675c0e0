"""Uniform power allocation (UPA) baseline and utility-region sampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
from scipy.optimize import brentq, minimize

from .best_response import BrResult, BrSettings
from .channel import ChannelSet
from .game import GameConfig, check_profile, interference_matrix, sample_simplex
from .solvers import SolveReport, SolverSettings, run_dynamics

__all__ = [
    "RegionSample",
    "upa_best_response",
    "solve_upa_game",
    "profile_utilities",
    "sample_utility_region",
    "pareto_filter",
]


@dataclass(frozen=True)
class RegionSample:
    profile: np.ndarray
    utilities: np.ndarray


def upa_best_response(
    cfg: GameConfig, chans: ChannelSet, profile, k: int, settings: BrSettings | None = None
) -> BrResult:
    """Best total power for user k when it must split power evenly over antennas.

    Along the ray ``p = (t / nt) * 1`` the rate is ``sum_i log(1 + t mu_i / nt)``
    with ``mu`` the generalised eigenvalues of ``(Lambda Lambda^H, A)``, ``A``
    the noise-plus-interference matrix. The efficiency is pseudo-concave in
    ``t``; its stationary point is found by root-finding on
    ``R'(t) (t + Pc) - R(t)``, which is decreasing.
    """
    prof = check_profile(cfg, profile)
    dec = chans.decomposition(k)
    A = cfg.noise_power * np.eye(cfg.nr) + interference_matrix(cfg, dec, prof)
    own = dec.cross_factors[k]
    mu = np.clip(la.eigh(own @ own.conj().T, A, eigvals_only=True), 0.0, None) / cfg.nt
    pc, budget = cfg.circuit_power, cfg.budgets[k]

    def rate(t):
        return float(np.log1p(t * mu).sum())

    def slope_gap(t):
        return float((mu / (1.0 + t * mu)).sum()) * (t + pc) - rate(t)

    if mu.max() <= 0:
        t = 0.0
    elif slope_gap(budget) >= 0:
        t = budget
    else:
        t = brentq(slope_gap, 0.0, budget, xtol=1e-14, rtol=4 * np.finfo(float).eps)
    p = np.full(cfg.nt, t / cfg.nt)
    u = rate(t) / (t + pc)
    return BrResult(
        allocation=p,
        utility=u,
        active_set=tuple(range(cfg.nt)) if t > 0 else (),
        method="upa",
        residual=abs(slope_gap(t)) if 0 < t < budget else 0.0,
        budget_binding=t >= budget,
        nonnegative_set=tuple(range(cfg.nt)),
    )


def solve_upa_game(cfg: GameConfig, chans: ChannelSet, settings: SolverSettings | None = None) -> SolveReport:
    """Best-response dynamics where every user is restricted to the uniform ray."""
    return run_dynamics(cfg, chans, settings or SolverSettings(), upa_best_response, "upa")


def profile_utilities(cfg: GameConfig, chans: ChannelSet, profiles) -> np.ndarray:
    """Utilities of all users for a stack of profiles, shape ``(M, K)``."""
    P = np.asarray(profiles, dtype=float).reshape(-1, cfg.k_users, cfg.nt)
    out = np.empty((P.shape[0], cfg.k_users))
    eye = cfg.noise_power * np.eye(cfg.nr)
    for k in range(cfg.k_users):
        S = chans.decomposition(k).cross_factors
        # per-user received covariance terms S_j diag(p_j) S_j^H, (M, K, nr, nr)
        terms = np.einsum("jab,mjb,jcb->mjac", S, P, S.conj())
        others = terms.sum(axis=1) - terms[:, k]
        _, ld_a = np.linalg.slogdet(eye + others)
        _, ld_b = np.linalg.slogdet(eye + others + terms[:, k])
        out[:, k] = np.maximum(ld_b - ld_a, 0.0) / (P[:, k].sum(axis=1) + cfg.circuit_power)
    return out


def _scalarised_maxima(cfg, chans, rng, weights, starts):
    budgets = np.asarray(cfg.budgets)
    K, nt = cfg.k_users, cfg.nt
    bounds = [(0.0, budgets[k]) for k in range(K) for _ in range(nt)]
    cons = [
        {"type": "ineq", "fun": (lambda x, k=k: budgets[k] - x[k * nt : (k + 1) * nt].sum())} for k in range(K)
    ]
    found = []
    for w in weights:
        for _ in range(starts):
            x0 = np.concatenate([sample_simplex(rng, 1, nt, budgets[k])[0] for k in range(K)])
            res = minimize(
                lambda x: -float(profile_utilities(cfg, chans, x[None])[0] @ w),
                x0,
                method="SLSQP",
                bounds=bounds,
                constraints=cons,
                options={"maxiter": 200, "ftol": 1e-10},
            )
            x = np.clip(res.x, 0.0, None).reshape(K, nt)
            over = x.sum(axis=1) / budgets
            x = x / np.maximum(over, 1.0)[:, None]
            found.append(x)
    return found


def sample_utility_region(
    cfg: GameConfig,
    chans: ChannelSet,
    samples: int,
    rng: np.random.Generator,
    n_weights: int = 21,
    starts: int = 5,
) -> list[RegionSample]:
    """Random feasible profiles plus local maximisers of weighted welfare.

    Uniform draws fill the interior of the achievable utility region; the
    weighted-sum maximisers (weights ``w, 1-w`` for two users, Dirichlet
    draws otherwise) push samples out to its upper boundary.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    profiles = np.stack([sample_simplex(rng, samples, cfg.nt, b) for b in cfg.budgets], axis=1)
    if n_weights > 0 and starts > 0:
        if cfg.k_users == 2:
            ws = np.linspace(0.0, 1.0, n_weights)
            weights = np.stack([ws, 1.0 - ws], axis=1)
        else:
            weights = rng.dirichlet(np.ones(cfg.k_users), size=n_weights)
        extra = _scalarised_maxima(cfg, chans, rng, weights, starts)
        profiles = np.concatenate([profiles, np.array(extra)])
    us = profile_utilities(cfg, chans, profiles)
    return [RegionSample(profile=p, utilities=u) for p, u in zip(profiles, us)]


def pareto_filter(points):
    """Keep the points no other point Pareto-dominates.

    ``points`` is a list of :class:`RegionSample` or of utility vectors. A
    point is dominated when another is at least as good for every user and
    strictly better for one; exact duplicates never remove each other.
    """
    points = list(points)
    if not points:
        return []
    U = np.array([p.utilities if isinstance(p, RegionSample) else p for p in points], dtype=float)
    ge = np.all(U[:, None, :] >= U[None, :, :], axis=2)
    gt = np.any(U[:, None, :] > U[None, :, :], axis=2)
    dominated = np.any(ge & gt, axis=0)
    return [p for p, d in zip(points, dominated) if not d]
