"""The energy-efficiency game: configuration, rates, utilities, equilibrium checks.

Actions are diagonal power allocations over each user's own channel modes,
so a whole action profile is stored as a ``(K, nt)`` float array with one
row per user. Rates are natural-log (nats per channel use) and powers are
in mW, so utilities come out in nats per (mW * channel use).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelDecomposition, ChannelSet
from .matrix_kernel import logdet_hpd

__all__ = [
    "FEASIBILITY_TOL",
    "GameConfig",
    "EquilibriumCheck",
    "InfeasibleProfileError",
    "check_allocation",
    "check_profile",
    "uniform_profile",
    "interference_matrix",
    "rate",
    "utility",
    "utilities",
    "utility_batch",
    "social_welfare",
    "sample_simplex",
    "verify_equilibrium",
]

FEASIBILITY_TOL = 1e-9


class InfeasibleProfileError(ValueError):
    pass


@dataclass(frozen=True)
class GameConfig:
    k_users: int
    nt: int
    nr: int
    budgets: tuple[float, ...]
    noise_power: float = 1.0
    circuit_power: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "budgets", tuple(float(b) for b in self.budgets))
        for name in ("k_users", "nt", "nr"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if len(self.budgets) != self.k_users:
            raise ValueError(f"budgets has {len(self.budgets)} entries, expected k_users={self.k_users}")
        if any(not b > 0 for b in self.budgets):
            raise ValueError("every budget must be > 0")
        if not self.noise_power > 0:
            raise ValueError("noise_power must be > 0")
        if not self.circuit_power > 0:
            raise ValueError("circuit_power must be > 0")

    @classmethod
    def symmetric(cls, k_users: int, nt: int, nr: int, budget: float, **kw) -> GameConfig:
        return cls(k_users=k_users, nt=nt, nr=nr, budgets=(budget,) * k_users, **kw)

    def check_channels(self, chans: ChannelSet) -> None:
        if (chans.k_users, chans.nr, chans.nt) != (self.k_users, self.nr, self.nt):
            raise ValueError(
                f"channel set is K={chans.k_users}, nr={chans.nr}, nt={chans.nt}; "
                f"config expects K={self.k_users}, nr={self.nr}, nt={self.nt}"
            )


@dataclass(frozen=True)
class EquilibriumCheck:
    """Outcome of probing every user for a profitable unilateral deviation."""

    is_ne: bool
    epsilon_hat: float
    worst_user: int
    worst_deviation: np.ndarray
    tol: float


def check_allocation(p, budget: float, nt: int | None = None) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or (nt is not None and p.size != nt):
        raise InfeasibleProfileError(f"allocation must be a length-{nt} vector, got shape {p.shape}")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise InfeasibleProfileError(f"allocation {p} has negative or non-finite levels")
    if p.sum() > budget + FEASIBILITY_TOL:
        raise InfeasibleProfileError(f"allocation sums to {p.sum()} > budget {budget}")
    return p


def check_profile(cfg: GameConfig, profile) -> np.ndarray:
    prof = np.asarray(profile, dtype=float)
    if prof.shape != (cfg.k_users, cfg.nt):
        raise InfeasibleProfileError(f"profile shape {prof.shape}, expected {(cfg.k_users, cfg.nt)}")
    for k in range(cfg.k_users):
        check_allocation(prof[k], cfg.budgets[k])
    return prof


def uniform_profile(cfg: GameConfig) -> np.ndarray:
    """Each user spreads its whole budget evenly over its transmit antennas."""
    return np.array([[b / cfg.nt] * cfg.nt for b in cfg.budgets])


def interference_matrix(cfg: GameConfig, dec: ChannelDecomposition, profile, k: int | None = None) -> np.ndarray:
    """``F_k = sum_{j != k} S_j diag(p_j) S_j^H`` in user k's receive basis."""
    k = dec.reference if k is None else k
    if k != dec.reference:
        raise ValueError(f"decomposition is for user {dec.reference}, not {k}")
    prof = np.asarray(profile, dtype=float)
    S = dec.cross_factors
    if prof.shape != (S.shape[0], S.shape[2]):
        raise ValueError(f"profile shape {prof.shape} does not match channels {S.shape}")
    others = np.arange(S.shape[0]) != k
    Sp = S[others] * prof[others][:, None, :]
    F = np.einsum("jab,jcb->ac", Sp, S[others].conj())
    return 0.5 * (F + F.conj().T)


def _noise_plus_interference(cfg: GameConfig, dec: ChannelDecomposition, profile) -> np.ndarray:
    return cfg.noise_power * np.eye(cfg.nr) + interference_matrix(cfg, dec, profile)


def _own_term(dec: ChannelDecomposition, p) -> np.ndarray:
    own = dec.cross_factors[dec.reference]
    return (own * np.asarray(p, dtype=float)) @ own.conj().T


def rate(cfg: GameConfig, chans: ChannelSet, profile, k: int) -> float:
    """Single-user-decoding rate of user k (nats per channel use)."""
    dec = chans.decomposition(k)
    A = _noise_plus_interference(cfg, dec, profile)
    B = A + _own_term(dec, np.asarray(profile, dtype=float)[k])
    return max(0.0, logdet_hpd(B) - logdet_hpd(A))


def utility(cfg: GameConfig, chans: ChannelSet, profile, k: int) -> float:
    """Energy efficiency of user k: rate over total consumed power."""
    pk = np.asarray(profile, dtype=float)[k]
    return rate(cfg, chans, profile, k) / (pk.sum() + cfg.circuit_power)


def utilities(cfg: GameConfig, chans: ChannelSet, profile) -> np.ndarray:
    return np.array([utility(cfg, chans, profile, k) for k in range(cfg.k_users)])


def social_welfare(cfg: GameConfig, chans: ChannelSet, profile) -> float:
    return float(utilities(cfg, chans, profile).sum())


def utility_batch(cfg: GameConfig, chans: ChannelSet, profile, k: int, candidates) -> np.ndarray:
    """Utilities of user k for many own-allocations against fixed opponents.

    ``candidates`` is ``(M, nt)``; the opponents' actions are read from
    ``profile`` and user k's row there is ignored.
    """
    cand = np.atleast_2d(np.asarray(candidates, dtype=float))
    dec = chans.decomposition(k)
    A = _noise_plus_interference(cfg, dec, profile)
    own = dec.cross_factors[k]
    B = A[None] + np.einsum("ab,mb,cb->mac", own, cand, own.conj())
    _, ld_b = np.linalg.slogdet(B)
    _, ld_a = np.linalg.slogdet(A)
    r = np.maximum(ld_b - ld_a, 0.0)
    return r / (cand.sum(axis=1) + cfg.circuit_power)


def sample_simplex(rng: np.random.Generator, n: int, dim: int, budget: float) -> np.ndarray:
    """Uniform samples from ``{p >= 0, sum(p) <= budget}`` via exponential spacings."""
    e = rng.exponential(size=(n, dim + 1))
    return budget * e[:, :dim] / e.sum(axis=1, keepdims=True)


def _deviation_probes(cfg: GameConfig, pk: np.ndarray, budget: float) -> np.ndarray:
    probes = [np.zeros(cfg.nt), np.full(cfg.nt, budget / cfg.nt)]
    for i in range(cfg.nt):
        e = np.zeros(cfg.nt)
        e[i] = budget
        probes.append(e)
        room = budget - (pk.sum() - pk[i])
        for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
            q = pk.copy()
            q[i] = frac * room
            probes.append(q)
    return np.array(probes)


def verify_equilibrium(
    cfg: GameConfig,
    chans: ChannelSet,
    profile,
    deviations: int = 1000,
    tol: float = 1e-3,
    rng: np.random.Generator | None = None,
    br_settings=None,
) -> EquilibriumCheck:
    """Largest unilateral utility gain found over sampled and probed deviations.

    For every user the candidate deviations are ``deviations`` uniform draws
    from its action set, a handful of deterministic probes (zero, uniform,
    single-mode and per-coordinate moves) and its exact best response.
    """
    from .best_response import exact_br  # circular at import time

    if deviations < 1:
        raise ValueError("deviations must be >= 1")
    prof = check_profile(cfg, profile)
    rng = np.random.default_rng(0) if rng is None else rng
    best_gain, worst_user, worst_dev = 0.0, 0, prof[0].copy()
    for k in range(cfg.k_users):
        budget = cfg.budgets[k]
        current = utility(cfg, chans, prof, k)
        br = exact_br(cfg, chans, prof, k, br_settings)
        cands = np.vstack(
            [sample_simplex(rng, deviations, cfg.nt, budget), _deviation_probes(cfg, prof[k], budget)]
        )
        gains = utility_batch(cfg, chans, prof, k, cands) - current
        i = int(np.argmax(gains))
        gain_k, dev_k = float(gains[i]), cands[i]
        br_gain = br.utility - current
        if br_gain >= gain_k:
            gain_k, dev_k = br_gain, br.allocation
        if gain_k > best_gain:
            best_gain, worst_user, worst_dev = gain_k, k, np.array(dev_k)
    return EquilibriumCheck(
        is_ne=best_gain <= tol, epsilon_hat=best_gain, worst_user=worst_user, worst_deviation=worst_dev, tol=tol
    )
