"""Best responses of one user against frozen opponents.

Two routes are provided:

* :func:`exact_br` maximises the user's energy efficiency exactly. The
  efficiency level ``h`` is iterated as ``h <- u(p(h))`` where ``p(h)``
  solves the stationarity system ``lambda_i^2 [M(p)^{-1}]_ii = h`` on its
  active set (``M`` being noise plus interference plus own signal). Each
  inner solve is a concave program handled by projected Newton.
* :func:`bisect_h` searches ``h`` with the three-point bisection rule and
  the explicit linearised allocation :func:`allocation_for_h`, which drops
  the off-diagonal part of the interference.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from .channel import ChannelDecomposition, ChannelSet
from .game import GameConfig, check_profile, interference_matrix, utility_batch
from .matrix_kernel import PINV_RTOL, NumericalError, inv_hpd, pinv_rect_diag

log = logging.getLogger(__name__)

__all__ = [
    "RankDeficientChannelError",
    "BrSettings",
    "BrResult",
    "allocation_for_h",
    "allocation_for_h_square",
    "allocation_for_h_pinv",
    "default_h_max",
    "bisect_h",
    "exact_br",
    "stationarity",
    "grid_search_br",
]

STATIONARITY_TOL = 1e-6


class RankDeficientChannelError(NumericalError, ValueError):
    def __init__(self, user: int, sigma):
        super().__init__(f"channel of user {user} is rank-deficient (singular values {np.round(sigma, 15)})")
        self.user = user


@dataclass(frozen=True)
class BrSettings:
    """Knobs for both best-response routes.

    ``h_max=None`` picks a per-call upper bound from the channel (see
    :func:`default_h_max`). ``eps1`` is the bisection width tolerance.
    """

    h_max: float | None = None
    eps1: float = 1e-3
    inner_max_iters: int = 100
    active_set_max_rounds: int = 50
    grid_fallback_points: int = 200

    def __post_init__(self):
        if not self.eps1 > 0:
            raise ValueError("eps1 must be > 0")
        if self.h_max is not None and not self.h_max > self.eps1:
            raise ValueError("h_max must exceed eps1")
        if self.inner_max_iters < 1 or self.active_set_max_rounds < 1 or self.grid_fallback_points < 2:
            raise ValueError("iteration counts must be positive (grid needs >= 2 points)")


@dataclass(frozen=True)
class BrResult:
    allocation: np.ndarray
    utility: float
    active_set: tuple[int, ...]
    method: str  # exact_fixed_point | grid_fallback | closed_form_h | pinv_approx_h
    residual: float
    h: float = float("nan")
    budget_binding: bool = False
    rounds: int = 0
    nonnegative_set: tuple[int, ...] = ()
    warnings: tuple[str, ...] = field(default=())

    @property
    def utility_at_br(self) -> float:
        return self.utility


def _check_rank(dec: ChannelDecomposition) -> None:
    s = dec.sigma
    if s.max() <= 0 or np.any(s <= PINV_RTOL * s.max()):
        raise RankDeficientChannelError(dec.reference, s)


def _noise_plus_interference(cfg: GameConfig, dec: ChannelDecomposition, profile) -> np.ndarray:
    return cfg.noise_power * np.eye(cfg.nr) + interference_matrix(cfg, dec, profile)


def stationarity(A: np.ndarray, gains: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Marginal rates ``lambda_i^2 [(A + Lambda P Lambda^H)^{-1}]_ii``.

    ``A`` is noise plus interference in the user's receive basis. Modes with
    zero gain get a zero marginal rate.
    """
    n = min(A.shape[0], gains.size)
    M = A.copy()
    idx = np.arange(n)
    M[idx, idx] += gains[:n] * p[:n]
    Minv = inv_hpd(M)
    d = np.zeros(gains.size)
    d[:n] = gains[:n] * Minv[idx, idx].real
    return d


# -- linearised allocations -------------------------------------------------


def _finish_allocation(p: np.ndarray, budget: float) -> np.ndarray:
    p = np.maximum(p, 0.0)
    s = p.sum()
    if s > budget:
        p = p * (budget / s)
    return p


def _linearised_terms(cfg: GameConfig, dec: ChannelDecomposition, f_k: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Diagonals ``(a, c)`` such that the unclipped allocation is ``a / h - c``."""
    _check_rank(dec)
    nt, nr = cfg.nt, cfg.nr
    noise = f_k + cfg.noise_power * np.eye(nr)
    if nt == nr:
        lam_inv = np.linalg.inv(dec.factors.rect())
        return np.ones(nt), np.diag(lam_inv @ noise @ lam_inv).real.copy()
    # the Gram factor Lp^H Lp is singular when nt < nr: Moore-Penrose inverse
    lp = pinv_rect_diag(dec.sigma, nr, nt)  # nt x nr
    gram = lp.conj().T @ lp
    gram_pinv = pinv_rect_diag(np.sqrt(np.diag(gram).real), nr, nr) ** 2
    a = np.diag(lp @ gram_pinv @ lp.conj().T).real.copy()
    c = np.diag(lp @ noise @ lp.conj().T).real.copy()
    return a, c


def allocation_for_h_square(cfg: GameConfig, dec: ChannelDecomposition, f_k: np.ndarray, h: float) -> np.ndarray:
    """Unclipped diagonal of ``I/h - Lambda^{-1} (F + s2 I) Lambda^{-1}`` (nt == nr)."""
    if cfg.nt != cfg.nr:
        raise ValueError("square closed form needs nt == nr")
    _check_rank(dec)
    lam_inv = np.linalg.inv(dec.factors.rect())
    P = np.eye(cfg.nt) / h - lam_inv @ (f_k + cfg.noise_power * np.eye(cfg.nr)) @ lam_inv
    return np.diag(P).real.copy()


def allocation_for_h_pinv(cfg: GameConfig, dec: ChannelDecomposition, f_k: np.ndarray, h: float) -> np.ndarray:
    """Unclipped diagonal of the pseudo-inverse linearisation, any nt, nr.

    ``Lp [(Lp^H Lp)^+] Lp^H / h - Lp (F + s2 I) Lp^H`` with ``Lp`` the
    pseudo-inverse of the rectangular singular-value matrix.
    """
    _check_rank(dec)
    nt, nr = cfg.nt, cfg.nr
    lp = pinv_rect_diag(dec.sigma, nr, nt)
    gram = lp.conj().T @ lp
    gram_pinv = pinv_rect_diag(np.sqrt(np.diag(gram).real), nr, nr) ** 2
    P = lp @ gram_pinv @ lp.conj().T / h - lp @ (f_k + cfg.noise_power * np.eye(nr)) @ lp.conj().T
    return np.diag(P).real.copy()


def _clipped(a, c, h, budget, n_modes):
    if h <= 0:
        # h -> 0: the 1/h term dominates every mode the channel can reach
        p = np.zeros(a.size)
        p[:n_modes] = budget / n_modes
        return p
    return _finish_allocation(a / h - c, budget)


def allocation_for_h(cfg: GameConfig, dec: ChannelDecomposition, f_k: np.ndarray, h: float) -> np.ndarray:
    """Explicit allocation for efficiency level ``h``.

    The square closed form applies when nt == nr and the pseudo-inverse form
    otherwise (the two coincide for square full-rank channels). Negative
    levels are clamped to zero and an over-budget vector is scaled back
    onto the budget.
    """
    a, c = _linearised_terms(cfg, dec, f_k)
    return _clipped(a, c, h, cfg.budgets[dec.reference], min(cfg.nt, cfg.nr))


def default_h_max(cfg: GameConfig, dec: ChannelDecomposition, f_k: np.ndarray) -> float:
    """Smallest ``h`` above which :func:`allocation_for_h` is identically zero."""
    n = min(cfg.nt, cfg.nr)
    noise = np.diag(f_k).real[:n] + cfg.noise_power
    return float(np.max(dec.sigma[:n] ** 2 / noise))


# -- bisection over h --------------------------------------------------------


def bisect_h(cfg: GameConfig, chans: ChannelSet, profile, k: int, settings: BrSettings | None = None) -> BrResult:
    """Three-point bisection on ``h`` using the linearised allocation.

    The bracket ``[lo, hi]`` starts at ``[0, h_max]``. Each round evaluates
    the utility at the midpoint and at ``+-eps1/2`` around it: a rising
    triple moves ``lo`` up, a falling triple moves ``hi`` down, anything
    else collapses the bracket to the triple. The allocation at the final
    midpoint is returned.
    """
    settings = settings or BrSettings()
    prof = check_profile(cfg, profile)
    dec = chans.decomposition(k)
    _check_rank(dec)
    f_k = interference_matrix(cfg, dec, prof)
    h_max = settings.h_max if settings.h_max is not None else default_h_max(cfg, dec, f_k)
    eps1 = settings.eps1
    budget = cfg.budgets[k]
    method = "closed_form_h" if cfg.nt == cfg.nr else "pinv_approx_h"

    a, c = _linearised_terms(cfg, dec, f_k)
    n_modes = min(cfg.nt, cfg.nr)

    def evaluate(hs):
        allocs = np.array([_clipped(a, c, h, budget, n_modes) for h in hs])
        return allocs, utility_batch(cfg, chans, prof, k, allocs)

    lo, hi = 0.0, h_max
    best_h, best_u = None, -np.inf
    last = None
    warnings = []
    rounds = 0
    while True:
        rounds += 1
        hm = 0.5 * (lo + hi)
        hl, hr = max(0.0, hm - eps1 / 2), min(h_max, hm + eps1 / 2)
        allocs, (ul, um, ur) = evaluate((hl, hm, hr))
        for h, u in ((hl, ul), (hm, um), (hr, ur)):
            if u > best_u:
                best_h, best_u = h, u
        # monotone rounds shrink the width as w -> w/2 + eps1/2, which only
        # reaches eps1 in the limit
        if hi - lo <= eps1 * (1 + 1e-9):
            break
        # Plateaus: small h saturates the budget, large h switches every mode
        # off. Ties there say nothing about the slope, so read the direction
        # off the allocation instead.
        flat = ul == um == ur
        if (ul <= um <= ur and ul < ur) or (flat and allocs[1].sum() >= budget * (1 - 1e-12)):
            lo, last = hl, "up"
        elif (ul >= um >= ur and ul > ur) or (flat and allocs[1].sum() == 0):
            hi, last = hr, "down"
        else:
            lo, hi, last = hl, hr, "peak"
        if rounds > 10_000:
            warnings.append("bisection did not terminate")
            break

    h_final, u_final = hm, um
    if last == "up" and h_max - hm <= eps1:
        warnings.append(f"optimum at the h_max boundary ({h_max:g}); bracket may be too small")
    if best_u - u_final > 1e-9 * max(1.0, abs(best_u)):
        warnings.append("utility along h is not unimodal; returning best evaluated h")
        h_final = best_h
    p = _clipped(a, c, h_final, budget, n_modes)
    u = float(utility_batch(cfg, chans, prof, k, p[None])[0])
    for w in warnings:
        log.debug("user %d: %s", k, w)
    return _result(cfg, dec, f_k, p, u, method, h=h_final, rounds=rounds, warnings=tuple(warnings))


# -- exact best response -----------------------------------------------------


def _rate(A: np.ndarray, gains: np.ndarray, p: np.ndarray, logdet_a: float) -> float:
    n = min(A.shape[0], gains.size)
    M = A.copy()
    idx = np.arange(n)
    M[idx, idx] += gains[:n] * p[:n]
    L = np.linalg.cholesky(M)
    return float(2.0 * np.log(np.diag(L).real).sum() - logdet_a)


def _priced_rate_max(A, gains, price, p0, logdet_a, max_iters=100, tol=1e-13):
    """Maximise ``R(p) - price * sum(p)`` over ``p >= 0`` by projected Newton.

    Only modes with positive gain are optimised. ``R`` is concave, its
    Hessian ``-g_i g_j |[M^{-1}]_ij|^2`` is negative definite on the
    positive-gain modes, so Newton steps on the free set with an Armijo
    backtracking line search converge to the unique maximiser.
    """
    n = int(np.count_nonzero(gains > 0))
    g = gains[:n]
    idx = np.arange(n)
    p = np.zeros(gains.size)
    p[:n] = np.maximum(p0[:n], 0.0)

    def phi(x):
        return _rate(A, gains, x, logdet_a) - price * x[:n].sum()

    f = phi(p)
    for _ in range(max_iters):
        M = A.copy()
        M[idx, idx] += g * p[:n]
        Minv = np.linalg.inv(M)
        grad = g * Minv[idx, idx].real - price
        bound = (p[:n] <= 1e-15) & (grad <= 0)
        free = ~bound
        if not free.any() or np.max(np.abs(grad[free])) <= tol * max(1.0, price):
            break
        W = np.abs(Minv[:n, :n]) ** 2
        neg_hess = (g[:, None] * g[None, :]) * W
        H_ff = neg_hess[np.ix_(free, free)]
        step = np.zeros(n)
        try:
            step[free] = np.linalg.solve(H_ff, grad[free])
        except np.linalg.LinAlgError:
            step[free] = grad[free]
        t = 1.0
        improved = False
        for _ in range(60):
            cand = p.copy()
            cand[:n] = np.maximum(p[:n] + t * step, 0.0)
            fc = phi(cand)
            if fc >= f + 1e-4 * grad @ (cand[:n] - p[:n]) and fc >= f:
                improved = True
                break
            t *= 0.5
        if not improved:
            break
        if np.max(np.abs(cand - p)) <= 1e-15 * max(1.0, p.max()):
            p, f = cand, fc
            break
        p, f = cand, fc
    return p


def _diag_start(A, gains, price):
    n = min(A.shape[0], gains.size)
    p = np.zeros(gains.size)
    with np.errstate(divide="ignore"):
        p[:n] = np.where(gains[:n] > 0, 1.0 / price - np.diag(A).real[:n] / np.where(gains[:n] > 0, gains[:n], 1), 0)
    return np.maximum(p, 0.0)


def _budgeted_solve(A, gains, price, budget, logdet_a, p0, max_iters):
    """Priced maximiser restricted to ``sum(p) <= budget``.

    When the budget binds, the solution is the rate maximiser on the budget
    face; its price (the efficiency level plus the budget multiplier) is
    found by root-finding on the total power.
    """
    p = _priced_rate_max(A, gains, price, p0 if p0 is not None else _diag_start(A, gains, price), logdet_a, max_iters)
    if p.sum() <= budget:
        return p, False
    n = min(A.shape[0], gains.size)
    A_inv = inv_hpd(A)
    nu_hi = float(np.max(gains[:n] * np.diag(A_inv).real[:n]))  # all modes off above this
    cache = {}

    def excess(nu):
        q = _priced_rate_max(A, gains, nu, cache.get("p", p), logdet_a, max_iters)
        cache["p"] = q
        cache[nu] = q
        return q.sum() - budget

    nu = brentq(excess, price, nu_hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    q = cache.get(nu)
    if q is None:
        q = _priced_rate_max(A, gains, nu, cache["p"], logdet_a, max_iters)
    # the root is only bracketed to ~1e-11; put the point on the budget face
    q = np.maximum(q, 0.0)
    return q * (budget / q.sum()), True


def _result(cfg, dec, f_k, p, u, method, **kw) -> BrResult:
    A = cfg.noise_power * np.eye(cfg.nr) + f_k
    d = stationarity(A, dec.gains, p)
    budget = cfg.budgets[dec.reference]
    active = tuple(int(i) for i in np.flatnonzero(p > 0))
    binding = kw.pop("budget_binding", p.sum() >= budget - 1e-9)
    if active:
        level = float(np.mean(d[list(active)])) if binding else u
        residual = float(np.max(np.abs(d[list(active)] - level)))
    else:
        residual = 0.0
    return BrResult(
        allocation=p,
        utility=float(u),
        active_set=active,
        method=method,
        residual=residual,
        budget_binding=bool(binding),
        nonnegative_set=tuple(range(cfg.nt)),
        **kw,
    )


def _kkt_ok(cfg, dec, f_k, res: BrResult) -> bool:
    if res.residual > STATIONARITY_TOL:
        return False
    A = cfg.noise_power * np.eye(cfg.nr) + f_k
    d = stationarity(A, dec.gains, res.allocation)
    off = [i for i in range(cfg.nt) if i not in res.active_set]
    level = res.utility
    if res.budget_binding and res.active_set:
        level = float(np.mean(d[list(res.active_set)]))
    return all(d[i] - level <= STATIONARITY_TOL for i in off)


def exact_br(cfg: GameConfig, chans: ChannelSet, profile, k: int, settings: BrSettings | None = None) -> BrResult:
    """Exact best response of user k.

    Iterates ``h_t = u(p_{t-1})`` and solves the stationarity system at
    level ``h_t`` on the active set (coordinates whose marginal rate stays
    below ``h_t`` at zero power are pinned to zero). The efficiency level
    increases monotonically and converges superlinearly. The result is
    checked against the stationarity and complementary conditions; on
    failure a projected grid search with local refinement is used instead.
    """
    settings = settings or BrSettings()
    prof = check_profile(cfg, profile)
    dec = chans.decomposition(k)
    _check_rank(dec)
    budget = cfg.budgets[k]
    f_k = interference_matrix(cfg, dec, prof)
    A = cfg.noise_power * np.eye(cfg.nr) + f_k
    gains = dec.gains
    logdet_a = float(2.0 * np.log(np.diag(np.linalg.cholesky(A)).real).sum())
    pc = cfg.circuit_power

    def eff(p):
        return _rate(A, gains, p, logdet_a) / (p.sum() + pc)

    n = min(cfg.nt, cfg.nr)
    start = prof[k].copy()
    start[n:] = 0.0
    if eff(start) <= 0:
        start = np.zeros(cfg.nt)
        start[:n] = budget / n
    h = eff(start)
    p, binding = start, False
    rounds = 0
    for rounds in range(1, settings.active_set_max_rounds + 1):
        p, binding = _budgeted_solve(A, gains, h, budget, logdet_a, None, settings.inner_max_iters)
        h_new = eff(p)
        if h_new - h <= 1e-15 * max(1.0, h):
            h = max(h, h_new)
            break
        h = h_new
    u = float(utility_batch(cfg, chans, prof, k, p[None])[0])
    res = _result(cfg, dec, f_k, p, u, "exact_fixed_point", h=h, rounds=rounds, budget_binding=binding)
    if binding:
        res = replace(res, warnings=("budget binds at the best response",))
    if _kkt_ok(cfg, dec, f_k, res):
        return res
    log.warning("user %d: exact best response failed verification (residual %.3g); using grid fallback", k, res.residual)
    g = grid_search_br(cfg, chans, prof, k, settings.grid_fallback_points, refine=True)
    if g.utility < res.utility:
        g = replace(g, allocation=res.allocation, utility=res.utility, residual=res.residual, active_set=res.active_set)
    return replace(g, method="grid_fallback", rounds=rounds, warnings=res.warnings + ("stationarity check failed",))


# -- grid oracle / fallback ---------------------------------------------------


def _grid_candidates(nt: int, budget: float, points: int, lo=None, hi=None) -> np.ndarray:
    lo = np.zeros(nt) if lo is None else lo
    hi = np.full(nt, budget) if hi is None else hi
    axes = [np.linspace(lo[i], hi[i], points) for i in range(nt)]
    mesh = np.array(list(itertools.product(*axes))) if nt > 1 else axes[0][:, None]
    return mesh[mesh.sum(axis=1) <= budget + 1e-12]


def grid_search_br(cfg: GameConfig, chans: ChannelSet, profile, k: int, points: int = 200, refine: bool = False) -> BrResult:
    """Best own-allocation on a regular grid over the action set.

    With ``refine`` the grid is repeatedly re-centred on the incumbent with
    a shrinking span. Practical for ``nt <= 3``; larger ``nt`` falls back to
    uniform random sampling of the same size.
    """
    prof = check_profile(cfg, profile)
    budget = cfg.budgets[k]
    if cfg.nt <= 3:
        cands = _grid_candidates(cfg.nt, budget, points if cfg.nt <= 2 else min(points, 60))
    else:
        from .game import sample_simplex

        cands = sample_simplex(np.random.default_rng(0), points**2, cfg.nt, budget)
    us = utility_batch(cfg, chans, prof, k, cands)
    best = int(np.argmax(us))
    p, u = cands[best], float(us[best])
    if refine:
        span = budget / max(points - 1, 1)
        for _ in range(30):
            lo = np.maximum(p - span, 0.0)
            hi = np.minimum(p + span, budget)
            local = _grid_candidates(cfg.nt, budget, 11 if cfg.nt <= 3 else 5, lo, hi)
            if local.size:
                lu = utility_batch(cfg, chans, prof, k, local)
                j = int(np.argmax(lu))
                if lu[j] > u:
                    p, u = local[j], float(lu[j])
            span *= 0.5
    dec = chans.decomposition(k)
    f_k = interference_matrix(cfg, dec, prof)
    return _result(cfg, dec, f_k, np.array(p, dtype=float), u, "grid_search")
