"""Small dense complex linear-algebra kernels.

Everything here works on plain ``numpy`` arrays. Matrices in this package
are tiny (a handful of antennas), so the routines favour validation and
reproducibility over raw speed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

__all__ = [
    "NumericalError",
    "NotPositiveDefiniteError",
    "SvdFactors",
    "svd",
    "diag_rect",
    "logdet_hpd",
    "inv_hpd",
    "pinv_rect_diag",
]

HERMITIAN_TOL = 1e-10
PINV_RTOL = 1e-12


class NumericalError(ArithmeticError):
    """An underlying numerical routine failed to produce a result."""


class NotPositiveDefiniteError(NumericalError, ValueError):
    """Input matrix is not Hermitian positive-definite.

    ``minor`` is the order of the first leading principal minor that is not
    positive (``None`` when the failure is a Hermitian-symmetry violation).
    """

    def __init__(self, message: str, minor: int | None = None):
        super().__init__(message)
        self.minor = minor


@dataclass(frozen=True)
class SvdFactors:
    """Full SVD ``m = u @ diag_rect(sigma) @ v.conj().T``."""

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.u.shape[0], self.v.shape[0]

    def rect(self) -> np.ndarray:
        return diag_rect(self.sigma, *self.shape)

    def reconstruct(self) -> np.ndarray:
        return self.u @ self.rect() @ self.v.conj().T


def _as_matrix(m) -> np.ndarray:
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"matrix of shape {a.shape} has non-finite entries")
    return a


def diag_rect(sigma, rows: int, cols: int) -> np.ndarray:
    """``rows x cols`` matrix with ``sigma`` on its main diagonal."""
    sigma = np.asarray(sigma)
    n = min(rows, cols)
    if sigma.shape != (n,):
        raise ValueError(f"need {n} diagonal values for a {rows}x{cols} matrix, got {sigma.shape}")
    out = np.zeros((rows, cols), dtype=complex)
    out[np.arange(n), np.arange(n)] = sigma
    return out


def _phase_of_first_nonzero(col: np.ndarray) -> complex:
    mags = np.abs(col)
    idx = np.flatnonzero(mags > 1e-14 * max(mags.max(), 1.0))
    if idx.size == 0:
        return 1.0
    z = col[idx[0]]
    return z / abs(z)


def svd(m) -> SvdFactors:
    """Full singular value decomposition with a fixed phase convention.

    The first non-negligible entry of every column of ``u`` is made real and
    non-negative; the matching column of ``v`` is rotated by the same phase
    so the product is unchanged. Columns of ``v`` spanning the null space get
    the same normalisation applied to themselves.
    """
    a = _as_matrix(m)
    nr, nt = a.shape
    try:
        u, s, vh = np.linalg.svd(a, full_matrices=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge for a {nr}x{nt} matrix") from exc
    v = vh.conj().T
    n = min(nr, nt)
    for j in range(nr):
        c = np.conj(_phase_of_first_nonzero(u[:, j]))
        u[:, j] *= c
        if j < n:
            v[:, j] *= c
    for j in range(n, nt):
        v[:, j] *= np.conj(_phase_of_first_nonzero(v[:, j]))
    return SvdFactors(u=u, sigma=s.astype(float), v=v)


def _cholesky(a: np.ndarray) -> np.ndarray:
    scale = max(1.0, float(np.abs(a).max()))
    if float(np.abs(a - a.conj().T).max()) > HERMITIAN_TOL * scale:
        raise NotPositiveDefiniteError(f"{a.shape[0]}x{a.shape[1]} matrix is not Hermitian")
    try:
        return la.cholesky(a, lower=True)
    except la.LinAlgError:
        pass
    # locate the first leading minor that fails, for the error message
    for k in range(1, a.shape[0] + 1):
        try:
            la.cholesky(a[:k, :k], lower=True)
        except la.LinAlgError:
            raise NotPositiveDefiniteError(
                f"matrix is not positive-definite: leading minor of order {k} is not positive",
                minor=k,
            ) from None
    raise NotPositiveDefiniteError("matrix is not positive-definite", minor=a.shape[0])


def logdet_hpd(m) -> float:
    """Natural-log determinant of a Hermitian positive-definite matrix."""
    a = _as_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"logdet needs a square matrix, got {a.shape}")
    L = _cholesky(a)
    return float(2.0 * np.log(np.diag(L).real).sum())


def inv_hpd(m) -> np.ndarray:
    """Inverse of a Hermitian positive-definite matrix via Cholesky."""
    a = _as_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"inverse needs a square matrix, got {a.shape}")
    L = _cholesky(a)
    inv = la.cho_solve((L, True), np.eye(a.shape[0], dtype=complex))
    return 0.5 * (inv + inv.conj().T)


def pinv_rect_diag(sigma, rows: int, cols: int) -> np.ndarray:
    """Moore-Penrose pseudo-inverse of ``diag_rect(sigma, rows, cols)``.

    Returns a ``cols x rows`` matrix. Singular values at or below
    ``1e-12 * max(sigma)`` are treated as exact zeros.
    """
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape != (min(rows, cols),):
        raise ValueError(f"need {min(rows, cols)} singular values, got {sigma.shape}")
    if np.any(sigma < 0):
        raise ValueError("singular values must be non-negative")
    thresh = PINV_RTOL * (sigma.max() if sigma.size else 0.0)
    recip = np.zeros_like(sigma)
    keep = sigma > thresh
    recip[keep] = 1.0 / sigma[keep]
    return diag_rect(recip, cols, rows)
