"""Rayleigh block-fading channels and their per-user SVD coupling factors."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .matrix_kernel import SvdFactors, svd

__all__ = [
    "ChannelDecomposition",
    "ChannelSet",
    "sample_rayleigh",
    "decompose_all",
    "generate_channel_set",
    "save_channel_set",
    "load_channel_set",
]


def sample_rayleigh(nr: int, nt: int, rng: np.random.Generator) -> np.ndarray:
    """Draw an ``nr x nt`` matrix of i.i.d. CN(0, 1) entries.

    Real and imaginary parts are N(0, 1/2), drawn interleaved per entry in
    row-major order.
    """
    if nr < 1 or nt < 1:
        raise ValueError(f"channel dimensions must be positive, got {nr}x{nt}")
    g = rng.standard_normal((nr, nt, 2)) * np.sqrt(0.5)
    return g[..., 0] + 1j * g[..., 1]


@dataclass(frozen=True)
class ChannelDecomposition:
    """Channel seen from user ``reference``'s receive eigenbasis.

    ``cross_factors[j]`` is ``S_j = U_k^H U_j Lambda_j`` for reference user k,
    so that ``cross_factors[k]`` is user k's own rectangular singular-value
    matrix.
    """

    reference: int
    factors: SvdFactors
    cross_factors: np.ndarray  # (K, nr, nt)

    @property
    def sigma(self) -> np.ndarray:
        return self.factors.sigma

    @property
    def gains(self) -> np.ndarray:
        """Per-mode power gains ``lambda_i^2`` padded with zeros to ``nt``."""
        nt = self.factors.v.shape[0]
        g = np.zeros(nt)
        g[: self.sigma.size] = self.sigma**2
        return g


def decompose_all(channels, reference_user: int, factors: list[SvdFactors] | None = None) -> ChannelDecomposition:
    """Build the coupling factors ``S_j`` relative to ``reference_user``."""
    hs = [np.asarray(h, dtype=complex) for h in channels]
    if not hs:
        raise ValueError("need at least one channel")
    shape = hs[0].shape
    for j, h in enumerate(hs):
        if h.shape != shape:
            raise ValueError(f"channel {j} has shape {h.shape}, expected {shape}")
    if not 0 <= reference_user < len(hs):
        raise IndexError(f"reference user {reference_user} out of range for K={len(hs)}")
    if factors is None:
        factors = [svd(h) for h in hs]
    uk_h = factors[reference_user].u.conj().T
    cross = np.stack([uk_h @ f.u @ f.rect() for f in factors])
    return ChannelDecomposition(reference=reference_user, factors=factors[reference_user], cross_factors=cross)


@dataclass(frozen=True)
class ChannelSet:
    """One channel realisation for all K users.

    ``h`` has shape ``(K, nr, nt)``. ``seed`` is the generator seed it was
    drawn from, or ``None`` for hand-built channels.
    """

    h: np.ndarray
    seed: int | None = None
    noise_power: float = 1.0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        h = np.asarray(self.h, dtype=complex)
        if h.ndim != 3:
            raise ValueError(f"channel stack must be (K, nr, nt), got shape {h.shape}")
        if not np.all(np.isfinite(h)):
            raise ValueError("channel stack has non-finite entries")
        h.setflags(write=False)
        object.__setattr__(self, "h", h)

    @property
    def k_users(self) -> int:
        return self.h.shape[0]

    @property
    def nr(self) -> int:
        return self.h.shape[1]

    @property
    def nt(self) -> int:
        return self.h.shape[2]

    @cached_property
    def factors(self) -> list[SvdFactors]:
        return [svd(hk) for hk in self.h]

    def decomposition(self, k: int) -> ChannelDecomposition:
        if k not in self._cache:
            self._cache[k] = decompose_all(self.h, k, self.factors)
        return self._cache[k]


def generate_channel_set(k_users: int, nr: int, nt: int, seed: int, noise_power: float = 1.0) -> ChannelSet:
    """Draw a ChannelSet; a pure function of ``(seed, k_users, nr, nt)``."""
    rng = np.random.default_rng(seed)
    h = np.stack([sample_rayleigh(nr, nt, rng) for _ in range(k_users)])
    return ChannelSet(h=h, seed=int(seed), noise_power=float(noise_power))


# Fixture format: '#' metadata lines, then one CSV row per (user, row):
#   user,row,re(0),im(0),re(1),im(1),...
def save_channel_set(chans: ChannelSet, path) -> None:
    path = Path(path)
    lines = [
        f"# k_users={chans.k_users}",
        f"# nr={chans.nr}",
        f"# nt={chans.nt}",
        f"# noise_power={chans.noise_power!r}",
        f"# seed={'' if chans.seed is None else chans.seed}",
        "user,row," + ",".join(f"re{c},im{c}" for c in range(chans.nt)),
    ]
    for k in range(chans.k_users):
        for r in range(chans.nr):
            vals = []
            for z in chans.h[k, r]:
                vals += [repr(float(z.real)), repr(float(z.imag))]
            lines.append(f"{k},{r}," + ",".join(vals))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_channel_set(path) -> ChannelSet:
    meta = {}
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            meta[key.strip()] = val.strip()
        elif line.startswith("user"):
            continue
        else:
            rows.append([float(x) for x in line.split(",")])
    k, nr, nt = int(meta["k_users"]), int(meta["nr"]), int(meta["nt"])
    h = np.zeros((k, nr, nt), dtype=complex)
    for row in rows:
        u, r, vals = int(row[0]), int(row[1]), row[2:]
        if len(vals) != 2 * nt:
            raise ValueError(f"row for user {u}, row {r} has {len(vals)} values, expected {2 * nt}")
        h[u, r] = np.asarray(vals[0::2]) + 1j * np.asarray(vals[1::2])
    seed = int(meta["seed"]) if meta.get("seed") else None
    return ChannelSet(h=h, seed=seed, noise_power=float(meta.get("noise_power", 1.0)))
