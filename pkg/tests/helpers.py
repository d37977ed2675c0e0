import numpy as np

from eegame.channel import ChannelSet


def scalar_channels(*gains):
    """K scalar 1x1 channels with the given amplitudes."""
    return ChannelSet(h=np.array(gains, dtype=complex).reshape(-1, 1, 1))


def diag_channels(*diags, nr=None):
    """Channels whose matrices are (rectangular) diagonal, so every U_k = I."""
    diags = [np.asarray(d, dtype=float) for d in diags]
    nt = diags[0].size
    nr = nt if nr is None else nr
    hs = []
    for d in diags:
        h = np.zeros((nr, nt), dtype=complex)
        n = min(nr, nt)
        h[np.arange(n), np.arange(n)] = d[:n]
        hs.append(h)
    return ChannelSet(h=np.stack(hs))


def random_profile(rng, cfg):
    prof = np.empty((cfg.k_users, cfg.nt))
    for k, b in enumerate(cfg.budgets):
        e = rng.exponential(size=cfg.nt + 1)
        prof[k] = b * e[:-1] / e.sum()
    return prof
