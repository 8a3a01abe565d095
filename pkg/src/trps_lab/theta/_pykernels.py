"""Numpy fallback for the pair kernels (same signatures as ``_ckernels``)."""

import numpy as np

BLOCK = 256


def _blocks(n):
    for start in range(0, n, BLOCK):
        yield start, min(start + BLOCK, n)


def forces(x, s, g, a2):
    x = np.ascontiguousarray(x, dtype=float)
    s = np.ascontiguousarray(s, dtype=float)
    n = x.shape[0]
    out = np.zeros((n, 3))
    for lo, hi in _blocks(n):
        d = x[lo:hi, None, :] - x[None, :, :]
        inv = 1.0 / np.sqrt((d * d).sum(-1) + a2)
        w = g * (s[lo:hi] @ s.T) * inv**3
        # self terms have d = 0 and drop out
        out[lo:hi] = -(w[:, :, None] * d).sum(axis=1)
    return out


def potentials(x, s, g, a2):
    x = np.ascontiguousarray(x, dtype=float)
    s = np.ascontiguousarray(s, dtype=float)
    n = x.shape[0]
    out = np.zeros(n)
    for lo, hi in _blocks(n):
        d = x[lo:hi, None, :] - x[None, :, :]
        u = -g * (s[lo:hi] @ s.T) / np.sqrt((d * d).sum(-1) + a2)
        idx = np.arange(lo, hi)
        u[idx - lo, idx] = 0.0
        out[lo:hi] = u.sum(axis=1)
    return out


def potential_at(x, s, g, a2, y, sy):
    d = np.asarray(y, dtype=float) - x
    return float(-g * ((s @ np.asarray(sy, dtype=float)) / np.sqrt((d * d).sum(-1) + a2)).sum())
