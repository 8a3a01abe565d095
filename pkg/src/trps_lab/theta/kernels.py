"""Pair-kernel backend selection.

The compiled extension is used when importable.  Setting the environment
variable ``TRPS_LAB_BACKEND=python`` forces the numpy fallback; ``use()``
switches at runtime.
"""

import os

import numpy as np

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["compiled"] = _ckernels


def available():
    return sorted(_BACKENDS)


def _initial():
    want = os.environ.get("TRPS_LAB_BACKEND", "").strip().lower()
    if want:
        if want not in _BACKENDS:
            raise ImportError(f"kernel backend {want!r} unavailable; have {available()}")
        return want
    return "compiled" if _ckernels is not None else "python"


_active = _initial()


def backend():
    """Name of the active backend."""
    return _active


def use(name):
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown kernel backend {name!r}; have {available()}")
    _active = name


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def forces(x, s, g, a2):
    """Pair forces ``-grad_i`` of ``-g sum_{i<j} s_i.s_j / sqrt(r_ij^2 + a2)``."""
    return _BACKENDS[_active].forces(_c(x), _c(s), float(g), float(a2))


def potentials(x, s, g, a2):
    """Per-particle potential ``-g sum_{j != i} s_i.s_j / sqrt(r_ij^2 + a2)``."""
    return _BACKENDS[_active].potentials(_c(x), _c(s), float(g), float(a2))


def potential_at(x, s, g, a2, y, sy):
    return _BACKENDS[_active].potential_at(_c(x), _c(s), float(g), float(a2),
                                           _c(y).ravel(), _c(sy).ravel())
