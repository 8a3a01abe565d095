"""Plot-ready CSV export of a finished run.

Files and headers (all optional, depending on what the run recorded):

``decay_curve.csv``
    ``t,abs_rho01,analytic``: Monte-Carlo and analytic coherence modulus.
``histogram_fit.csv``
    ``eps_lo,eps_hi,f,count,volume,fit1,fit2``: coarse-grained occupancy with
    the one- and two-component fits (``nan`` outside the fitted window).
``magnetization.csv``
    ``step,magnetization,alignment_cosine,coupling_energy``.
``energy.csv``
    ``t,total_energy,relative_drift,momentum_drift``.
``order_parameter.csv``
    ``component,fraction,mean_lapse,phi_level,invariant_combo,delta,broken``.
"""

from __future__ import annotations

import warnings
from pathlib import Path

import numpy as np

from ..theta.io import write_rows
from .records import RunRecord

PLOTS = {
    "decay": ("decay_curve.csv", ["t", "abs_rho01", "analytic"]),
    "histogram": ("histogram_fit.csv", ["eps_lo", "eps_hi", "f", "count", "volume", "fit1", "fit2"]),
    "magnetization": ("magnetization.csv",
                      ["step", "magnetization", "alignment_cosine", "coupling_energy"]),
    "energy": ("energy.csv", ["t", "total_energy", "relative_drift", "momentum_drift"]),
    "order_parameter": ("order_parameter.csv",
                        ["component", "fraction", "mean_lapse", "phi_level", "invariant_combo",
                         "delta", "broken"]),
}


def _column(values, n):
    if values is None:
        return np.full(n, np.nan)
    return np.array([np.nan if isinstance(v, str) and v == "nan" else v for v in values], dtype=float)


def emit_plotdata(run: RunRecord, out_dir) -> list[Path]:
    """Write one CSV per recorded series; returns the paths written.

    A record with no series produces a warning and no files.  Series that are
    missing columns are written with ``nan`` in their place, again with a
    warning.
    """
    series = run.series or {}
    if not series:
        warnings.warn("run recorded no series; no plot data written", stacklevel=2)
        return []
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for key, (name, header) in PLOTS.items():
        data = series.get(key)
        if data is None:
            continue
        n = max(len(v) for v in data.values())
        missing = [h for h in header if h not in data]
        if missing:
            warnings.warn(f"{key}: missing column(s) {', '.join(missing)}", stacklevel=2)
        cols = [_column(data.get(h), n) for h in header]
        path = out / name
        write_rows(path, header, zip(*cols))
        written.append(path)
    return written
