"""Coarse-grained one-particle energy statistics and Lynden-Bell fits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares
from scipy.special import expit

from ..errors import FitFailure, InvalidInputError
from .dynamics import one_particle_energies
from .particles import ParticleSet, SimConfig

N_RESTARTS = 5
RESTART_SPREAD = 0.2
INFINITE_BETA_SCALE = 1e4


@dataclass
class PhaseSpaceHistogram:
    """Occupancy ``f`` per one-particle energy bin.

    ``volume[k]`` is the phase-space volume attributed to bin ``k`` and
    ``counts[k]`` the number of particles in it, so ``f = counts / volume``
    and ``sum(f * volume)`` recovers the particle count.
    """

    edges: np.ndarray
    f: np.ndarray
    counts: np.ndarray
    volume: np.ndarray

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=float)
        self.f = np.asarray(self.f, dtype=float)
        if np.any(np.diff(self.edges) <= 0):
            raise InvalidInputError("bin edges must be strictly increasing")
        if np.any(self.f < 0):
            raise InvalidInputError("occupancy must be non-negative")
        if self.f.shape[0] != self.edges.shape[0] - 1:
            raise InvalidInputError("need one occupancy value per bin")

    @property
    def centres(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def energy_scale(self) -> float:
        return float(self.edges[-1] - self.edges[0])

    def total(self) -> float:
        """Phase-space integral of ``f``."""
        return float(np.sum(self.f * self.volume))

    @classmethod
    def from_samples(cls, edges, f) -> "PhaseSpaceHistogram":
        """Histogram from an occupancy profile alone (counts/volume unknown)."""
        f = np.asarray(f, dtype=float)
        return cls(edges, f, np.full(f.shape, np.nan), np.full(f.shape, np.nan))


def cell_indices(particles: ParticleSet, cell_x: float, cell_p: float) -> np.ndarray:
    """Integer 6-D cell coordinates of every particle."""
    return np.concatenate(
        [np.floor(particles.x / cell_x), np.floor(particles.p / cell_p)], axis=1
    ).astype(np.int64)


def coarse_grain(particles: ParticleSet, cfg: SimConfig, bins=32, energies=None) -> PhaseSpaceHistogram:
    """Histogram one-particle energies into a phase-space occupancy ``f(eps)``.

    Each occupied 6-D cell of size ``cfg.cell_x^3 cfg.cell_p^3`` shares its
    volume among energy bins in proportion to the particles it holds from
    each bin, so a uniformly filled region yields ``f`` equal to its
    fine-grained level.
    """
    if len(particles) == 0:
        raise InvalidInputError("cannot coarse-grain an empty particle set")
    eps = one_particle_energies(particles, cfg) if energies is None else np.asarray(energies, float)
    if np.isscalar(bins) or np.ndim(bins) == 0:
        lo, hi = float(eps.min()), float(eps.max())
        if hi <= lo:
            width = max(abs(lo), 1.0) * 1e-6
            lo, hi = lo - width, hi + width
        else:
            pad = 1e-9 * (hi - lo)
            lo, hi = lo - pad, hi + pad
        edges = np.linspace(lo, hi, int(bins) + 1)
    else:
        edges = np.asarray(bins, dtype=float)
    nbins = edges.size - 1
    which = np.searchsorted(edges, eps, side="right") - 1
    which[eps == edges[-1]] = nbins - 1
    inside = (which >= 0) & (which < nbins)

    cell_vol = cfg.cell_x**3 * cfg.cell_p**3
    _, cell_of = np.unique(cell_indices(particles, cfg.cell_x, cfg.cell_p), axis=0, return_inverse=True)
    cell_of = cell_of.ravel()
    per_cell = np.bincount(cell_of).astype(float)
    # each particle carries cell_vol / (particles in its cell); energies outside
    # explicit edges are dropped
    which, share = which[inside], (cell_vol / per_cell[cell_of])[inside]
    counts = np.bincount(which, minlength=nbins).astype(float)
    volume = np.bincount(which, weights=share, minlength=nbins)
    f = np.divide(counts, volume, out=np.zeros(nbins), where=volume > 0)
    return PhaseSpaceHistogram(edges, f, counts, volume)


# -- Lynden-Bell model -----------------------------------------------------------

@dataclass(frozen=True)
class LyndenBellParams:
    """Per-component ``eta``, ``beta`` and ``mu`` of a (double) Lynden-Bell law."""

    eta: tuple
    beta: tuple
    mu: tuple

    def __post_init__(self):
        if not 1 <= len(self.eta) <= 2 or not len(self.eta) == len(self.beta) == len(self.mu):
            raise InvalidInputError("one or two components with matching parameter counts")
        if any(not e > 0 for e in self.eta):
            raise InvalidInputError("eta must be positive")
        if any(not b > 0 for b in self.beta):
            raise InvalidInputError("beta must be positive")

    @property
    def ncomp(self) -> int:
        return len(self.eta)

    def __call__(self, eps):
        return lynden_bell(eps, self.eta, self.beta, self.mu)

    def component(self, i, eps):
        return lynden_bell(eps, [self.eta[i]], [self.beta[i]], [self.mu[i]])

    def as_dict(self):
        return {"eta": list(self.eta), "beta": list(self.beta), "mu": list(self.mu)}


def lynden_bell(eps, eta, beta, mu):
    """``sum_i eta_i / (exp(beta_i (eps - mu_i)) + 1)``; ``beta = inf`` gives a step."""
    eps = np.asarray(eps, dtype=float)
    out = np.zeros_like(eps)
    for e, b, m in zip(eta, beta, mu):
        if np.isinf(b):
            out = out + e * np.where(eps < m, 1.0, np.where(eps > m, 0.0, 0.5))
        else:
            out = out + e * expit(-b * (eps - m))
    return out


def fermi_ground_state(etas, fermi_energies):
    """Zero-temperature occupancy ``sum_i eta_i theta(eF_i - eps)`` with ``theta(0) = 1``."""
    etas = np.atleast_1d(np.asarray(etas, dtype=float))
    fermi = np.atleast_1d(np.asarray(fermi_energies, dtype=float))
    if etas.shape != fermi.shape or etas.size not in (1, 2):
        raise InvalidInputError("need one or two (eta, eF) pairs of equal length")
    if np.any(etas <= 0):
        raise InvalidInputError("eta must be positive")

    def f0(eps):
        eps = np.asarray(eps, dtype=float)
        return sum(e * (eps <= ef) for e, ef in zip(etas, fermi)) * 1.0

    return f0


@dataclass(frozen=True)
class LyndenBellFit:
    params: LyndenBellParams
    residual: float
    infinite_beta_threshold: float
    nfev: int

    @property
    def effectively_zero_temperature(self) -> bool:
        return any(b > self.infinite_beta_threshold for b in self.params.beta)


def _unpack(theta, ncomp):
    t = theta.reshape(ncomp, 3)
    return np.exp(t[:, 0]), np.exp(t[:, 1]), t[:, 2]


def _model(theta, x, ncomp):
    eta, beta, mu = _unpack(theta, ncomp)
    out = np.zeros_like(x)
    for i in range(ncomp):
        out = out + eta[i] * expit(-beta[i] * (x - mu[i]))
    return out


def _jacobian(theta, x, ncomp):
    # columns d/d(log eta), d/d(log beta), d/d(mu) per component
    eta, beta, mu = _unpack(theta, ncomp)
    out = np.empty((x.size, 3 * ncomp))
    for i in range(ncomp):
        sig = expit(-beta[i] * (x - mu[i]))
        slope = eta[i] * sig * (1.0 - sig) * beta[i]
        out[:, 3 * i] = eta[i] * sig
        out[:, 3 * i + 1] = -slope * (x - mu[i])
        out[:, 3 * i + 2] = slope
    return out


def _pack(eta, beta, mu):
    return np.column_stack([np.log(eta), np.log(beta), mu]).ravel()


# search box in rescaled units (unit energy span, unit peak occupancy)
_LOWER = np.log([1e-6, 1e-3]).tolist() + [-1.0]
_UPPER = np.log([1e3, 1e7]).tolist() + [2.0]


def _solve(theta0, x, y, ncomp):
    lower = np.tile(_LOWER, ncomp)
    upper = np.tile(_UPPER, ncomp)
    theta0 = np.clip(np.asarray(theta0, dtype=float), lower + 1e-9, upper - 1e-9)
    try:
        res = least_squares(
            lambda t: _model(t, x, ncomp) - y, theta0, jac=lambda t: _jacobian(t, x, ncomp),
            bounds=(lower, upper), method="trf",
            xtol=1e-12, ftol=1e-12, gtol=1e-12, max_nfev=200 * theta0.size,
        )
    except (ValueError, FloatingPointError):
        return None
    if not np.all(np.isfinite(res.x)):
        return None
    return res


def _half_drop(x, y):
    top = y.max()
    below = np.nonzero(y < 0.5 * top)[0]
    above = np.nonzero(y >= 0.5 * top)[0]
    if below.size == 0 or above.size == 0:
        return float(np.median(x))
    cross = below[below > above[0]]
    return float(x[cross[0]]) if cross.size else float(x[below[-1]])


def _step_candidate(x, y):
    """Best zero-temperature single step: eta * [x < cut]."""
    order = np.argsort(x)
    xs, ys = x[order], y[order]
    best = None
    for k in range(1, xs.size):
        if xs[k] == xs[k - 1]:
            continue
        eta = ys[:k].mean()
        if eta <= 0:
            continue
        ssr = float(((ys[:k] - eta) ** 2).sum() + (ys[k:] ** 2).sum())
        if best is None or ssr < best[0]:
            best = (ssr, eta, 0.5 * (xs[k - 1] + xs[k]))
    return best


def _raw_residual(params, x, y):
    r = lynden_bell(x, params.eta, params.beta, params.mu) - y
    return float(r @ r)


def _to_params(theta, ncomp, e0, es, fs):
    eta, beta, mu = _unpack(theta, ncomp)
    order = np.argsort(mu, kind="stable")
    return LyndenBellParams(
        tuple(float(v) for v in (eta * fs)[order]),
        tuple(float(v) for v in (beta / es)[order]),
        tuple(float(v) for v in (mu * es + e0)[order]),
    )


def fit_lynden_bell(hist, ncomp: int = 1, restarts: int = N_RESTARTS, seed: int = 0) -> LyndenBellFit:
    """Least-squares fit of one or two Lynden-Bell components to ``hist.f``.

    Energies and occupancies are rescaled to unit span before fitting.  The
    two-component search always includes the one-component optimum split
    into two identical halves (an exact reparametrisation of the same
    curve), so its residual can never exceed the one-component residual.
    A pure step (``beta = inf``) competes as the zero-temperature limit.

    Raises
    ------
    FitFailure
        If no start converged; ``best`` carries the best parameters seen.
    """
    if ncomp not in (1, 2):
        raise InvalidInputError("ncomp must be 1 or 2")
    mask = np.isfinite(hist.f)
    x_raw, y_raw = hist.centres[mask], hist.f[mask]
    if x_raw.size < 3 * ncomp or not np.any(y_raw > 0):
        raise InvalidInputError("histogram has too few occupied bins to fit")
    e0, es = float(hist.edges[0]), hist.energy_scale
    fs = float(y_raw.max())
    x, y = (x_raw - e0) / es, y_raw / fs
    rng = np.random.default_rng(seed)
    threshold = INFINITE_BETA_SCALE / es

    def jittered(theta, k):
        eta, beta, mu = _unpack(theta, k)
        out = []
        for _ in range(restarts):
            u = RESTART_SPREAD * rng.uniform(-1, 1, size=(3, k))
            out.append(_pack(eta * (1 + u[0]), beta * (1 + u[1]), mu + u[2]))
        return out

    top = float(y.max())
    mu0 = _half_drop(x, y)
    base = [_pack([top], [10.0], [mu0]), _pack([top], [40.0], [mu0])]
    best, best_ssr, nfev = None, np.inf, 0
    for theta0 in base + jittered(base[0], 1):
        res = _solve(theta0, x, y, 1)
        if res is None:
            continue
        nfev += res.nfev
        cand = _to_params(res.x, 1, e0, es, fs)
        ssr = _raw_residual(cand, x_raw, y_raw)
        if ssr < best_ssr:
            best, best_ssr, best_theta = cand, ssr, res.x
    if best is None:
        raise FitFailure("one-component Lynden-Bell fit did not converge")

    step = _step_candidate(x, y)
    if step is not None:
        cand = LyndenBellParams((float(step[1] * fs),), (np.inf,), (float(step[2] * es + e0),))
        ssr = _raw_residual(cand, x_raw, y_raw)
        if ssr <= best_ssr:
            best, best_ssr = cand, ssr

    if ncomp == 2:
        # exact halving keeps the summed curve bit-identical
        best = LyndenBellParams((best.eta[0] / 2, best.eta[0] / 2), best.beta * 2, best.mu * 2)
        best_ssr = _raw_residual(best, x_raw, y_raw)
        eta, beta, mu = _unpack(best_theta, 1)
        starts = []
        for delta in (0.05, 0.15, 0.3):
            for frac in (0.5, 0.25, 0.75):
                starts.append(_pack([eta[0] * frac, eta[0] * (1 - frac)],
                                    np.repeat(beta, 2), [mu[0] - delta, mu[0] + delta]))
        for theta0 in starts + jittered(starts[4], 2):
            res = _solve(theta0, x, y, 2)
            if res is None:
                continue
            nfev += res.nfev
            try:
                cand = _to_params(res.x, 2, e0, es, fs)
            except InvalidInputError:
                continue
            ssr = _raw_residual(cand, x_raw, y_raw)
            if ssr < best_ssr:
                best, best_ssr = cand, ssr
    if not np.isfinite(best_ssr):
        raise FitFailure("Lynden-Bell fit produced a non-finite residual", best, best_ssr)
    return LyndenBellFit(best, best_ssr, threshold, nfev)
