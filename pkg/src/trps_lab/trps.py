"""Two-component ground state, lapse potential and time-reparametrization tests.

Spatial fields live on a uniform tensor grid and are integrated with the
rectangle rule (value times cell volume).  A lapse field is a positive array
on that grid.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate, optimize, stats

from .errors import InvalidInputError

BROKEN_TOL = 1e-9


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid of cell centres."""

    axes: tuple

    def __post_init__(self):
        axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        if len(axes) != 3:
            raise InvalidInputError("grid needs three axes")
        for a in axes:
            if a.ndim != 1 or a.size < 1:
                raise InvalidInputError("grid axes must be non-empty 1-D arrays")
            if a.size > 1 and not np.allclose(np.diff(a), a[1] - a[0], rtol=1e-9, atol=0):
                raise InvalidInputError("grid axes must be uniformly spaced")
        object.__setattr__(self, "axes", axes)

    @classmethod
    def cube(cls, half_width: float, n: int) -> "Grid":
        h = 2 * half_width / n
        centres = -half_width + h * (np.arange(n) + 0.5)
        return cls((centres, centres, centres))

    @property
    def shape(self):
        return tuple(a.size for a in self.axes)

    @property
    def spacing(self) -> np.ndarray:
        return np.array([a[1] - a[0] if a.size > 1 else 1.0 for a in self.axes])

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def edges(self):
        return tuple(np.append(a - h / 2, a[-1] + h / 2) for a, h in zip(self.axes, self.spacing))

    def mesh(self):
        return np.meshgrid(*self.axes, indexing="ij")

    def points(self) -> np.ndarray:
        return np.stack([m.ravel() for m in self.mesh()], axis=-1)

    def integrate(self, values) -> float:
        return float(np.sum(values) * self.cell_volume)

    def refined(self) -> "Grid":
        """Grid with every cell split in two along each axis."""
        out = []
        for a, h in zip(self.axes, self.spacing):
            lo = a[0] - h / 2
            n = 2 * a.size
            out.append(lo + (h / 2) * (np.arange(n) + 0.5))
        return Grid(tuple(out))

    def locate(self, x) -> tuple:
        """Cell indices containing points ``x`` (clipped to the grid)."""
        x = np.atleast_2d(x)
        idx = []
        for k, (a, h) in enumerate(zip(self.axes, self.spacing)):
            i = np.floor((x[:, k] - (a[0] - h / 2)) / h).astype(int)
            idx.append(np.clip(i, 0, a.size - 1))
        return tuple(idx)

    def check(self, values, name="field"):
        values = np.asarray(values, dtype=float)
        if values.shape != self.shape:
            raise InvalidInputError(f"{name} has shape {values.shape}, grid is {self.shape}")
        return values


@dataclass(frozen=True)
class LapseWeight:
    """Lognormal weight over lapse values with the given mean ``level``."""

    level: float
    shape: float = 0.3

    def __post_init__(self):
        if not self.level > 0:
            raise InvalidInputError("lapse level must be positive")
        if not self.shape >= 0:
            raise InvalidInputError("lognormal shape must be non-negative")

    @property
    def mean(self) -> float:
        return self.level

    @property
    def variance(self) -> float:
        return self.level**2 * math.expm1(self.shape**2)

    def sample(self, rng, size):
        if self.shape == 0:
            return np.full(size, self.level)
        return self.level * np.exp(self.shape * rng.standard_normal(size) - 0.5 * self.shape**2)

    def pdf(self, n):
        if self.shape == 0:
            raise InvalidInputError("degenerate weight has no density")
        return stats.lognorm(self.shape, scale=self.level * math.exp(-0.5 * self.shape**2)).pdf(n)


@dataclass
class GroundStatePair:
    """Core/halo spatial densities with their lapse weights.

    ``rho1 + rho2`` must integrate to one over ``grid``.
    """

    grid: Grid
    rho1: np.ndarray
    rho2: np.ndarray
    phi: tuple = (LapseWeight(1.0), LapseWeight(1.0))
    norm_tol: float = 1e-9

    def __post_init__(self):
        self.rho1 = self.grid.check(self.rho1, "rho1")
        self.rho2 = self.grid.check(self.rho2, "rho2")
        problems = self.violations()
        if problems:
            raise InvalidInputError("; ".join(problems))

    def violations(self):
        out = []
        if np.any(self.rho1 < 0) or np.any(self.rho2 < 0):
            out.append("densities must be non-negative")
        total = self.grid.integrate(self.rho0)
        if abs(total - 1.0) > self.norm_tol:
            out.append(f"total density integrates to {total:.12g}, not 1")
        return out

    @property
    def rho0(self) -> np.ndarray:
        return self.rho1 + self.rho2

    @property
    def fractions(self):
        r1 = self.grid.integrate(self.rho1)
        return r1, 1.0 - r1

    def component(self, i):
        return (self.rho1, self.rho2)[i]

    def with_phi(self, phi) -> "GroundStatePair":
        return GroundStatePair(self.grid, self.rho1, self.rho2, tuple(phi), self.norm_tol)

    @classmethod
    def from_particles(cls, grid: Grid, positions, membership, phi=None) -> "GroundStatePair":
        """Bin particle positions into component densities.

        ``membership`` is an (n, 2) array of per-particle component weights
        summing to one.  Particles outside the grid are dropped and the
        densities renormalised.
        """
        positions = np.asarray(positions, dtype=float)
        w = np.asarray(membership, dtype=float)
        if w.shape != (positions.shape[0], 2):
            raise InvalidInputError("membership must have shape (n, 2)")
        dens = [np.histogramdd(positions, bins=grid.edges, weights=w[:, k])[0] for k in (0, 1)]
        total = (dens[0].sum() + dens[1].sum()) * grid.cell_volume
        if total <= 0:
            raise InvalidInputError("no particles fall inside the grid")
        rho1, rho2 = (d / total for d in dens)
        phi = phi or (LapseWeight(1.0), LapseWeight(1.0))
        return cls(grid, rho1, rho2, tuple(phi))


def v_c(pair: GroundStatePair, lapse, kappa: float, g_c: float, nu: float) -> float:
    """``g_c kappa nu sum_i integral rho_i N dS`` by the rectangle rule."""
    for name, v in (("kappa", kappa), ("g_c", g_c), ("nu", nu)):
        if not v > 0:
            raise InvalidInputError(f"{name} must be positive, got {v}")
    n = pair.grid.check(lapse, "lapse")
    return g_c * kappa * nu * (pair.grid.integrate(pair.rho1 * n) + pair.grid.integrate(pair.rho2 * n))


def sample_positions(pair: GroundStatePair, count: int, rng):
    """Draw positions from the component densities.

    Returns ``(positions, component)`` with positions uniform inside the
    chosen cell.
    """
    grid = pair.grid
    w = np.concatenate([pair.rho1.ravel(), pair.rho2.ravel()]) * grid.cell_volume
    pick = rng.choice(w.size, size=count, p=w / w.sum())
    comp = (pick >= pair.rho1.size).astype(int)
    flat = pick % pair.rho1.size
    idx = np.unravel_index(flat, grid.shape)
    centres = np.stack([a[i] for a, i in zip(grid.axes, idx)], axis=-1)
    jitter = (rng.random((count, 3)) - 0.5) * grid.spacing
    return centres + jitter, comp


def v_c_particles(grid: Grid, lapse, positions, kappa: float, g_c: float) -> float:
    """Particle form ``g_c kappa sum_x N(x)`` over sampled theta positions."""
    n = grid.check(lapse, "lapse")
    return g_c * kappa * float(n[grid.locate(positions)].sum())


@dataclass
class ComponentLapse:
    n1: np.ndarray
    n2: np.ndarray
    mask: np.ndarray
    mean1: float
    mean2: float

    @property
    def masked_cells(self) -> int:
        return int((~self.mask).sum())


def component_lapse(pair: GroundStatePair, lapse) -> ComponentLapse:
    """Per-component lapses ``N_i = rho_i N / (r_i rho0)`` and their rho0-weighted means.

    Cells with ``rho0 == 0`` are masked (NaN) and counted in ``masked_cells``.
    """
    n = pair.grid.check(lapse, "lapse")
    if np.any(n <= 0):
        raise InvalidInputError("lapse must be positive everywhere")
    rho0 = pair.rho0
    live = rho0 > 0
    r1, r2 = pair.fractions
    out = []
    means = []
    for rho, r in ((pair.rho1, r1), (pair.rho2, r2)):
        comp = np.full(rho0.shape, np.nan)
        if r > 0:
            comp[live] = rho[live] * n[live] / (r * rho0[live])
            means.append(pair.grid.integrate(rho * n) / r)
        else:
            means.append(float("nan"))
        out.append(comp)
    return ComponentLapse(out[0], out[1], live, means[0], means[1])


@dataclass(frozen=True)
class OrderParameter:
    invariant_combo: float
    delta: float
    broken: bool
    tolerance: float

    def as_dict(self):
        return asdict(self)


def order_parameter(pair: GroundStatePair, lapse, tol: float = BROKEN_TOL) -> OrderParameter:
    """Symmetric combination ``r1 <N1> + r2 <N2>`` and splitting ``<N1> - <N2>``.

    The phase counts as broken when ``|delta| > tol * invariant_combo``.
    """
    comp = component_lapse(pair, lapse)
    r1, r2 = pair.fractions
    m1 = comp.mean1 if r1 > 0 else 0.0
    m2 = comp.mean2 if r2 > 0 else 0.0
    combo = r1 * m1 + r2 * m2
    delta = comp.mean1 - comp.mean2 if r1 > 0 and r2 > 0 else 0.0
    return OrderParameter(combo, delta, bool(abs(delta) > tol * abs(combo)), tol)


# -- time reparametrization ----------------------------------------------------

@dataclass
class TimeMap:
    """Clock grid ``t0`` with a reparametrization ``F`` (and optional ``dF``)."""

    t0: np.ndarray
    F: object
    dF: object = None

    def __post_init__(self):
        self.t0 = np.asarray(self.t0, dtype=float)
        if self.t0.ndim != 1 or self.t0.size < 2 or np.any(np.diff(self.t0) <= 0):
            raise InvalidInputError("t0 grid must be strictly increasing with at least two points")

    def derivative(self, t):
        if self.dF is not None:
            return np.asarray(self.dF(t), dtype=float)
        return _complex_step(self.F, t)

    def check_monotone(self):
        mapped = np.asarray(self.F(self.t0), dtype=float)
        slopes = self.derivative(self.t0)
        if np.any(np.diff(mapped) <= 0) or np.any(slopes <= 0):
            raise InvalidInputError("reparametrization must be strictly increasing on the t0 grid")
        return mapped, slopes

    @classmethod
    def scaling(cls, t0, factor):
        return cls(t0, lambda t: factor * np.asarray(t), lambda t: np.full(np.shape(t), float(factor)))

    @classmethod
    def sine(cls, t0, amplitude=0.1):
        return cls(t0, lambda t: t + amplitude * np.sin(t), lambda t: 1 + amplitude * np.cos(t))


def _complex_step(F, t, h=1e-30):
    t = np.asarray(t, dtype=float)
    try:
        return np.asarray(F(t + 1j * h)).imag / h
    except (TypeError, ValueError):
        eps = 1e-5
        return (np.asarray(F(t + eps)) - np.asarray(F(t - eps))) / (2 * eps)


@dataclass
class InvarianceReport:
    vc_dt0_rel_dev: float
    proper_time_rel_dev: float
    proper_time_discrete_rel_dev: float
    verdict_before: bool
    verdict_after: list
    lapse_change: float
    fractions_unchanged: bool
    tol: float = 1e-12
    details: dict = field(default_factory=dict)

    @property
    def vc_invariant(self):
        return self.vc_dt0_rel_dev <= self.tol

    @property
    def proper_time_invariant(self):
        return self.proper_time_rel_dev <= self.tol and self.proper_time_discrete_rel_dev <= self.tol

    @property
    def verdict_invariant(self):
        return all(v == self.verdict_before for v in self.verdict_after)

    @property
    def lapse_changed(self):
        return self.lapse_change > 0

    @property
    def passed(self):
        return (self.vc_invariant and self.proper_time_invariant and self.verdict_invariant
                and self.fractions_unchanged)

    def as_dict(self):
        out = asdict(self)
        out.update(vc_invariant=self.vc_invariant, proper_time_invariant=self.proper_time_invariant,
                   verdict_invariant=self.verdict_invariant, lapse_changed=self.lapse_changed,
                   passed=self.passed)
        return out


def reparametrize(tm: TimeMap, lapse, pair: GroundStatePair, kappa: float, g_c: float,
                  nu: float, tol: float = 1e-12) -> InvarianceReport:
    """Apply ``N -> N / F'(t0)``, ``dt0 -> F'(t0) dt0`` and compare invariants.

    Checked: ``V_c dt0`` at every clock time, the accumulated proper time
    ``integral N dt0`` (both on the clock grid with secant slopes and as a
    continuous integral over the new clock), the broken/unbroken verdict and
    the component fractions.  The lapse itself is expected to change.
    """
    n = pair.grid.check(lapse, "lapse")
    mapped, slopes = tm.check_monotone()
    dt0 = np.diff(tm.t0)
    local = np.gradient(tm.t0)
    base_vc = v_c(pair, n, kappa, g_c, nu)
    base_op = order_parameter(pair, n)
    r_before = pair.fractions

    vc_dev = 0.0
    verdicts = []
    change = 0.0
    for slope, h in zip(slopes, local):
        n_new = n / slope
        lhs = v_c(pair, n_new, kappa, g_c, nu) * (slope * h)
        rhs = base_vc * h
        vc_dev = max(vc_dev, abs(lhs - rhs) / abs(rhs))
        verdicts.append(order_parameter(pair, n_new).broken)
        change = max(change, float(np.max(np.abs(n_new - n))))

    # discrete proper time: secant slopes make N' dF = N dt0 step by step
    secant = np.diff(mapped) / dt0
    tau_old = np.sum(dt0)
    tau_new = np.sum((1.0 / secant) * np.diff(mapped))
    disc_dev = abs(tau_new - tau_old) / tau_old

    # continuous proper time over the new clock u = F(t0)
    a, b = tm.t0[0], tm.t0[-1]

    def inverse(u):
        return optimize.brentq(lambda t: float(tm.F(t)) - u, a - 1e-9 * (b - a), b + 1e-9 * (b - a),
                               xtol=1e-15, rtol=4 * np.finfo(float).eps)

    def integrand(u):
        return 1.0 / float(tm.derivative(inverse(u)))

    tau_cont, _ = integrate.quad(integrand, float(mapped[0]), float(mapped[-1]),
                                 epsabs=0.0, epsrel=1e-13, limit=200)
    cont_dev = abs(tau_cont - (b - a)) / (b - a)

    return InvarianceReport(
        vc_dt0_rel_dev=vc_dev,
        proper_time_rel_dev=cont_dev,
        proper_time_discrete_rel_dev=disc_dev,
        verdict_before=base_op.broken,
        verdict_after=verdicts,
        lapse_change=change,
        fractions_unchanged=pair.fractions == r_before,
        tol=tol,
        details={"v_c": base_vc, "order_parameter": base_op.as_dict(),
                 "proper_time_per_unit_lapse": tau_old},
    )


# -- lapse fluctuations ---------------------------------------------------------

@dataclass
class LapseDecomposition:
    mean: float
    fluctuations: np.ndarray
    variance: float

    @property
    def relative_variance(self) -> float:
        """``Var(N) / <N>^2`` (dimensionless)."""
        return self.variance / self.mean**2


def decompose_lapse(samples) -> LapseDecomposition:
    """Split lapse samples into their mean and zero-mean fluctuations (ddof = 0)."""
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size < 2:
        raise InvalidInputError("need at least two lapse samples")
    mean = math.fsum(samples) / samples.size
    fluct = samples - mean
    var = math.fsum(fluct**2) / samples.size
    return LapseDecomposition(mean, fluct, var)


def sample_lapse(pair: GroundStatePair, count: int, rng) -> np.ndarray:
    """Draw lapse values from the fraction-weighted mixture of the component weights."""
    r1, _ = pair.fractions
    first = rng.random(count) < r1
    out = np.empty(count)
    out[first] = pair.phi[0].sample(rng, int(first.sum()))
    out[~first] = pair.phi[1].sample(rng, int((~first).sum()))
    return out


def mixture_relative_variance(pair: GroundStatePair) -> float:
    """Analytic ``Var(N) / <N>^2`` of the lapse mixture."""
    r = pair.fractions
    mean = sum(ri * p.mean for ri, p in zip(r, pair.phi))
    second = sum(ri * (p.variance + p.mean**2) for ri, p in zip(r, pair.phi))
    return (second - mean**2) / mean**2


@dataclass(frozen=True)
class ProperTimeStats:
    mean_dt: float
    variance: float
    sigma: float

    def as_dict(self):
        return asdict(self)


def proper_time_stats(decomp: LapseDecomposition, dt0: float) -> ProperTimeStats:
    """Statistics of increments ``N dt0``; ``sigma = Var(dt) / mean(dt)`` has time units."""
    if not dt0 > 0:
        raise InvalidInputError("dt0 must be positive")
    mean = decomp.mean * dt0
    var = decomp.variance * dt0**2
    return ProperTimeStats(mean, var, var / mean)


# -- field CSV -----------------------------------------------------------------

FIELD_HEADER = ["x1", "x2", "x3", "value"]


def write_field(path, grid: Grid, values):
    values = grid.check(values)
    pts = grid.points()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FIELD_HEADER)
        for p, v in zip(pts, values.ravel()):
            w.writerow(["%.17g" % c for c in (*p, v)])


def read_field(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != FIELD_HEADER:
        raise InvalidInputError(f"{path}: expected header {','.join(FIELD_HEADER)}")
    data = np.array([[float(v) for v in r] for r in rows[1:] if r])
    axes = tuple(np.unique(data[:, k]) for k in range(3))
    grid = Grid(axes)
    if data.shape[0] != np.prod(grid.shape):
        raise InvalidInputError(f"{path}: points do not form a full tensor grid")
    values = np.empty(grid.shape)
    idx = tuple(np.searchsorted(a, data[:, k]) for k, a in enumerate(axes))
    values[idx] = data[:, 3]
    return grid, values
