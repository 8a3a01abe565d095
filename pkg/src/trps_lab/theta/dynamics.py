"""Softened long-range spin dynamics, Sen coupling and spin relaxation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInputError
from . import kernels
from .particles import ParticleSet, SimConfig

UNDEFINED = float("nan")


def potential_energy(particles: ParticleSet, cfg: SimConfig) -> float:
    """``-g sum_{i<j} (s_i . s_j) / sqrt(r_ij^2 + a^2)``."""
    if len(particles) < 2:
        return 0.0
    return 0.5 * float(kernels.potentials(particles.x, particles.s, cfg.g, cfg.a2).sum())


def total_energy(particles: ParticleSet, cfg: SimConfig) -> float:
    if len(particles) == 0:
        raise InvalidInputError("energy of an empty system")
    return float(particles.kinetic().sum()) + potential_energy(particles, cfg)


def forces(particles: ParticleSet, cfg: SimConfig) -> np.ndarray:
    return kernels.forces(particles.x, particles.s, cfg.g, cfg.a2)


class Leapfrog:
    """Kick-drift-kick integrator that caches the force between steps.

    A negative ``dt`` integrates backwards in time exactly (up to rounding),
    which is how reversibility is exercised.
    """

    def __init__(self, particles: ParticleSet, cfg: SimConfig, dt: float | None = None):
        self.particles = particles.copy()
        self.cfg = cfg
        self.dt = cfg.dt if dt is None else dt
        self._f = forces(self.particles, cfg)

    def step(self, n: int = 1) -> ParticleSet:
        ps, dt, cfg = self.particles, self.dt, self.cfg
        inv_m = 1.0 / ps.m[:, None]
        for _ in range(n):
            ps.p += 0.5 * dt * self._f
            ps.x += dt * ps.p * inv_m
            self._f = kernels.forces(ps.x, ps.s, cfg.g, cfg.a2)
            ps.p += 0.5 * dt * self._f
        return ps

    def reverse(self):
        self.dt = -self.dt


def step_leapfrog(particles: ParticleSet, cfg: SimConfig, dt: float | None = None) -> ParticleSet:
    """One kick-drift-kick step; returns a new set, spins untouched."""
    return Leapfrog(particles, cfg, dt).step()


# -- Sen coupling --------------------------------------------------------------

def field_at(nphys_field, x: np.ndarray) -> np.ndarray:
    """Evaluate a physical-shift field at positions ``x`` (shape (n, 3)).

    ``nphys_field`` is a constant 3-vector, an (n, 3) array of per-particle
    values, or a callable mapping (n, 3) positions to (n, 3) vectors.
    """
    n = x.shape[0]
    try:
        if callable(nphys_field):
            values = np.asarray(nphys_field(x), dtype=float)
        else:
            values = np.asarray(nphys_field, dtype=float)
        values = np.broadcast_to(values, (n, 3))
    except (TypeError, ValueError) as exc:
        raise InvalidInputError(f"shift field lookup failed: {exc}") from exc
    if not np.all(np.isfinite(values)):
        raise InvalidInputError("shift field is not finite at every particle")
    return values


def coupling_energy(particles: ParticleSet, nphys_field, cfg: SimConfig) -> float:
    """``-g_c sum_i s_i . N_phys(x_i)``."""
    field = field_at(nphys_field, particles.x)
    return float(-cfg.g_c * np.einsum("ij,ij->", particles.s, field))


def _relax_once(s, field, rate):
    norm = np.linalg.norm(field, axis=1)
    live = norm > 0
    unit = np.zeros_like(field)
    unit[live] = field[live] / norm[live, None]
    c = np.einsum("ij,ij->i", s, unit)
    tangent = unit - c[:, None] * s
    # antialigned spins sit on an unstable fixed point: push them off it
    stuck = live & (np.linalg.norm(tangent, axis=1) < 1e-12) & (c < 0)
    if np.any(stuck):
        tangent[stuck] = _perpendicular(s[stuck])
    new = s + rate * tangent
    new /= np.linalg.norm(new, axis=1)[:, None]
    new[~live] = s[~live]
    return new


def _perpendicular(v):
    # deterministic unit vector orthogonal to each row of v
    helper = np.where(np.abs(v[:, [0]]) < 0.9, [[1.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]])
    out = np.cross(v, helper)
    return out / np.linalg.norm(out, axis=1)[:, None]


def iter_spin_relax(particles: ParticleSet, nphys_field, rate: float, steps: int):
    """Yield the particle set after each over-damped alignment step.

    Each spin moves along the tangent-plane projection of the local field
    direction by ``rate`` and is renormalised, which never lowers its
    alignment cosine.  Sites where the field vanishes are left untouched.
    """
    if not 0 < rate <= 1:
        raise InvalidInputError(f"rate must be in (0, 1], got {rate}")
    field = field_at(nphys_field, particles.x)
    s = particles.s.copy()
    for _ in range(steps):
        s = _relax_once(s, field, rate)
        yield particles.with_spins(s)


def spin_relax(particles: ParticleSet, nphys_field, rate: float, steps: int) -> ParticleSet:
    out = particles.copy()
    for out in iter_spin_relax(particles, nphys_field, rate, steps):
        pass
    return out


def alignment_cosine(particles: ParticleSet, nphys_field) -> np.ndarray:
    field = field_at(nphys_field, particles.x)
    norm = np.linalg.norm(field, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.einsum("ij,ij->i", particles.s, field) / norm


# -- one-particle energies and evaporation --------------------------------------

def one_particle_energies(particles: ParticleSet, cfg: SimConfig) -> np.ndarray:
    """Kinetic plus mean-field potential energy of every particle."""
    kin = particles.kinetic()
    if len(particles) < 2:
        return kin
    return kin + kernels.potentials(particles.x, particles.s, cfg.g, cfg.a2)


def one_particle_energy(index: int, particles: ParticleSet, cfg: SimConfig) -> float:
    if not 0 <= index < len(particles):
        raise InvalidInputError(f"particle {index} is not part of the system")
    others = np.arange(len(particles)) != index
    phi = kernels.potential_at(particles.x[others], particles.s[others], cfg.g, cfg.a2,
                               particles.x[index], particles.s[index])
    return float(particles.kinetic()[index] + phi)


def centre_of_mass(particles: ParticleSet):
    m = particles.m
    xc = (m @ particles.x) / m.sum()
    vc = particles.p.sum(axis=0) / m.sum()
    return xc, vc


def evaporated_mask(particles: ParticleSet, cfg: SimConfig) -> np.ndarray:
    """Unbound particles moving away from the centre of mass."""
    eps = one_particle_energies(particles, cfg)
    xc, vc = centre_of_mass(particles)
    radial = np.einsum("ij,ij->i", particles.x - xc, particles.velocities - vc)
    return (eps > 0) & (radial > 0)


def exclude_evaporated(particles: ParticleSet, cfg: SimConfig):
    """Split into ``(bound, evaporated)`` particle sets."""
    gone = evaporated_mask(particles, cfg)
    return particles.subset(~gone), particles.subset(gone)


# -- diagnostics ---------------------------------------------------------------

@dataclass(frozen=True)
class Diagnostics:
    total_energy: float
    kinetic: float
    potential: float
    virial_ratio: float
    core_radius: float
    halo_radius: float
    n_bound: int

    def as_dict(self):
        return dict(self.__dict__)


def enclosing_radius(particles: ParticleSet, fraction: float) -> float:
    if len(particles) == 0:
        return UNDEFINED
    xc, _ = centre_of_mass(particles)
    r = np.linalg.norm(particles.x - xc, axis=1)
    order = np.argsort(r, kind="stable")
    cum = np.cumsum(particles.m[order]) / particles.m.sum()
    k = int(np.searchsorted(cum, fraction - 1e-12))
    return float(r[order][min(k, len(r) - 1)])


def diagnostics(particles: ParticleSet, cfg: SimConfig) -> Diagnostics:
    """Energy budget, virial ratio ``2K/|W|`` and core/halo radii of the bound part.

    The virial ratio is NaN when the potential energy vanishes.
    """
    kin = float(particles.kinetic().sum())
    pot = potential_energy(particles, cfg)
    ratio = 2.0 * kin / abs(pot) if pot != 0 else UNDEFINED
    bound, _ = exclude_evaporated(particles, cfg) if len(particles) else (particles, None)
    return Diagnostics(
        total_energy=kin + pot,
        kinetic=kin,
        potential=pot,
        virial_ratio=ratio,
        core_radius=enclosing_radius(bound, 0.5),
        halo_radius=enclosing_radius(bound, 0.9),
        n_bound=len(bound),
    )
