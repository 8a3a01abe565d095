"""Particle containers, simulation settings and water-bag initial conditions."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..errors import InvalidInputError

UNIT_TOL = 1e-12


@dataclass(frozen=True)
class ThetaParticle:
    """A single theta particle: orbit, unit spin and mass."""

    x: np.ndarray
    p: np.ndarray
    s: np.ndarray
    m: float = 1.0

    def __post_init__(self):
        if not self.m > 0:
            raise InvalidInputError(f"mass must be positive, got {self.m}")
        if abs(np.linalg.norm(self.s) - 1.0) > UNIT_TOL:
            raise InvalidInputError("spin must be a unit vector")


class ParticleSet:
    """Structure-of-arrays view of a theta-particle system.

    Operations take and return whole sets; a :class:`ThetaParticle` is only
    materialised on indexing.  Arrays are owned by the set and callers should
    not mutate them while a step is in progress.
    """

    def __init__(self, x, p, s, m, ids=None):
        self.x = np.array(x, dtype=float, order="C").reshape(-1, 3)
        self.p = np.array(p, dtype=float, order="C").reshape(-1, 3)
        self.s = np.array(s, dtype=float, order="C").reshape(-1, 3)
        n = self.x.shape[0]
        self.m = np.broadcast_to(np.asarray(m, dtype=float), (n,)).copy()
        self.ids = np.arange(n) if ids is None else np.asarray(ids, dtype=np.int64).copy()
        if not (self.p.shape[0] == self.s.shape[0] == self.ids.shape[0] == n):
            raise InvalidInputError("particle arrays have inconsistent lengths")
        if np.any(self.m <= 0):
            raise InvalidInputError("all masses must be positive")
        if n and np.max(np.abs(np.linalg.norm(self.s, axis=1) - 1.0)) > UNIT_TOL:
            raise InvalidInputError("spins must be unit vectors")

    def __len__(self):
        return self.x.shape[0]

    def __getitem__(self, i) -> ThetaParticle:
        return ThetaParticle(self.x[i].copy(), self.p[i].copy(), self.s[i].copy(), float(self.m[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def __eq__(self, other):
        if not isinstance(other, ParticleSet):
            return NotImplemented
        return all(np.array_equal(a, b) for a, b in zip(self._arrays(), other._arrays()))

    def _arrays(self):
        return (self.x, self.p, self.s, self.m, self.ids)

    @classmethod
    def from_particles(cls, particles) -> "ParticleSet":
        particles = list(particles)
        if not particles:
            return cls(np.empty((0, 3)), np.empty((0, 3)), np.empty((0, 3)), np.empty(0))
        return cls(
            [q.x for q in particles],
            [q.p for q in particles],
            [q.s for q in particles],
            [q.m for q in particles],
        )

    def copy(self) -> "ParticleSet":
        return ParticleSet(self.x, self.p, self.s, self.m, self.ids)

    def subset(self, mask) -> "ParticleSet":
        return ParticleSet(self.x[mask], self.p[mask], self.s[mask], self.m[mask], self.ids[mask])

    def with_spins(self, s) -> "ParticleSet":
        return ParticleSet(self.x, self.p, s, self.m, self.ids)

    @property
    def velocities(self) -> np.ndarray:
        return self.p / self.m[:, None]

    def kinetic(self) -> np.ndarray:
        return (self.p**2).sum(axis=1) / (2.0 * self.m)


@dataclass(frozen=True)
class SimConfig:
    """Coupling constants and integration settings.

    ``g`` and ``g_c`` are the positive magnitudes of the (negative) spin-spin
    and Sen couplings.  ``cell_x``/``cell_p`` fix the 6-D coarse-graining cell.
    """

    g: float
    g_c: float
    softening: float
    dt: float
    nu: int
    seed: int = 0
    cell_x: float = 0.25
    cell_p: float = 0.25

    def violations(self) -> list[str]:
        out = []
        for name in ("g", "g_c", "softening", "dt", "cell_x", "cell_p"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                out.append(f"theta.{name} must be positive, got {value}")
        if self.nu < 2:
            out.append(f"theta.nu must be at least 2, got {self.nu}")
        return out

    def validate(self) -> "SimConfig":
        problems = self.violations()
        if problems:
            raise InvalidInputError("; ".join(problems))
        return self

    @classmethod
    def default(cls, nu: int, box_size: float = 2.0, **overrides) -> "SimConfig":
        # mean-field (Kac) scaling: unit masses, g = 1/nu keeps energy per particle O(1)
        base = cls(g=1.0 / nu, g_c=10.0, softening=0.05 * box_size, dt=0.02, nu=nu)
        return replace(base, **overrides)

    @property
    def a2(self) -> float:
        return self.softening**2


def dynamical_time(radius: float, nu: int, g: float, mass: float = 1.0) -> float:
    """Crossing time ``sqrt(R^3 / (g nu / m))`` of a system of size ``radius``.

    For aligned spins the pair force is that of gravity with ``G m^2 = g``,
    so ``g nu / m`` plays the role of ``G M``.
    """
    return float(np.sqrt(radius**3 * mass / (g * nu)))


@dataclass(frozen=True)
class PhaseBox:
    """Axis-aligned box in (x, p) space."""

    x_lo: np.ndarray
    x_hi: np.ndarray
    p_lo: np.ndarray
    p_hi: np.ndarray

    @classmethod
    def symmetric(cls, x_half, p_half) -> "PhaseBox":
        xh = np.broadcast_to(np.asarray(x_half, dtype=float), (3,))
        ph = np.broadcast_to(np.asarray(p_half, dtype=float), (3,))
        return cls(-xh, xh.copy(), -ph, ph.copy())

    @property
    def volume(self) -> float:
        return float(np.prod(np.asarray(self.x_hi) - self.x_lo) * np.prod(np.asarray(self.p_hi) - self.p_lo))

    @property
    def size(self) -> float:
        """Largest spatial edge length."""
        return float(np.max(np.asarray(self.x_hi) - self.x_lo))


def init_waterbag(region: PhaseBox, nu: int, spin_dir=(0.0, 0.0, 1.0), seed: int = 0,
                  mass: float = 1.0, eta_level: float | None = None) -> ParticleSet:
    """Sample ``nu`` particles uniformly in a phase-space box, spins aligned.

    The single fine-grained level is ``nu * mass / volume``; passing
    ``eta_level`` instead fixes the level and derives the particle mass.
    """
    if nu < 1:
        raise InvalidInputError("need at least one particle")
    if not region.volume > 0:
        raise InvalidInputError("phase-space box has no volume")
    spin = np.asarray(spin_dir, dtype=float)
    norm = np.linalg.norm(spin)
    if norm == 0 or not np.isfinite(norm):
        raise InvalidInputError("spin direction must be a nonzero finite vector")
    spin = spin / norm
    if eta_level is not None:
        if not eta_level > 0:
            raise InvalidInputError("eta_level must be positive")
        mass = eta_level * region.volume / nu
    rng = np.random.default_rng(seed)
    x = rng.uniform(region.x_lo, region.x_hi, size=(nu, 3))
    p = rng.uniform(region.p_lo, region.p_hi, size=(nu, 3))
    s = np.tile(spin, (nu, 1))
    return ParticleSet(x, p, s, mass)


def waterbag_level(region: PhaseBox, particles: ParticleSet) -> float:
    """Fine-grained phase-space level (particles per unit volume)."""
    return len(particles) / region.volume
