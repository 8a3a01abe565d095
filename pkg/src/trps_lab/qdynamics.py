"""Schrodinger evolution with Gaussian-fluctuating time increments.

A trajectory advances by a random elapsed time ``dT ~ Normal(t, sigma t)``
(the sum of iid increments of mean ``mu_t`` and variance ``sigma mu_t``).
Averaging ``U(dT)|psi><psi|U(dT)^H`` over trajectories damps the
energy-basis coherences as ``exp(-sigma t (E_m - E_n)^2 / (2 hbar^2))``;
averaging the state vector itself gives the contraction
``exp(-i t H / hbar - sigma t H^2 / (2 hbar^2))``.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

HERMITIAN_TOL = 1e-12
DEGENERACY_TOL = 1e-10
INFINITE_LIFETIME = float("inf")


class HermitianOperator:
    """Dense Hermitian matrix with a cached eigendecomposition."""

    def __init__(self, matrix, tol: float = HERMITIAN_TOL):
        m = np.array(matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InvalidInputError("operator must be a square matrix")
        scale = max(np.linalg.norm(m), 1.0)
        if np.linalg.norm(m - m.conj().T) > tol * scale:
            raise InvalidInputError("operator is not Hermitian")
        self.matrix = 0.5 * (m + m.conj().T)
        self.values, self.vectors = np.linalg.eigh(self.matrix)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def to_eigenbasis(self, psi):
        return self.vectors.conj().T @ psi

    def from_eigenbasis(self, c):
        return self.vectors @ c

    def function(self, values) -> np.ndarray:
        """Matrix ``V diag(values) V^H`` for a function tabulated on the spectrum."""
        return (self.vectors * values) @ self.vectors.conj().T

    @classmethod
    def random(cls, dim: int, rng, scale: float = 1.0) -> "HermitianOperator":
        a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
        return cls(scale * (a + a.conj().T) / 2)


def as_operator(H) -> HermitianOperator:
    return H if isinstance(H, HermitianOperator) else HermitianOperator(H)


@dataclass(frozen=True)
class Spectrum:
    """Distinct eigenvalues (ascending) and their orthogonal projectors."""

    values: np.ndarray
    projectors: np.ndarray
    multiplicities: np.ndarray

    def reconstruct(self, power: int = 1) -> np.ndarray:
        return np.einsum("k,kij->ij", self.values**power, self.projectors)


def spectral(H, degeneracy_tol: float = DEGENERACY_TOL) -> Spectrum:
    """Spectral family of a Hermitian operator, degenerate levels grouped."""
    op = as_operator(H)
    vals, vecs = op.values, op.vectors
    groups = [[0]]
    for k in range(1, vals.size):
        if vals[k] - vals[groups[-1][0]] <= degeneracy_tol * max(1.0, abs(vals[k])):
            groups[-1].append(k)
        else:
            groups.append([k])
    values = np.array([vals[g].mean() for g in groups])
    projectors = np.array([vecs[:, g] @ vecs[:, g].conj().T for g in groups])
    return Spectrum(values, projectors, np.array([len(g) for g in groups]))


def normalized(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return psi / np.linalg.norm(psi)


def check_state(psi, tol: float = 1e-12) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex).ravel()
    if abs(np.linalg.norm(psi) - 1.0) > tol:
        raise InvalidInputError("state vector is not normalised")
    return psi


def unitary_step(psi, dt: float, H, hbar: float = 1.0) -> np.ndarray:
    """``exp(-i dt H / hbar) psi``; ``dt`` may be negative."""
    op = as_operator(H)
    c = op.to_eigenbasis(np.asarray(psi, dtype=complex))
    return op.from_eigenbasis(np.exp(-1j * op.values * dt / hbar) * c)


def propagator(H, t: float, hbar: float = 1.0) -> np.ndarray:
    op = as_operator(H)
    return op.function(np.exp(-1j * op.values * t / hbar))


@dataclass(frozen=True)
class IncrementLaw:
    """Normal time-increment law: mean ``mu`` and variance ``sigma * mu``."""

    mu: float = 1.0
    sigma: float = 0.0
    hbar: float = 1.0

    def __post_init__(self):
        if not self.mu > 0:
            raise InvalidInputError(f"increment mean must be positive, got {self.mu}")
        if not self.sigma >= 0:
            raise InvalidInputError(f"sigma must be non-negative, got {self.sigma}")
        if not self.hbar > 0:
            raise InvalidInputError("hbar must be positive")

    def violations(self):
        out = []
        if not self.mu > 0:
            out.append("qdynamics.mu must be positive")
        if not self.sigma >= 0:
            out.append("qdynamics.sigma must be non-negative")
        return out

    def elapsed_sd(self, t: float) -> float:
        """Standard deviation of the total elapsed time after clock time ``t``."""
        return float(np.sqrt(self.sigma * t))


def damping(values, t: float, law: IncrementLaw) -> np.ndarray:
    """Eigenvalue factors ``exp(-i t l / hbar - sigma t l^2 / (2 hbar^2))``."""
    h = law.hbar
    return np.exp(-1j * t * values / h - law.sigma * t * values**2 / (2 * h * h))


def averaged_propagator(H, t: float, law: IncrementLaw) -> np.ndarray:
    op = as_operator(H)
    return op.function(damping(op.values, t, law))


def evolve_analytic_vector(psi0, t: float, H, law: IncrementLaw) -> np.ndarray:
    if t < 0:
        raise InvalidInputError("t must be non-negative")
    op = as_operator(H)
    c = op.to_eigenbasis(np.asarray(psi0, dtype=complex))
    return op.from_eigenbasis(damping(op.values, t, law) * c)


def coherence_factors(values, t: float, law: IncrementLaw) -> np.ndarray:
    """Matrix of ``exp(-i w t - sigma t w^2 / 2)`` with ``w = (l_m - l_n) / hbar``."""
    w = (values[:, None] - values[None, :]) / law.hbar
    return np.exp(-1j * w * t - 0.5 * law.sigma * t * w**2)


def evolve_analytic_density(rho0, t: float, H, law: IncrementLaw) -> np.ndarray:
    """Trajectory-averaged density matrix, returned in the original basis."""
    if t < 0:
        raise InvalidInputError("t must be non-negative")
    op = as_operator(H)
    rho0 = check_density(rho0)
    v = op.vectors
    r = v.conj().T @ rho0 @ v
    return v @ (r * coherence_factors(op.values, t, law)) @ v.conj().T


def density_of(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex).ravel()
    return np.outer(psi, psi.conj())


def check_density(rho, tol: float = 1e-10) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise InvalidInputError("density matrix must be square")
    if np.linalg.norm(rho - rho.conj().T) > tol:
        raise InvalidInputError("density matrix is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > tol:
        raise InvalidInputError("density matrix trace is not 1")
    if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() < -tol:
        raise InvalidInputError("density matrix is not positive semidefinite")
    return rho


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("TRPS_LAB_THREADS", "1")))
    except ValueError:
        return 1


def trajectory_normals(seed: int, count: int) -> np.ndarray:
    """One standard normal per trajectory, each from its own ``(seed, index)`` stream."""
    root = np.random.SeedSequence(seed)

    def draw(j):
        child = np.random.SeedSequence(root.entropy, spawn_key=(j,))
        return np.random.default_rng(child).standard_normal()

    if _threads() == 1:
        return np.array([draw(j) for j in range(count)])
    with ThreadPoolExecutor(_threads()) as pool:
        return np.array(list(pool.map(draw, range(count), chunksize=256)))


class MonteCarloEnsemble:
    """Fixed set of trajectories reused across evolution times.

    Trajectory ``j`` takes ``dT = t + sqrt(sigma t) z_j``; sharing ``z_j``
    between times keeps a decay curve smooth and deterministic.
    """

    def __init__(self, H, law: IncrementLaw, trajectories: int, seed: int):
        if trajectories < 1:
            raise InvalidInputError("need at least one trajectory")
        self.op = as_operator(H)
        self.law = law
        self.z = trajectory_normals(seed, trajectories)

    @property
    def size(self) -> int:
        return self.z.size

    def elapsed(self, t: float) -> np.ndarray:
        return t + self.law.elapsed_sd(t) * self.z

    def density(self, psi0, t: float) -> np.ndarray:
        if not t >= 0:
            raise InvalidInputError("t must be non-negative")
        op, h = self.op, self.law.hbar
        c = op.to_eigenbasis(np.asarray(psi0, dtype=complex))
        dT = self.elapsed(t)
        amp = c[:, None] * np.exp(-1j * op.values[:, None] * dT[None, :] / h)
        r = (amp @ amp.conj().T) / dT.size
        rho = op.vectors @ r @ op.vectors.conj().T
        rho = 0.5 * (rho + rho.conj().T)
        return rho / np.trace(rho).real


def evolve_mc(psi0, t: float, H, law: IncrementLaw, trajectories: int, seed: int) -> np.ndarray:
    """Monte-Carlo average of ``U(dT) |psi0><psi0| U(dT)^H`` over ``dT ~ N(t, sigma t)``."""
    psi0 = check_state(psi0)
    return MonteCarloEnsemble(H, law, trajectories, seed).density(psi0, t)


@dataclass(frozen=True)
class SemigroupReport:
    composition_error: float
    norms: dict
    identity_error: float
    tol: float

    @property
    def passed(self) -> bool:
        return (self.composition_error <= self.tol and self.identity_error <= self.tol
                and all(n <= 1 + self.tol for n in self.norms.values()))


def semigroup_check(H, law: IncrementLaw, t1: float, t2: float, tol: float = 1e-12) -> SemigroupReport:
    """Check ``G(t1) G(t2) = G(t1 + t2)``, ``G(0) = 1`` and ``||G(t)|| <= 1``."""
    if not (t1 > 0 and t2 > 0):
        raise InvalidInputError("t1 and t2 must be positive")
    op = as_operator(H)
    g1 = averaged_propagator(op, t1, law)
    g2 = averaged_propagator(op, t2, law)
    g12 = averaged_propagator(op, t1 + t2, law)
    comp = float(np.linalg.norm(g1 @ g2 - g12, 2))
    ident = float(np.linalg.norm(averaged_propagator(op, 0.0, law) - np.eye(op.dim), 2))
    norms = {t: float(np.linalg.norm(g, 2)) for t, g in ((t1, g1), (t2, g2), (t1 + t2, g12))}
    return SemigroupReport(comp, norms, ident, tol)


def lifetime(sigma: float, delta_e: float, hbar: float = 1.0) -> float:
    """Coherence lifetime ``2 hbar^2 / (sigma dE^2)``; infinite if either vanishes."""
    if sigma == 0 or delta_e == 0:
        return INFINITE_LIFETIME
    if sigma < 0:
        raise InvalidInputError("sigma must be non-negative")
    return 2 * hbar**2 / (sigma * delta_e**2)


def phase_distance(a, b) -> float:
    """``min_phi || a - exp(i phi) b ||``."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    overlap = np.vdot(b, a)
    phase = overlap / abs(overlap) if abs(overlap) > 0 else 1.0
    return float(np.linalg.norm(a - phase * b))


# -- event reading --------------------------------------------------------------

@dataclass(frozen=True)
class EventResult:
    event: bool
    outcome: int | None
    probability: float | None
    state: np.ndarray | None
    visibility: float
    width: float

    @property
    def verdict(self) -> str:
        return "event" if self.event else "coherent - no event"


def interference(rho, A):
    """Off-diagonal contribution to ``<A>`` and the spread ``sqrt(Var A)``.

    Both ``rho`` and ``A`` are given in the reading (energy) basis.
    """
    A = np.asarray(A, dtype=complex)
    full = np.trace(rho @ A)
    diag = np.sum(np.diag(rho) * np.diag(A))
    visibility = abs(full - diag)
    var = np.trace(rho @ A @ A).real - full.real**2
    return float(visibility), float(np.sqrt(max(var, 0.0)))


def _reading_frame(state, observables, H):
    arr = np.asarray(state, dtype=complex)
    rho = density_of(arr) / np.vdot(arr, arr).real if arr.ndim == 1 else arr
    obs = np.asarray(observables, dtype=complex)
    obs = obs[None] if obs.ndim == 2 else obs
    basis = None
    if H is not None:
        basis = as_operator(H).vectors
        rho = basis.conj().T @ rho @ basis
        obs = np.array([basis.conj().T @ a @ basis for a in obs])
    return arr, rho, obs, basis


def _gate(rho, obs, threshold, atol):
    """``(allowed, visibility, width)`` for the visibility test over all observables."""
    vis, width = 0.0, np.inf
    for a in obs:
        if np.linalg.norm(a - a.conj().T) > 1e-12 * max(1.0, np.linalg.norm(a)):
            raise InvalidInputError("observable is not Hermitian")
        v, w = interference(rho, a)
        if v > atol and not v < threshold * w:
            return False, v, w
        vis, width = max(vis, v), min(width, w)
    return True, vis, width


def _born_probabilities(rho):
    probs = np.clip(np.diag(rho).real, 0.0, None)
    return probs / probs.sum()


def event_read(state, observables, threshold: float = 1.0, rng=None, H=None,
               atol: float = 1e-12) -> EventResult:
    """Born-rule event reading once interference is below the uncertainty width.

    Parameters
    ----------
    state : array_like
        Averaged density matrix, or a (possibly sub-normalised) state vector.
    observables : array_like or sequence of array_like
        Hermitian observable(s), in the same basis as ``state``.  An event is
        permitted only if every observable passes the visibility test.
    threshold : float
        Event allowed when ``visibility < threshold * width``.
    rng : numpy.random.Generator
    H : HermitianOperator, optional
        Reading basis; defaults to the computational basis.

    Returns
    -------
    EventResult
        On an event, ``outcome`` indexes the reading-basis level and ``state``
        is the normalised projection of the state onto it.
    """
    rng = np.random.default_rng() if rng is None else rng
    arr, rho, obs, basis = _reading_frame(state, observables, H)
    allowed, vis, width = _gate(rho, obs, threshold, atol)
    if not allowed:
        return EventResult(False, None, None, None, vis, width)
    probs = _born_probabilities(rho)
    n = int(rng.choice(probs.size, p=probs))
    if arr.ndim == 1:
        c = arr if basis is None else basis.conj().T @ arr
        collapsed = np.zeros_like(c)
        collapsed[n] = c[n] / abs(c[n])
    else:
        collapsed = np.zeros(probs.size, dtype=complex)
        collapsed[n] = 1.0
    if basis is not None:
        collapsed = basis @ collapsed
    return EventResult(True, n, float(probs[n]), collapsed, vis, width)


def event_outcomes(state, observables, samples: int, threshold: float = 1.0, rng=None,
                   H=None, atol: float = 1e-12):
    """Outcome indices of ``samples`` independent readings of the same state.

    Equivalent to calling :func:`event_read` repeatedly, but the visibility
    test is applied once.  Returns ``None`` when the state is still coherent.
    """
    if samples < 1:
        raise InvalidInputError("samples must be positive")
    rng = np.random.default_rng() if rng is None else rng
    _, rho, obs, _ = _reading_frame(state, observables, H)
    allowed, _, _ = _gate(rho, obs, threshold, atol)
    if not allowed:
        return None
    probs = _born_probabilities(rho)
    return rng.choice(probs.size, size=samples, p=probs)


def born_frequencies(rho, samples: int, rng) -> np.ndarray:
    """Outcome frequencies of ``samples`` event readings of a decohered ``rho``."""
    probs = np.clip(np.diag(np.asarray(rho)).real, 0.0, None)
    counts = np.bincount(rng.choice(probs.size, size=samples, p=probs / probs.sum()),
                         minlength=probs.size)
    return counts / samples


# -- energy feedback -------------------------------------------------------------

@dataclass(frozen=True)
class FeedbackResult:
    unitary: np.ndarray
    state: np.ndarray
    reduced_energy: np.ndarray

    @property
    def dim(self) -> int:
        return self.reduced_energy.shape[0]


def feedback_unitary(dim: int) -> np.ndarray:
    """Controlled shift ``|O_n>|E_k> -> |O_n>|E_(k+n) mod d>`` on ``C^d x C^d``."""
    u = np.zeros((dim * dim, dim * dim))
    for n in range(dim):
        for k in range(dim):
            u[n * dim + (k + n) % dim, n * dim + k] = 1.0
    return u


def partial_trace_first(psi, dim: int) -> np.ndarray:
    """Reduced density matrix of the second factor of a ``d x d`` bipartite state."""
    m = np.asarray(psi, dtype=complex).reshape(dim, dim)
    return m.T @ m.conj()


def energy_feedback(coefficients, dim: int | None = None, tol: float = 1e-12) -> FeedbackResult:
    """Map ``sum_n c_n |O_n>|E_0>`` to ``sum_n c_n |O_n>|E_n>``."""
    c = np.asarray(coefficients, dtype=complex).ravel()
    dim = c.size if dim is None else dim
    if c.size > dim:
        raise InvalidInputError("more coefficients than register levels")
    if abs(np.vdot(c, c).real - 1.0) > tol:
        raise InvalidInputError("coefficients must be normalised")
    c = np.concatenate([c, np.zeros(dim - c.size, dtype=complex)])
    e0 = np.zeros(dim)
    e0[0] = 1.0
    u = feedback_unitary(dim)
    out = u @ np.kron(c, e0)
    return FeedbackResult(u, out, partial_trace_first(out, dim))
