"""Sen-spinor lapse/shift geometry, spin magnetization and coherence domains.

Spinor conventions
------------------
A space spinor is a pair of complex amplitudes ``(a0, a1)`` with the positive
inner product ``(l, e) = conj(l0) e0 + conj(l1) e1``.  Symmetric spinor index
pairs are mapped to Euclidean 3-vectors through the standard Pauli matrices::

    sigma1 = [[0, 1], [1, 0]]
    sigma2 = [[0, -i], [i, 0]]
    sigma3 = [[1, 0], [0, -1]]

so the shift is ``c * (l^H sigma_k l)_{k=1..3}``.  With this map the shift
modulus is ``c * (|a0|^2 + |a1|^2) = sqrt(2) * c * lapse``.

Spatial vectors are stored with Euclidean components; energies built from
them carry an explicit sign so that aligned configurations are minima.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

PAULI = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)

SHIFT_MODULUS_FACTOR = np.sqrt(2.0)


@dataclass(frozen=True)
class SpaceSpinor:
    """Dimensionless two-component complex spinor."""

    a0: complex
    a1: complex

    def __post_init__(self):
        for amp in (self.a0, self.a1):
            if not np.isfinite(complex(amp)):
                raise InvalidInputError(f"non-finite spinor amplitude {amp!r}")

    @classmethod
    def from_array(cls, arr) -> "SpaceSpinor":
        arr = np.asarray(arr, dtype=complex).ravel()
        if arr.shape != (2,):
            raise InvalidInputError("a space spinor has exactly two components")
        return cls(complex(arr[0]), complex(arr[1]))

    def as_array(self) -> np.ndarray:
        return np.array([self.a0, self.a1], dtype=complex)

    @property
    def norm2(self) -> float:
        return abs(self.a0) ** 2 + abs(self.a1) ** 2

    @property
    def is_degenerate(self) -> bool:
        """True for the zero spinor, which carries no time lapse."""
        return self.norm2 == 0.0


@dataclass(frozen=True)
class LapseShift:
    lapse: float
    shift: np.ndarray

    @property
    def no_time_lapse(self) -> bool:
        return self.lapse == 0.0


def _amplitudes(spinor) -> np.ndarray:
    if isinstance(spinor, SpaceSpinor):
        return spinor.as_array()
    arr = np.asarray(spinor, dtype=complex)
    if arr.shape[-1] != 2:
        raise InvalidInputError("spinor arrays must have a trailing axis of length 2")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("non-finite spinor amplitudes")
    return arr


def lapse_of(spinor):
    """Lapse ``(|a0|^2 + |a1|^2) / sqrt(2)``.

    Accepts a :class:`SpaceSpinor` or an array whose last axis holds the two
    amplitudes (vectorised over the leading axes).
    """
    amp = _amplitudes(spinor)
    n = (amp.real**2 + amp.imag**2).sum(axis=-1) / np.sqrt(2.0)
    return float(n) if n.ndim == 0 else n


def shift_of(spinor, c: float = 1.0) -> np.ndarray:
    """Shift vector ``c * (l^H sigma_k l)`` for k = 1, 2, 3.

    Parameters
    ----------
    spinor : SpaceSpinor or array_like, shape (..., 2)
    c : float
        Speed scale, must be positive.

    Returns
    -------
    numpy.ndarray, shape (..., 3)
    """
    if not c > 0:
        raise InvalidInputError(f"speed scale must be positive, got {c}")
    amp = _amplitudes(spinor)
    a0, a1 = amp[..., 0], amp[..., 1]
    cross = np.conj(a0) * a1
    # closed forms of l^H sigma_k l
    out = np.stack(
        [2.0 * cross.real, 2.0 * cross.imag, abs(a0) ** 2 - abs(a1) ** 2], axis=-1
    )
    return c * out


def lapse_shift(spinor, c: float = 1.0) -> LapseShift:
    return LapseShift(lapse_of(spinor), shift_of(spinor, c))


@dataclass(frozen=True)
class Magnetization:
    modulus: float
    direction: np.ndarray | None
    mean: np.ndarray


def magnetization(spins, weights=None) -> Magnetization:
    """Modulus and direction of the weighted mean spin vector.

    ``weights`` default to uniform; otherwise they must be non-negative, sum
    to one and match ``spins`` in length.  ``direction`` is None when the mean
    vanishes.
    """
    spins = np.asarray(spins, dtype=float)
    if spins.ndim != 2 or spins.shape[1] != 3:
        raise InvalidInputError("spins must have shape (n, 3)")
    n = spins.shape[0]
    if n == 0:
        raise InvalidInputError("magnetization of an empty spin set")
    if weights is None:
        weights = np.full(n, 1.0 / n)
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (n,):
        raise InvalidInputError(f"{weights.shape[0] if weights.ndim else 0} weights for {n} spins")
    if np.any(weights < 0):
        raise InvalidInputError("weights must be non-negative")
    if not np.isclose(weights.sum(), 1.0, rtol=0, atol=1e-9):
        raise InvalidInputError(f"weights sum to {weights.sum()}, not 1")
    mean = weights @ spins
    modulus = float(np.linalg.norm(mean))
    direction = mean / modulus if modulus > 0 else None
    return Magnetization(modulus, direction, mean)


@dataclass
class CoherenceSpec:
    """Discretised coherence-domain data.

    The domain is represented by quadrature nodes.  ``masses`` are the
    products of the one-particle density with the quadrature weights, so they
    must sum to one; ``dx`` holds the position-uncertainty vector at each
    node.

    Use :meth:`on_grid` to build the masses from a density on a tensor grid
    with trapezoidal weights.
    """

    lengths: np.ndarray
    masses: np.ndarray
    dx: np.ndarray
    direction: np.ndarray
    sigma: float
    dt0: float = 1.0
    norm_tol: float = 1e-6
    points: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.lengths = np.asarray(self.lengths, dtype=float).reshape(3)
        self.masses = np.asarray(self.masses, dtype=float).ravel()
        self.dx = np.asarray(self.dx, dtype=float).reshape(-1, 3)
        self.direction = np.asarray(self.direction, dtype=float).reshape(3)
        problems = self.violations()
        if problems:
            raise InvalidInputError("; ".join(problems))

    def violations(self) -> list[str]:
        out = []
        if self.dx.shape[0] != self.masses.shape[0]:
            out.append("dx field and density have different node counts")
        if np.any(self.masses < 0):
            out.append("negative probability mass")
        total = self.masses.sum()
        if abs(total - 1.0) > self.norm_tol:
            out.append(f"probability density integrates to {total:.12g}, not 1")
        if abs(np.linalg.norm(self.direction) - 1.0) > 1e-9:
            out.append("direction n must be a unit vector")
        if not self.sigma > 0:
            out.append(f"sigma must be positive, got {self.sigma}")
        if not self.dt0 > 0:
            out.append(f"dt0 must be positive, got {self.dt0}")
        if not np.all(np.isfinite(self.dx)):
            out.append("non-finite uncertainty field")
        return out

    @classmethod
    def on_grid(cls, axes, density, dx, lengths, direction, sigma, dt0=1.0,
                normalize=False, norm_tol=1e-6):
        """Build a spec from callables on a tensor-product grid.

        Parameters
        ----------
        axes : sequence of three 1-D arrays
        density : callable ``(X1, X2, X3) -> array``
        dx : callable ``(X1, X2, X3) -> array (..., 3)`` or a constant 3-vector
        normalize : bool
            Rescale the quadrature masses to sum exactly to one.
        """
        axes = [np.asarray(a, dtype=float) for a in axes]
        grids = np.meshgrid(*axes, indexing="ij")
        w = _trapezoid_weights(axes[0])[:, None, None]
        w = w * _trapezoid_weights(axes[1])[None, :, None]
        w = w * _trapezoid_weights(axes[2])[None, None, :]
        masses = np.asarray(density(*grids), dtype=float) * w
        if normalize:
            masses = masses / masses.sum()
        if callable(dx):
            dx_field = np.asarray(dx(*grids), dtype=float).reshape(-1, 3)
        else:
            dx_field = np.broadcast_to(np.asarray(dx, dtype=float), masses.shape + (3,))
        pts = np.stack([g.ravel() for g in grids], axis=-1)
        return cls(lengths, masses.ravel(), dx_field.reshape(-1, 3), direction, sigma,
                   dt0, norm_tol, points=pts)


def _trapezoid_weights(x: np.ndarray) -> np.ndarray:
    if x.size == 1:
        return np.ones(1)
    h = np.diff(x)
    w = np.zeros_like(x)
    w[:-1] += h / 2
    w[1:] += h / 2
    return w


def rms_uncertainty(spec: CoherenceSpec) -> np.ndarray:
    """Per-axis density-weighted root mean square of the uncertainty field."""
    return np.sqrt(spec.masses @ spec.dx**2)


@dataclass(frozen=True)
class KappaResult:
    kappa: float
    rms_projected: float

    def shift_modulus(self, lapse) -> float:
        """Expected physical shift modulus ``kappa * N``."""
        return self.kappa * lapse


def kappa(spec: CoherenceSpec) -> KappaResult:
    """Ratio of the weighted rms of ``n . dx`` to sigma."""
    if not spec.sigma > 0:
        raise InvalidInputError("sigma must be positive")
    proj = spec.dx @ spec.direction
    rms = float(np.sqrt(spec.masses @ proj**2))
    return KappaResult(rms / spec.sigma, rms)


def coherence_criterion(spec: CoherenceSpec) -> np.ndarray:
    """Boolean per axis: domain length does not exceed the rms uncertainty."""
    return spec.lengths <= rms_uncertainty(spec)
