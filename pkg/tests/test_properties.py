"""Randomised invariants checked with hypothesis."""

import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from trps_lab import geometry as geo
from trps_lab import qdynamics as Q
from trps_lab import trps as T

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
amplitude = st.builds(complex, finite, finite)
seeds = st.integers(0, 2**32 - 1)


@given(amplitude, amplitude, st.floats(0, 2 * math.pi), st.floats(0.1, 10))
def test_spinor_phase_invariance_and_shift_length(a0, a1, phase, c):
    lam = np.array([a0, a1])
    rot = np.exp(1j * phase) * lam
    n = geo.lapse_of(lam)
    assert n >= 0
    scale = max(n, 1e-300)
    assert abs(geo.lapse_of(rot) - n) <= 1e-12 * scale
    np.testing.assert_allclose(geo.shift_of(rot, c), geo.shift_of(lam, c), atol=1e-12 * c * scale)
    assert abs(math.hypot(*geo.shift_of(lam, c)) - math.sqrt(2) * c * n) <= 1e-12 * c * scale


@given(arrays(float, st.tuples(st.integers(1, 40), st.just(3)), elements=st.floats(-1, 1)), seeds)
def test_magnetization_bounded_by_one_for_unit_spins(raw, seed):
    norms = np.linalg.norm(raw, axis=1)
    spins = np.where(norms[:, None] > 1e-6, raw / np.maximum(norms, 1e-6)[:, None], [0, 0, 1])
    w = np.random.default_rng(seed).random(len(spins)) + 1e-3
    m = geo.magnetization(spins, w / w.sum())
    assert m.modulus <= 1 + 1e-12


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0.2, 0.8), st.floats(0.5, 1.5), st.floats(0, 0.9))
def test_component_lapse_identity(frac, w1, w2, depth):
    grid = T.Grid.cube(2.0, 8)
    x, y, z = grid.mesh()
    r2 = x**2 + y**2 + z**2

    def g(w):
        rho = np.exp(-r2 / (2 * w * w))
        return rho / grid.integrate(rho)

    pair = T.GroundStatePair(grid, frac * g(w1), (1 - frac) * g(w2))
    n = 1 - depth * np.exp(-r2)
    comp = T.component_lapse(pair, n)
    r1, r2_ = pair.fractions
    np.testing.assert_allclose(r1 * comp.n1 + r2_ * comp.n2, n, rtol=1e-12)
    op = T.order_parameter(pair, n)
    assert abs(op.invariant_combo - grid.integrate(pair.rho0 * n)) <= 1e-12 * op.invariant_combo


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 10), seeds, st.floats(0, 2), st.floats(0.01, 5), st.floats(0.01, 5))
def test_semigroup_contraction(dim, seed, sigma, t1, t2):
    H = Q.HermitianOperator.random(dim, np.random.default_rng(seed))
    rep = Q.semigroup_check(H, Q.IncrementLaw(1.0, sigma), t1, t2)
    assert rep.passed, rep


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 6), seeds, st.floats(0, 1), st.floats(0, 20), st.integers(1, 300))
def test_mc_density_is_valid(dim, seed, sigma, t, M):
    rng = np.random.default_rng(seed)
    H = Q.HermitianOperator.random(dim, rng)
    psi = Q.normalized(rng.standard_normal(dim) + 1j * rng.standard_normal(dim))
    rho = Q.evolve_mc(psi, t, H, Q.IncrementLaw(1.0, sigma), M, seed)
    assert abs(np.trace(rho).real - 1) < 1e-15
    Q.check_density(rho)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 6), seeds)
def test_feedback_preserves_inner_products(dim, seed):
    rng = np.random.default_rng(seed)
    a, b = (Q.normalized(rng.standard_normal(dim) + 1j * rng.standard_normal(dim)) for _ in range(2))
    fa, fb = Q.energy_feedback(a), Q.energy_feedback(b)
    assert abs(np.vdot(fa.state, fb.state) - np.vdot(a, b)) < 1e-12
