import numpy as np
import pytest
from dataclasses import replace
from scipy import stats

from trps_lab.errors import InvalidInputError
from trps_lab.theta import dynamics as dyn
from trps_lab.theta import kernels
from trps_lab.theta.particles import (
    ParticleSet, PhaseBox, SimConfig, ThetaParticle, dynamical_time, init_waterbag, waterbag_level,
)


def brute_potential(x, s, g, a2):
    total = 0.0
    for i in range(len(x)):
        for j in range(i + 1, len(x)):
            r2 = sum((x[i][k] - x[j][k]) ** 2 for k in range(3))
            total -= g * sum(s[i][k] * s[j][k] for k in range(3)) / np.sqrt(r2 + a2)
    return total


def brute_phi(x, s, g, a2, i):
    out = 0.0
    for j in range(len(x)):
        if j != i:
            r2 = sum((x[i][k] - x[j][k]) ** 2 for k in range(3))
            out -= g * sum(s[i][k] * s[j][k] for k in range(3)) / np.sqrt(r2 + a2)
    return out


def random_set(rng, n, spread=1.0, spins="random"):
    x = rng.uniform(-spread, spread, (n, 3))
    p = rng.normal(0, 0.3, (n, 3))
    if spins == "random":
        s = rng.normal(size=(n, 3))
        s /= np.linalg.norm(s, axis=1)[:, None]
    else:
        s = np.tile([0, 0, 1.0], (n, 1))
    return ParticleSet(x, p, s, 1.0)


def pair(r, aligned=True, p=(0, 0, 0)):
    s2 = [0, 0, 1.0] if aligned else [0, 0, -1.0]
    return ParticleSet([[0, 0, 0], [r, 0, 0]], [[0, 0, 0], p], [[0, 0, 1.0], s2], 1.0)


CFG = SimConfig(g=1.0, g_c=1.0, softening=1e-3, dt=0.01, nu=2)


class TestContainers:
    def test_spin_must_be_unit(self):
        with pytest.raises(InvalidInputError):
            ThetaParticle(np.zeros(3), np.zeros(3), np.array([0, 0, 1.1]))
        with pytest.raises(InvalidInputError):
            ParticleSet(np.zeros((1, 3)), np.zeros((1, 3)), [[1.0, 1.0, 0]], 1.0)

    def test_mass_positive(self):
        with pytest.raises(InvalidInputError):
            ThetaParticle(np.zeros(3), np.zeros(3), np.array([0, 0, 1.0]), m=0.0)

    def test_round_trip_through_particles(self, rng):
        ps = random_set(rng, 5)
        assert ParticleSet.from_particles(list(ps)) == ps

    def test_config_violations(self):
        bad = SimConfig(g=-1, g_c=0, softening=0.1, dt=0.01, nu=1)
        problems = bad.violations()
        assert len(problems) == 3
        with pytest.raises(InvalidInputError):
            bad.validate()
        assert SimConfig.default(100).violations() == []

    def test_default_units(self):
        cfg = SimConfig.default(4096)
        assert cfg.g == 1 / 4096 and cfg.softening == pytest.approx(0.1)
        assert dynamical_time(1.0, 4096, cfg.g) == pytest.approx(1.0)


class TestWaterbag:
    def test_uniform_x_marginal(self):
        box = PhaseBox.symmetric(1.0, 0.1)
        ps = init_waterbag(box, 1000, seed=5)
        for k in range(3):
            res = stats.kstest(ps.x[:, k], stats.uniform(-1, 2).cdf)
            assert res.statistic < 1.63 / np.sqrt(1000)  # 1% critical value
        assert np.all(np.abs(ps.p) <= 0.1)

    def test_spins_and_determinism(self):
        box = PhaseBox.symmetric(1.0, 0.5)
        a = init_waterbag(box, 50, spin_dir=(0, 0, 1), seed=3)
        b = init_waterbag(box, 50, spin_dir=(0, 0, 1), seed=3)
        assert np.all(a.s == [0, 0, 1.0])
        assert a == b
        assert not a == init_waterbag(box, 50, seed=4)

    def test_level(self):
        box = PhaseBox.symmetric(1.0, 0.5)
        ps = init_waterbag(box, 64, seed=0)
        assert waterbag_level(box, ps) == pytest.approx(64 / box.volume)
        heavy = init_waterbag(box, 64, seed=0, eta_level=2.0)
        assert heavy.m[0] == pytest.approx(2.0 * box.volume / 64)

    def test_rejects_empty_box(self):
        with pytest.raises(InvalidInputError):
            init_waterbag(PhaseBox.symmetric(0.0, 1.0), 10)


class TestKernels:
    def test_backends_agree(self, rng):
        ps = random_set(rng, 300)
        if "compiled" not in kernels.available():
            pytest.skip("compiled extension not built")
        out = {}
        for name in ("compiled", "python"):
            kernels.use(name)
            try:
                out[name] = (kernels.forces(ps.x, ps.s, 0.3, 0.01),
                             kernels.potentials(ps.x, ps.s, 0.3, 0.01))
            finally:
                kernels.use(kernels._initial())
        for a, b in zip(out["compiled"], out["python"]):
            np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-13)

    @pytest.mark.parametrize("name", kernels.available())
    def test_forces_are_minus_gradient(self, rng, name):
        ps = random_set(rng, 8)
        kernels.use(name)
        try:
            f = kernels.forces(ps.x, ps.s, 0.7, 0.04)
            h = 1e-6
            for i in range(8):
                for k in range(3):
                    xp, xm = ps.x.copy(), ps.x.copy()
                    xp[i, k] += h
                    xm[i, k] -= h
                    up = 0.5 * kernels.potentials(xp, ps.s, 0.7, 0.04).sum()
                    um = 0.5 * kernels.potentials(xm, ps.s, 0.7, 0.04).sum()
                    assert f[i, k] == pytest.approx(-(up - um) / (2 * h), rel=1e-6, abs=1e-8)
        finally:
            kernels.use(kernels._initial())

    def test_bad_backend(self):
        with pytest.raises(ValueError):
            kernels.use("fortran")


class TestEnergy:
    def test_pair_closed_form(self):
        r = 10.0
        assert dyn.total_energy(pair(r), CFG) == pytest.approx(-1 / np.sqrt(r * r + 1e-6), rel=1e-14)
        assert dyn.total_energy(pair(r, aligned=False), CFG) == pytest.approx(1 / np.sqrt(r * r + 1e-6))

    def test_matches_brute_force(self, rng):
        ps = random_set(rng, 50)
        cfg = SimConfig(g=0.37, g_c=1.0, softening=0.1, dt=0.01, nu=50)
        expected = brute_potential(ps.x.tolist(), ps.s.tolist(), 0.37, 0.01) + \
            sum(sum(v * v for v in row) / 2 for row in ps.p.tolist())
        assert dyn.total_energy(ps, cfg) == pytest.approx(expected, rel=1e-12)

    def test_empty_rejected(self):
        empty = ParticleSet(np.empty((0, 3)), np.empty((0, 3)), np.empty((0, 3)), np.empty(0))
        with pytest.raises(InvalidInputError):
            dyn.total_energy(empty, CFG)

    def test_galilean_invariance_of_potential(self, rng):
        ps = random_set(rng, 40)
        moved = ParticleSet(ps.x + [3.0, -1.0, 0.5], ps.p, ps.s, ps.m)
        cfg = SimConfig.default(40)
        assert dyn.potential_energy(moved, cfg) == pytest.approx(dyn.potential_energy(ps, cfg),
                                                                rel=1e-12)


class TestLeapfrog:
    def test_free_particle(self):
        cfg = replace(CFG, g=0.0)
        ps = ParticleSet([[0, 0, 0], [5, 0, 0]], [[1, 2, 3], [0, 0, -1]], [[0, 0, 1.0]] * 2, [1.0, 2.0])
        out = dyn.step_leapfrog(ps, cfg)
        np.testing.assert_array_equal(out.x, ps.x + ps.p / ps.m[:, None] * cfg.dt)
        np.testing.assert_array_equal(out.p, ps.p)

    def test_bound_orbit_energy(self):
        r, a2 = 1.0, 1e-4
        v = np.sqrt(0.5 * r * r / (r * r + a2) ** 1.5)
        ps = ParticleSet([[-r / 2, 0, 0], [r / 2, 0, 0]], [[0, -v, 0], [0, v, 0]],
                         [[0, 0, 1.0]] * 2, 1.0)
        cfg = SimConfig(g=1.0, g_c=1.0, softening=0.01, dt=0.001, nu=2)
        e0 = dyn.total_energy(ps, cfg)
        lf = dyn.Leapfrog(ps, cfg)
        lf.step(10_000)
        assert abs(dyn.total_energy(lf.particles, cfg) - e0) / abs(e0) < 1e-6

    def test_reversible(self, rng):
        ps = random_set(rng, 30, spins="aligned")
        cfg = SimConfig.default(30)
        lf = dyn.Leapfrog(ps, cfg)
        lf.step(200)
        lf.reverse()
        lf.step(200)
        np.testing.assert_allclose(lf.particles.x, ps.x, atol=1e-9)
        np.testing.assert_allclose(lf.particles.p, ps.p, atol=1e-9)

    def test_input_not_mutated(self, rng):
        ps = random_set(rng, 10)
        before = ps.copy()
        dyn.step_leapfrog(ps, SimConfig.default(10))
        assert ps == before


class TestCoupling:
    def test_aligned_and_perpendicular(self):
        up = ParticleSet(np.zeros((10, 3)), np.zeros((10, 3)), np.tile([0, 0, 1.0], (10, 1)), 1.0)
        assert dyn.coupling_energy(up, [0, 0, 1.0], CFG) == pytest.approx(-10.0)
        assert dyn.coupling_energy(up, [1.0, 0, 0], CFG) == 0.0

    def test_brute_force(self, rng):
        ps = random_set(rng, 25)
        field = rng.normal(size=(25, 3))
        expected = -CFG.g_c * sum(float(np.dot(a, b)) for a, b in zip(ps.s, field))
        assert dyn.coupling_energy(ps, field, CFG) == pytest.approx(expected, rel=1e-13)

    def test_callable_field_and_errors(self, rng):
        ps = random_set(rng, 5)
        e = dyn.coupling_energy(ps, lambda x: np.tile([0, 0, 2.0], (len(x), 1)), CFG)
        assert e == pytest.approx(-2.0 * ps.s[:, 2].sum())
        with pytest.raises(InvalidInputError):
            dyn.coupling_energy(ps, np.ones((4, 3)), CFG)
        with pytest.raises(InvalidInputError):
            dyn.coupling_energy(ps, [np.nan, 0, 1], CFG)


class TestSpinRelax:
    def test_perpendicular_spin_aligns(self):
        ps = ParticleSet([[0, 0, 0]], [[0, 0, 0]], [[1.0, 0, 0]], 1.0)
        out = dyn.spin_relax(ps, [0, 0, 1.0], 0.5, 30)
        assert dyn.alignment_cosine(out, [0, 0, 1.0])[0] > 0.99

    def test_aligned_unchanged(self):
        ps = ParticleSet([[0, 0, 0]], [[0, 0, 0]], [[0, 0, 1.0]], 1.0)
        out = dyn.spin_relax(ps, [0, 0, 5.0], 1.0, 10)
        np.testing.assert_array_equal(out.s, ps.s)

    def test_antialigned_escapes(self):
        ps = ParticleSet([[0, 0, 0]], [[0, 0, 0]], [[0, 0, -1.0]], 1.0)
        out = dyn.spin_relax(ps, [0, 0, 1.0], 0.5, 40)
        assert dyn.alignment_cosine(out, [0, 0, 1.0])[0] > 0.99

    def test_zero_field_sites_untouched(self):
        ps = ParticleSet([[0, 0, 0], [1, 0, 0]], np.zeros((2, 3)), [[1.0, 0, 0]] * 2, 1.0)
        field = [[0, 0, 0], [0, 0, 1.0]]
        out = dyn.spin_relax(ps, field, 0.5, 10)
        np.testing.assert_array_equal(out.s[0], [1.0, 0, 0])

    def test_monotone_on_random_ensemble(self, rng):
        ps = random_set(rng, 200)
        field = rng.normal(size=(200, 3))
        energies = [dyn.coupling_energy(ps, field, CFG)]
        for cur in dyn.iter_spin_relax(ps, field, 0.3, 60):
            energies.append(dyn.coupling_energy(cur, field, CFG))
        assert np.all(np.diff(energies) <= 1e-12)
        assert np.mean(dyn.alignment_cosine(cur, field)) > 0.99

    @pytest.mark.parametrize("rate", [0.0, 1.5])
    def test_rate_bounds(self, rate, rng):
        with pytest.raises(InvalidInputError):
            dyn.spin_relax(random_set(rng, 2), [0, 0, 1.0], rate, 1)


class TestOneParticleEnergy:
    def test_isolated_is_kinetic(self):
        ps = ParticleSet([[0, 0, 0]], [[1, 2, 2]], [[0, 0, 1.0]], 2.0)
        assert dyn.one_particle_energy(0, ps, CFG) == pytest.approx(9 / 4)
        assert dyn.one_particle_energies(ps, CFG)[0] == pytest.approx(9 / 4)

    def test_pair_at_rest(self):
        ps = pair(2.0)
        expected = -1.0 / np.sqrt(4 + 1e-6)
        for i in (0, 1):
            assert dyn.one_particle_energy(i, ps, CFG) == pytest.approx(expected, rel=1e-14)

    def test_brute_force(self, rng):
        ps = random_set(rng, 50)
        cfg = SimConfig(g=0.2, g_c=1.0, softening=0.05, dt=0.01, nu=50)
        vec = dyn.one_particle_energies(ps, cfg)
        for i in range(50):
            expected = ps.kinetic()[i] + brute_phi(ps.x.tolist(), ps.s.tolist(), 0.2, 0.0025, i)
            assert vec[i] == pytest.approx(expected, rel=1e-12, abs=1e-14)
            assert dyn.one_particle_energy(i, ps, cfg) == pytest.approx(expected, rel=1e-12, abs=1e-14)

    def test_foreign_index(self):
        with pytest.raises(InvalidInputError):
            dyn.one_particle_energy(5, pair(1.0), CFG)


class TestEvaporation:
    def test_bound_pair_kept(self):
        bound, gone = dyn.exclude_evaporated(pair(0.5), CFG)
        assert len(bound) == 2 and len(gone) == 0

    def test_runaway_removed(self, rng):
        ps = random_set(rng, 20, spins="aligned")
        x = np.vstack([ps.x, [[50.0, 0, 0]]])
        p = np.vstack([ps.p, [[10.0, 0, 0]]])
        s = np.vstack([ps.s, [[0, 0, 1.0]]])
        runaway = ParticleSet(x, p, s, 1.0)
        bound, gone = dyn.exclude_evaporated(runaway, SimConfig.default(21))
        assert len(gone) == 1 and gone.ids[0] == 20
        assert len(bound) == 20

    def test_incoming_unbound_kept(self):
        ps = ParticleSet([[0, 0, 0], [50.0, 0, 0]], [[0, 0, 0], [-10.0, 0, 0]],
                         [[0, 0, 1.0]] * 2, 1.0)
        _, gone = dyn.exclude_evaporated(ps, CFG)
        assert len(gone) == 0


class TestDiagnostics:
    def test_single_particle(self):
        d = dyn.diagnostics(ParticleSet([[0, 0, 0]], [[0, 0, 0]], [[0, 0, 1.0]], 1.0), CFG)
        assert d.kinetic == 0 and d.potential == 0
        assert np.isnan(d.virial_ratio)

    def test_energy_consistency(self, rng):
        ps = random_set(rng, 60)
        cfg = SimConfig.default(60)
        assert dyn.diagnostics(ps, cfg).total_energy == dyn.total_energy(ps, cfg)

    def test_radii(self):
        x = np.zeros((10, 3))
        x[:, 0] = np.arange(10) - 4.5
        ps = ParticleSet(x, np.zeros((10, 3)), np.tile([0, 0, 1.0], (10, 1)), 1.0)
        d = dyn.diagnostics(ps, SimConfig.default(10))
        assert d.core_radius == pytest.approx(2.5)
        assert d.halo_radius == pytest.approx(4.5)


@pytest.fixture(scope="module")
def relaxed():
    cfg = SimConfig.default(512)
    ps = init_waterbag(PhaseBox.symmetric(1.0, 0.7), 512, seed=9)
    lf = dyn.Leapfrog(ps, cfg)
    e0 = dyn.total_energy(ps, cfg)
    lf.step(2500)
    return lf.particles, cfg, e0


class TestRelaxedCluster:
    def test_virialized(self, relaxed):
        ps, cfg, _ = relaxed
        assert 0.9 <= dyn.diagnostics(ps, cfg).virial_ratio <= 1.1

    def test_energy_conserved(self, relaxed):
        ps, cfg, e0 = relaxed
        assert abs(dyn.total_energy(ps, cfg) - e0) / abs(e0) < 1e-3

    def test_evaporation_matches_brute_force(self, relaxed):
        ps, cfg, _ = relaxed
        # push a few particles outward to make the split non-trivial
        p = ps.p.copy()
        p[:5] = 3.0 * ps.x[:5] / np.linalg.norm(ps.x[:5], axis=1)[:, None]
        ps = ParticleSet(ps.x, p, ps.s, ps.m)
        xc = ps.x.mean(axis=0)
        vc = ps.p.mean(axis=0)
        expected = []
        for i in range(len(ps)):
            eps = dyn.one_particle_energy(i, ps, cfg)
            radial = float(np.dot(ps.x[i] - xc, ps.p[i] - vc))
            expected.append(eps > 0 and radial > 0)
        _, gone = dyn.exclude_evaporated(ps, cfg)
        assert sorted(gone.ids.tolist()) == [i for i, e in enumerate(expected) if e]
        assert 0 < len(gone) < len(ps)
