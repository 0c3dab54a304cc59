import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import single_facet_mesh
from ldpmlab import kernels
from ldpmlab.errors import ConfigurationError
from ldpmlab.ldpm_solver import (FacetState, LdpmParams, ParticleState,
                                 ParticleSystem, assemble_particle_forces,
                                 central_difference_step, compression_update,
                                 facet_strain, shear_friction_update,
                                 stable_dt, tension_fracture_update)
from ldpmlab.mesostructure import Box, generate_mesh


def drive_tension(params, mesh, path):
    state = FacetState(1)
    for e_n, e_m, e_l in path:
        tension_fracture_update(state, np.array([[e_n, e_m, e_l]]), params,
                                mesh.facet_r)
    return state


class TestFacetStrain:
    def test_rigid_translation(self):
        geom = single_facet_mesh().facet(0)
        a = ParticleState(u=np.array([0.3, -0.2, 0.5]))
        b = ParticleState(u=np.array([0.3, -0.2, 0.5]))
        assert facet_strain(a, b, geom) == (0.0, 0.0, 0.0)

    def test_normal_stretch_definition(self):
        geom = single_facet_mesh(r=10.0).facet(0)
        a = ParticleState()
        b = ParticleState(u=np.array([0.01, 0.0, 0.0]))
        eps = facet_strain(a, b, geom)
        assert eps == pytest.approx((0.001, 0.0, 0.0), abs=1e-15)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(-1e-3, 1e-3), min_size=6, max_size=6),
           st.lists(st.floats(-5.0, 5.0), min_size=3, max_size=3))
    def test_rigid_rotation_annihilates_strain(self, w_and_t, pivot):
        # linearized rigid motion: u = w x (x - p), theta = w on both
        w = np.asarray(w_and_t[:3])
        geom = single_facet_mesh().facet(0)
        pivot = np.asarray(pivot)
        x_i = np.zeros(3)
        x_j = np.array([10.0, 0.0, 0.0])
        a = ParticleState(u=np.cross(w, x_i - pivot), theta=w.copy())
        b = ParticleState(u=np.cross(w, x_j - pivot), theta=w.copy())
        eps = facet_strain(a, b, geom)
        assert np.max(np.abs(eps)) < 1e-12


class TestTensionFracture:
    def test_elastic_branch_exact(self, fig2_params):
        mesh = single_facet_mesh()
        path = [(e, 0.0, 0.0) for e in np.linspace(0, 9e-5, 10)]
        state = drive_tension(fig2_params, mesh, path)
        assert state.t[0, 0] == pytest.approx(fig2_params.E0 * 9e-5, rel=1e-12)
        assert state.t[0, 1] == 0.0

    def test_pure_tension_peak(self, fig2_params):
        # peak at eps_0 = sigma_t / E0 = 1e-4, then exponential decay
        mesh = single_facet_mesh()
        eps = np.linspace(0, 5e-4, 1001)
        state = FacetState(1)
        peaks = []
        for e in eps:
            tension_fracture_update(state, np.array([[e, 0.0, 0.0]]),
                                    fig2_params, mesh.facet_r)
            peaks.append(state.t[0, 0])
        peaks = np.asarray(peaks)
        assert peaks.max() == pytest.approx(3.0, rel=1e-9)
        assert eps[peaks.argmax()] == pytest.approx(1e-4, rel=1e-9)
        assert peaks[-1] < 0.5 * peaks.max()
        # the softening branch follows the exponential boundary
        r = mesh.facet_r[0]
        h_t = 2 * fig2_params.E0 / (fig2_params.l_t / r - 1.0)
        expected = 3.0 * math.exp(-h_t * (5e-4 - 1e-4) / 3.0)
        assert peaks[-1] == pytest.approx(expected, rel=1e-9)

    def test_pure_shear_strength(self, fig2_params):
        # effective strength sigma_s / sqrt(alpha) = 9 MPa, t_T = sigma_s
        mesh = single_facet_mesh()
        state = FacetState(1)
        for e in np.linspace(0, 1.5e-3, 1501):
            tension_fracture_update(state, np.array([[0.0, e, 0.0]]),
                                    fig2_params, mesh.facet_r)
        t_t = math.hypot(state.t[0, 1], state.t[0, 2])
        assert t_t == pytest.approx(4.5, rel=1e-9)
        t_eff = math.sqrt(max(state.t[0, 0], 0) ** 2
                          + (state.t[0, 1] ** 2 + state.t[0, 2] ** 2)
                          / fig2_params.alpha)
        assert t_eff == pytest.approx(9.0, rel=1e-9)

    def test_unloading_to_residual_strain(self, fig2_params):
        mesh = single_facet_mesh()
        state = FacetState(1)
        for e in np.linspace(0, 3e-4, 601):
            tension_fracture_update(state, np.array([[e, 0.0, 0.0]]),
                                    fig2_params, mesh.facet_r)
        t_top = state.t[0, 0]
        for e in np.linspace(3e-4, 0.0, 601)[1:]:
            tension_fracture_update(state, np.array([[e, 0.0, 0.0]]),
                                    fig2_params, mesh.facet_r)
        # with k_t = 1 the unloading line aims at eps_max - sigma_bt/E0
        assert state.t[0, 0] == 0.0
        eps_tr = 3e-4 - t_top / fig2_params.E0
        probe = 0.5 * (3e-4 + eps_tr)
        state2 = FacetState(1)
        for e in np.linspace(0, 3e-4, 601):
            tension_fracture_update(state2, np.array([[e, 0.0, 0.0]]),
                                    fig2_params, mesh.facet_r)
        for e in np.linspace(3e-4, probe, 301)[1:]:
            tension_fracture_update(state2, np.array([[e, 0.0, 0.0]]),
                                    fig2_params, mesh.facet_r)
        slope = state2.t[0, 0] / (probe - eps_tr)
        expected = t_top / (3e-4 - eps_tr)
        assert slope == pytest.approx(expected, rel=1e-6)

    def test_history_maxima_monotone(self, fig2_params):
        mesh = single_facet_mesh()
        state = FacetState(1)
        rng = np.random.default_rng(0)
        last = 0.0
        for _ in range(200):
            e = abs(rng.normal(scale=2e-4))
            tension_fracture_update(state, np.array([[e, 0.0, 0.0]]),
                                    fig2_params, mesh.facet_r)
            assert state.eps_max_n[0] >= last - 1e-15
            last = state.eps_max_n[0]

    def test_mesh_validation_rejects_short_characteristic_length(self):
        params = LdpmParams(E0=30000.0, alpha=0.25, sigma_t=3.0, r_st=1.5,
                            l_t=8.0, n_t=0.2)
        with pytest.raises(ConfigurationError):
            params.softening_modulus(np.array([10.0]))

    def test_fracture_energy_matches_characteristic_length(self, fig2_params):
        # dissipated energy per facet area approaches G_t = l_t sigma_t^2/(2 E0)
        for l_t in (60.0, 100.0, 200.0):
            params = LdpmParams(E0=30000.0, alpha=0.25, sigma_t=3.0, r_st=1.5,
                                l_t=l_t, n_t=0.2)
            mesh = single_facet_mesh()
            state = FacetState(1)
            work = 0.0
            t_old = 0.0
            path = np.linspace(0, 0.08, 20001)
            for e in path:
                tension_fracture_update(state, np.array([[e, 0.0, 0.0]]),
                                        params, mesh.facet_r)
                work += 0.5 * (t_old + state.t[0, 0]) * (path[1] - path[0])
                t_old = state.t[0, 0]
            g_meso = work * mesh.facet_r[0]
            assert g_meso == pytest.approx(params.G_t, rel=0.10)


@pytest.fixture(scope="module")
def fig2d_params():
    return LdpmParams(E0=60000.0, alpha=0.25, sigma_t=3.45, r_st=2.6,
                      l_t=500.0, n_t=0.4, sigma_c0=100.0, H_c0=0.6 * 60000,
                      H_c1=0.1 * 60000, kappa_c0=4.0, kappa_c1=1.0,
                      kappa_c2=0.5, kappa_c3=0.1, E_d=2.0 * 60000)


class TestCompression:
    def drive(self, params, strains, eps_v=None):
        state = FacetState(1)
        for k, e in enumerate(strains):
            ev = e if eps_v is None else eps_v[k]
            compression_update(state, np.array([e]), np.array([ev]), params)
        return state

    def test_pre_yield_elastic(self, fig2d_params):
        e = -0.5 * fig2d_params.sigma_c0 / fig2d_params.E0
        state = self.drive(fig2d_params, np.linspace(0, e, 50))
        assert state.t[0, 0] == pytest.approx(fig2d_params.E0 * e, rel=1e-12)

    def test_confined_path_boundary(self, fig2d_params):
        # r_DV = 0 path: yield at sigma_c0, hardening H_c0, rehardening
        p = fig2d_params
        ec0 = p.sigma_c0 / p.E0
        path = np.linspace(0, -8 * ec0, 4001)
        state = FacetState(1)
        records = []
        for e in path:
            compression_update(state, np.array([e]), np.array([e]), p)
            records.append(state.t[0, 0])
        records = np.asarray(records)
        i_yield = np.argmin(np.abs(path + ec0))
        assert records[i_yield] == pytest.approx(-100.0, rel=1e-9)
        i1 = np.argmin(np.abs(path + 1.5 * ec0))
        i2 = np.argmin(np.abs(path + 3.5 * ec0))
        slope = (records[i2] - records[i1]) / (path[i2] - path[i1])
        assert slope == pytest.approx(p.H_c0, rel=1e-9)
        # branch continuity at ec1 = kappa_c0 * ec0 fixes sigma_c1
        sigma_c1 = p.sigma_c0 + (p.kappa_c0 - 1.0) * ec0 * p.H_c0
        i3 = np.argmin(np.abs(path + p.kappa_c0 * ec0))
        assert records[i3] == pytest.approx(-sigma_c1, rel=1e-9)
        i4 = np.argmin(np.abs(path + 6 * ec0))
        expected = -sigma_c1 * math.exp((6 - p.kappa_c0) * ec0 * p.H_c0 / sigma_c1)
        assert records[i4] == pytest.approx(expected, rel=1e-9)

    def test_branch_continuity_any_rdv(self, fig2d_params):
        # sigma_bc approached from both branches at -eps_V = ec1
        p = fig2d_params
        ec0 = p.sigma_c0 / p.E0
        ec1 = p.kappa_c0 * ec0
        for eps_d_factor in (0.0, 0.5, 2.0):
            eps_v = -ec1
            eps_d = eps_d_factor * ec0
            rdv = abs(eps_d) / (p.kappa_c3 * ec0 - eps_v)
            h_c = (p.H_c0 - p.H_c1) / (1 + p.kappa_c2 * max(rdv - p.kappa_c1, 0)) \
                + p.H_c1
            below = p.sigma_c0 + (ec1 - 1e-12 - ec0) * h_c
            sigma_c1 = p.sigma_c0 + (ec1 - ec0) * h_c
            above = sigma_c1 * math.exp(1e-12 * h_c / sigma_c1)
            assert below == pytest.approx(above, rel=1e-9)

    def test_densified_unloading_modulus(self, fig2d_params):
        p = fig2d_params
        ec0 = p.sigma_c0 / p.E0
        path = np.linspace(0, -6 * ec0, 3001)
        state = FacetState(1)
        for e in path:
            compression_update(state, np.array([e]), np.array([e]), p)
        t_bot = state.t[0, 0]
        compression_update(state, np.array([path[-1] + 1e-6]),
                           np.array([path[-1] + 1e-6]), p)
        slope = (state.t[0, 0] - t_bot) / 1e-6
        assert slope == pytest.approx(p.E_d, rel=1e-6)

    def test_virgin_unloading_modulus(self, fig2d_params):
        p = fig2d_params
        e = -0.5 * p.sigma_c0 / p.E0
        state = self.drive(p, np.linspace(0, e, 50))
        t_mid = state.t[0, 0]
        compression_update(state, np.array([e + 1e-6]), np.array([e + 1e-6]), p)
        slope = (state.t[0, 0] - t_mid) / 1e-6
        assert slope == pytest.approx(p.E0, rel=1e-9)


class TestShearFriction:
    def test_elastic_trial_no_flow(self, fig2d_params):
        state = FacetState(1)
        shear_friction_update(state, np.array([1e-5]), np.array([0.0]),
                              np.array([-1.0]), fig2d_params)
        assert state.t[0, 1] == pytest.approx(fig2d_params.E_T * 1e-5)
        assert np.all(state.eps_p == 0.0)

    def test_strength_at_zero_normal_stress(self, fig2d_params):
        state = FacetState(1)
        for e in np.linspace(0, 0.02, 2001):
            shear_friction_update(state, np.array([e]), np.array([0.0]),
                                  np.array([0.0]), fig2d_params)
        assert state.t[0, 1] == pytest.approx(fig2d_params.sigma_s, rel=1e-9)

    def test_transitional_stress_value(self, fig2d_params):
        p = fig2d_params
        state = FacetState(1)
        for e in np.linspace(0, 0.02, 2001):
            shear_friction_update(state, np.array([e]), np.array([0.0]),
                                  np.array([-p.sigma_N0]), p)
        expected = p.sigma_s + p.mu_0 * p.sigma_N0 * (1 - math.exp(-1.0))
        assert state.t[0, 1] == pytest.approx(expected, rel=1e-9)

    def test_matches_1d_elastoplastic_oracle(self, fig2d_params):
        # oracle: monotonic pure shear at fixed t_N is min(E_T e, strength)
        p = fig2d_params
        t_n = -50.0
        strength = p.sigma_s + (p.mu_0 - p.mu_inf) * p.sigma_N0 \
            * (1 - math.exp(t_n / p.sigma_N0)) - p.mu_inf * t_n
        state = FacetState(1)
        path = np.linspace(0, 0.02, 2001)
        for e in path:
            shear_friction_update(state, np.array([e]), np.array([0.0]),
                                  np.array([t_n]), p)
            expected = min(p.E_T * e, strength)
            assert state.t[0, 1] == pytest.approx(expected, rel=1e-9)
        # plastic strain equals total minus elastic recovery
        assert state.eps_p[0, 0] == pytest.approx(0.02 - strength / p.E_T,
                                                  rel=1e-9)

    def test_radial_return_direction(self, fig2d_params):
        state = FacetState(1)
        shear_friction_update(state, np.array([0.02]), np.array([0.01]),
                              np.array([-10.0]), fig2d_params)
        ratio = state.t[0, 2] / state.t[0, 1]
        assert ratio == pytest.approx(0.5, rel=1e-12)


class TestAssembly:
    def test_zero_tractions(self, reference_mix, reference_params):
        mesh = generate_mesh(reference_mix, Box.cube(25.0), seed=1)
        f, m = assemble_particle_forces(mesh, np.zeros((mesh.n_facets, 3)))
        assert np.all(f == 0.0) and np.all(m == 0.0)

    def test_single_facet_contribution(self):
        mesh = single_facet_mesh(area=100.0, r=10.0)
        t = np.array([[2.0, 0.0, 0.0]])
        f, m = assemble_particle_forces(mesh, t)
        assert np.allclose(f[0], [200.0, 0.0, 0.0])
        assert np.allclose(f[1], [-200.0, 0.0, 0.0])
        expected_m = np.cross(mesh.facet_c_i[0], [200.0, 0.0, 0.0])
        assert np.allclose(m[0], expected_m)

    def test_global_balance_random_tractions(self, reference_mix):
        mesh = generate_mesh(reference_mix, Box.cube(25.0), seed=2)
        rng = np.random.default_rng(1)
        t = rng.normal(scale=3.0, size=(mesh.n_facets, 3))
        f, m = assemble_particle_forces(mesh, t)
        assert np.abs(f.sum(axis=0)).max() <= 1e-9 * np.abs(f).max()

    def test_balance_with_body_force(self, reference_mix):
        mesh = generate_mesh(reference_mix, Box.cube(25.0), seed=2)
        b = np.array([0.0, -1e-5, 0.0])
        f, m = assemble_particle_forces(mesh, np.zeros((mesh.n_facets, 3)),
                                        body_force=b)
        assert np.allclose(f.sum(axis=0), mesh.box.volume * b, rtol=1e-9)


class TestCentralDifference:
    def test_zero_force_invariant(self):
        u = np.zeros((2, 3)); th = np.zeros((2, 3))
        v = np.zeros((2, 3)); om = np.zeros((2, 3))
        central_difference_step(u, th, v, om, np.zeros((2, 3)),
                                np.zeros((2, 3)), np.ones(2),
                                np.repeat(np.eye(3)[None], 2, axis=0),
                                1e-6, damping=100.0)
        assert np.all(u == 0.0) and np.all(v == 0.0)

    def test_ballistic_quadratic(self):
        m = 2.0
        force = np.array([[3.0, 0.0, 0.0]])
        u = np.zeros((1, 3)); th = np.zeros((1, 3))
        v = np.zeros((1, 3)); om = np.zeros((1, 3))
        dt = 1e-3
        for _ in range(1000):
            central_difference_step(u, th, v, om, force, np.zeros((1, 3)),
                                    np.array([m]), np.eye(3)[None], dt)
        t = 1000 * dt
        assert u[0, 0] == pytest.approx(3.0 * t ** 2 / (2 * m), rel=2e-3)

    def test_oscillator_period(self, fig2_params):
        mesh = single_facet_mesh(area=100.0, r=10.0)
        system = ParticleSystem(mesh, fig2_params, 2.4e-9)
        m = system.mass[0]
        k = fig2_params.E0 * 100.0 / 10.0
        period_expected = 2 * math.pi * math.sqrt((m / 2) / k)
        system.u[0, 0] = -5e-6
        system.u[1, 0] = 5e-6
        dt = system.dt_stable / 20
        rel = []
        for _ in range(int(3 * period_expected / dt)):
            system.step(dt)
            rel.append(system.u[1, 0] - system.u[0, 0])
        rel = np.asarray(rel)
        crossings = np.flatnonzero(np.diff(np.sign(rel)) != 0)
        period = 2 * dt * np.diff(crossings).mean()
        assert period == pytest.approx(period_expected, rel=0.01)


class TestStableDt:
    def test_hand_formula_single_facet(self, fig2_params):
        mesh = single_facet_mesh(area=100.0, r=10.0)
        mass = np.array([1.2e-6, 2.4e-6])
        k = fig2_params.E0 * 100.0 / 10.0
        expected = 0.5 * math.sqrt(1.2e-6 / k)
        assert stable_dt(mesh, fig2_params, mass) == pytest.approx(expected,
                                                                   rel=1e-12)

    def test_stiffness_scaling(self, fig2_params):
        mesh = single_facet_mesh()
        mass = np.array([1e-6, 1e-6])
        stiff = LdpmParams(E0=4 * fig2_params.E0, alpha=0.25, sigma_t=3.0,
                           r_st=1.5, l_t=100.0, n_t=0.2)
        assert stable_dt(mesh, stiff, mass) == pytest.approx(
            0.5 * stable_dt(mesh, fig2_params, mass), rel=1e-12)


def boundary_violation(state, params, h_t):
    """Worst constitutive-boundary violation, recomputed independently."""
    eps = state.eps
    t = state.t
    worst = 0.0
    for f in range(state.n_facets):
        e_n, e_m, e_l = eps[f]
        if e_n >= 0.0:
            e_t = math.hypot(e_m, e_l)
            eff = math.sqrt(e_n ** 2 + params.alpha * e_t ** 2)
            if eff == 0.0:
                continue
            sin_w = e_n / eff
            cos_w = math.sqrt(params.alpha) * e_t / eff
            q = 4 * params.alpha * cos_w ** 2 / params.r_st ** 2
            s0 = 2 * params.sigma_t / (sin_w + math.sqrt(sin_w ** 2 + q))
            eps_max = math.sqrt(state.eps_max_n[f] ** 2
                                + params.alpha * state.eps_max_t[f] ** 2)
            omega = math.atan2(e_n, math.sqrt(params.alpha) * e_t)
            soft = h_t[f] * (2 * omega / math.pi) ** params.n_t
            over = max(eps_max - s0 / params.E0, 0.0)
            sbt = s0 * math.exp(-soft * over / s0)
            t_eff = math.sqrt(max(t[f, 0], 0.0) ** 2
                              + (t[f, 1] ** 2 + t[f, 2] ** 2) / params.alpha)
            worst = max(worst, t_eff - sbt, -t_eff)
        else:
            ev = state.eps_v[f]
            ec0 = params.sigma_c0 / params.E0
            ec1 = params.kappa_c0 * ec0
            ev0 = params.kappa_c3 * ec0
            e_d = e_n - ev
            rdv = abs(e_d) / ev0 if ev > 0 else abs(e_d) / (ev0 - ev)
            h_c = (params.H_c0 - params.H_c1) \
                / (1 + params.kappa_c2 * max(rdv - params.kappa_c1, 0)) \
                + params.H_c1
            mev = -ev
            if mev < 0:
                sbc = params.sigma_c0
            elif mev <= ec1:
                sbc = params.sigma_c0 + max(mev - ec0, 0.0) * h_c
            else:
                sc1 = params.sigma_c0 + (ec1 - ec0) * h_c
                sbc = sc1 * math.exp((mev - ec1) * h_c / sc1)
            worst = max(worst, -sbc - t[f, 0], t[f, 0])
            sbs = params.sigma_s \
                + (params.mu_0 - params.mu_inf) * params.sigma_N0 \
                * (1 - math.exp(t[f, 0] / params.sigma_N0)) \
                - params.mu_inf * t[f, 0]
            worst = max(worst, math.hypot(t[f, 1], t[f, 2]) - sbs)
    return worst


@pytest.fixture(scope="module")
def shaken_system(reference_mix, reference_params):
    mesh = generate_mesh(reference_mix, Box.cube(25.0), seed=4,
                         periodic=True)
    system = ParticleSystem(mesh, reference_params, reference_mix.density)
    system.damping = 1e5
    rng = np.random.default_rng(7)
    eps_c = np.zeros((mesh.n_facets, 3))
    eps_c[:, 0] = rng.normal(scale=3e-4, size=mesh.n_facets)
    eps_c[:, 1] = rng.normal(scale=2e-4, size=mesh.n_facets)
    system.set_eigenstrain(eps_c)
    for _ in range(400):
        system.step(system.dt_stable)
    return system


class TestSystemInvariants:
    def test_traction_boundaries_hold(self, shaken_system, reference_params):
        worst = boundary_violation(shaken_system.state, reference_params,
                                   shaken_system.h_t)
        assert worst <= 1e-8 * reference_params.E0

    def test_crack_opening_nonnegative(self, shaken_system):
        assert np.all(shaken_system.state.crack_opening >= 0.0)

    def test_global_balance_every_step(self, shaken_system):
        shaken_system.compute_forces()
        f = shaken_system.force
        assert np.abs(f.sum(axis=0)).max() <= 1e-9 * max(np.abs(f).max(), 1e-30)

    def test_dissipation_nonnegative_on_softening(self, fig2_params):
        mesh = single_facet_mesh()
        state = FacetState(1)
        h_t = fig2_params.softening_modulus(mesh.facet_r) * np.ones(1)
        last = 0.0
        for e in np.linspace(0, 2e-3, 2000):
            kernels.tension_fracture_batch(
                state, np.array([[e, 0.0, 0.0]]), fig2_params, h_t)
            # recompute tallies the way the system kernel does
        # system-level check: drive through the fused kernel
        system = ParticleSystem(mesh, fig2_params, 2.4e-9)
        eps_c = np.zeros((1, 3))
        for e in np.linspace(0, 2e-3, 2000):
            eps_c[:, 0] = e
            system.set_eigenstrain(eps_c)
            system.compute_forces()
            d = system.state.dissipated.sum()
            assert d >= last - 1e-10 * fig2_params.E0
            last = d

    def test_elastic_path_independence(self, fig2_params):
        mesh = single_facet_mesh()
        target = np.array([[5e-5, 2e-5, -1e-5]])
        state_a = FacetState(1)
        tension_fracture_update(state_a, target, fig2_params, mesh.facet_r)
        state_b = FacetState(1)
        detour = [np.array([[8e-5, -1e-5, 2e-5]]),
                  np.array([[2e-5, 3e-5, 0.0]]), target]
        for step in detour:
            tension_fracture_update(state_b, step, fig2_params, mesh.facet_r)
        assert np.allclose(state_a.t, state_b.t, atol=1e-12)
        assert state_a.t[0, 0] == pytest.approx(fig2_params.E0 * 5e-5)
        assert state_a.t[0, 1] == pytest.approx(fig2_params.E_T * 2e-5)


class TestKernelParity:
    def test_numba_matches_python(self, reference_mix, reference_params):
        if not kernels.HAVE_NUMBA:
            pytest.skip("numba not installed; single implementation")
        mesh = generate_mesh(reference_mix, Box.cube(25.0), seed=5,
                             periodic=True)
        p = reference_params
        rng = np.random.default_rng(3)

        def run(fn):
            u = rng.normal(scale=1e-4, size=(mesh.n_nodes, 3))
            th = rng.normal(scale=1e-5, size=(mesh.n_nodes, 3))
            state = FacetState(mesh.n_facets)
            eps_v = np.zeros(mesh.n_tets)
            eps_c = np.zeros((mesh.n_facets, 3))
            h_t = p.softening_modulus(mesh.facet_r)
            f_vec = np.zeros((mesh.n_facets, 3))
            m_i = np.zeros((mesh.n_facets, 3))
            m_j = np.zeros((mesh.n_facets, 3))
            fn(u, th, mesh.facet_i, mesh.facet_j, mesh.facet_e_n,
               mesh.facet_e_m, mesh.facet_e_l, mesh.facet_r, mesh.facet_area,
               mesh.facet_c_i, mesh.facet_c_j, mesh.facet_tet, eps_v, eps_c,
               state.eps, state.t, state.eps_max_n, state.eps_max_t,
               state.eps_p, state.compacted, state.crack_opening, state.work,
               state.dissipated, state.eps_v,
               p.E0, p.alpha, p.sigma_t, p.r_st, p.n_t, p.k_t, h_t,
               p.sigma_c0, p.H_c0, p.H_c1, p.kappa_c0, p.kappa_c1, p.kappa_c2,
               p.kappa_c3, p.E_d, p.mu_0, p.mu_inf, p.sigma_N0,
               f_vec, m_i, m_j)
            return state.t.copy(), f_vec

        rng = np.random.default_rng(3)
        t_fast, f_fast = run(kernels.facet_system_step)
        rng = np.random.default_rng(3)
        t_ref, f_ref = run(kernels.facet_system_step.py_func)
        assert np.array_equal(t_fast, t_ref)
        assert np.array_equal(f_fast, f_ref)
