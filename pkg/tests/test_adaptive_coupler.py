import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ldpmlab.adaptive_coupler import (InsertionLog, OttosenSurface,
                                      RveTemplate, check_insertion,
                                      haigh_westergaard, insert_rve, r_theta)
from ldpmlab.errors import ConfigurationError, HandoffError
from ldpmlab.macro_fem import ElasticityTensor, GaussPointModel


def sym_from(vals):
    return np.array([[vals[0], vals[3], vals[4]],
                     [vals[3], vals[1], vals[5]],
                     [vals[4], vals[5], vals[2]]])


class TestHaighWestergaard:
    def test_uniaxial_tension_values(self):
        hw = haigh_westergaard(np.diag([2.35, 0.0, 0.0]))
        assert hw.xi == pytest.approx(2.35 / math.sqrt(3.0), rel=1e-12)
        assert hw.rho == pytest.approx(2.35 * math.sqrt(2.0 / 3.0), rel=1e-12)
        assert hw.theta == pytest.approx(0.0, abs=1e-7)

    def test_hydrostatic_convention(self):
        hw = haigh_westergaard(-7.0 * np.eye(3))
        assert hw.rho == pytest.approx(0.0, abs=1e-14)
        assert hw.xi == pytest.approx(-7.0 * math.sqrt(3.0), rel=1e-12)
        assert hw.theta == 0.0

    def test_uniaxial_compression_lode_angle(self):
        hw = haigh_westergaard(np.diag([0.0, 0.0, -20.0]))
        assert hw.theta == pytest.approx(math.pi / 3.0, rel=1e-9)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(-50.0, 50.0), min_size=6, max_size=6))
    def test_matches_eigenvalue_oracle(self, vals):
        sigma = sym_from(vals)
        hw = haigh_westergaard(sigma)
        principal = np.sort(np.linalg.eigvalsh(sigma))[::-1]
        i1 = principal.sum()
        s = principal - i1 / 3.0
        j2 = (s[0] ** 2 + s[1] ** 2 + s[2] ** 2) / 2.0
        j3 = s[0] * s[1] * s[2]
        assert hw.xi == pytest.approx(i1 / math.sqrt(3.0), abs=1e-10)
        assert hw.rho == pytest.approx(math.sqrt(2.0 * j2), abs=1e-10)
        if hw.rho > 1e-6:
            c3t = np.clip(1.5 * math.sqrt(3.0) * j3 / j2 ** 1.5, -1.0, 1.0)
            assert math.cos(3.0 * hw.theta) == pytest.approx(c3t, abs=1e-10)


class TestRTheta:
    def test_k_one_theta_zero(self):
        assert r_theta(0.0, 1.0) == pytest.approx(1.0, rel=1e-15)

    def test_theta_sixty_branch_two(self):
        for k in (0.5, 0.9, 0.98466):
            expected = math.cos(math.pi / 3.0 - math.acos(k) / 3.0)
            assert r_theta(math.pi / 3.0, k) == pytest.approx(expected,
                                                              rel=1e-12)

    def test_reference_value(self):
        assert r_theta(0.0, 0.98466) == pytest.approx(0.99829, abs=5e-6)

    def test_branch_continuity(self):
        # cos(3 theta) = 0 at theta = pi/6: both arccos branches agree
        for k in (0.3, 0.7, 0.98466):
            lo = r_theta(math.pi / 6.0 - 1e-9, k)
            hi = r_theta(math.pi / 6.0 + 1e-9, k)
            assert abs(lo - hi) < 1e-8
            branch1 = math.cos(math.acos(0.0) / 3.0)
            branch2 = math.cos(math.pi / 3.0 - math.acos(0.0) / 3.0)
            assert branch1 == pytest.approx(branch2, abs=1e-12)

    def test_invalid_shape_factor(self):
        with pytest.raises(ConfigurationError):
            r_theta(0.1, 1.2)


class TestCalibration:
    def test_reference_strengths(self):
        surf = OttosenSurface.calibrate(2.35, 20.0, 22.11)
        assert surf.c1 * 20.0 == pytest.approx(4.775, rel=0.02)
        assert surf.c2 * 20.0 == pytest.approx(7.048, rel=0.02)
        assert surf.c3 * 400.0 == pytest.approx(0.88, rel=0.02)
        assert max(abs(r) for r in surf.calibration_residuals()) < 1e-6

    def test_homogeneous_scaling(self):
        a = OttosenSurface.calibrate(2.35, 20.0, 22.11)
        s = 2.5
        b = OttosenSurface.calibrate(2.35 * s, 20.0 * s, 22.11 * s)
        assert b.c1 == pytest.approx(a.c1 / s, rel=1e-9)
        assert b.c2 == pytest.approx(a.c2 / s, rel=1e-9)
        assert b.c3 == pytest.approx(a.c3 / s ** 2, rel=1e-9)
        assert b.shape_k == pytest.approx(a.shape_k, rel=1e-12)

    def test_half_scaled_states_inside(self):
        surf = OttosenSurface.calibrate(2.35, 20.0, 22.11)
        states = (np.diag([2.35, 0.0, 0.0]), np.diag([0.0, 0.0, -20.0]),
                  np.diag([-22.11, -22.11, 0.0]))
        for sigma in states:
            assert surf.evaluate(0.5 * sigma) < 0.0

    def test_invalid_strengths_rejected(self):
        with pytest.raises(ConfigurationError):
            OttosenSurface.calibrate(25.0, 20.0, 22.0)
        with pytest.raises(ConfigurationError):
            OttosenSurface.calibrate(2.35, 20.0, 10.0)


class TestCheckInsertion:
    @pytest.fixture(scope="class")
    def surface(self):
        return OttosenSurface.calibrate(2.35, 20.0, 22.11)

    def test_zero_stress_inside(self, surface):
        assert not check_insertion(np.zeros((3, 3)), surface)
        assert surface.evaluate(np.zeros((3, 3))) == pytest.approx(-1.0)

    def test_calibration_point_triggers(self, surface):
        assert check_insertion(np.diag([2.35, 0.0, 0.0]), surface)
        assert check_insertion(np.diag([0.0, 0.0, -20.0]), surface)

    def test_moderate_compression_inside(self, surface):
        assert not check_insertion(np.diag([-5.0, 0.0, 0.0]), surface)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(-30.0, 10.0), min_size=6, max_size=6),
           st.lists(st.floats(-1.0, 1.0), min_size=3, max_size=3))
    def test_rotation_invariance(self, surface, vals, axis):
        sigma = sym_from(vals)
        w = np.asarray(axis)
        if np.linalg.norm(w) < 1e-3:
            w = np.array([1.0, 0.0, 0.0])
        w = w / np.linalg.norm(w)
        angle = 0.9
        k_mat = np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]],
                          [-w[1], w[0], 0.0]])
        q = np.eye(3) + math.sin(angle) * k_mat \
            + (1 - math.cos(angle)) * (k_mat @ k_mat)
        f_a = surface.evaluate(sigma)
        f_b = surface.evaluate(q @ sigma @ q.T)
        assert f_a == pytest.approx(f_b, abs=1e-10 * max(1.0, abs(f_a)))


class TestInsertionLog:
    def test_monotone_and_replay(self):
        log = InsertionLog()
        log.record(10, 3, np.eye(3))
        log.record(15, 7, np.eye(3))
        log.record(15, 1, np.eye(3))
        assert log.count == 3
        assert log.elements() == [3, 7, 1]
        enriched = log.replay_assignment(10)
        assert enriched.sum() == 3
        assert all(enriched[[1, 3, 7]])


class TestInsertRve:
    def test_virgin_insertion_zero_strain(self, reference_mix,
                                          reference_params, small_rve):
        small_rve.reset()
        gp = GaussPointModel(ElasticityTensor(36500.0, 0.17))
        mismatch = insert_rve(gp, small_rve, np.zeros((3, 3)), 25.0 ** 3)
        assert mismatch == 0.0
        assert gp.kind == "homogenized"
        with pytest.raises(ConfigurationError):
            insert_rve(gp, small_rve, np.zeros((3, 3)), 25.0 ** 3)
        gp.kind = "elastic"  # undo for other tests
        gp.rve = None
        small_rve.reset()

    def test_severe_mismatch_aborts(self, small_rve):
        small_rve.reset()
        # an elastic model 10x too stiff guarantees > 20 % disagreement
        gp = GaussPointModel(ElasticityTensor(365000.0, 0.17))
        gamma = 3e-5 * np.diag([1.0, -0.17, -0.17])
        with pytest.raises(HandoffError):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                insert_rve(gp, small_rve, gamma, 25.0 ** 3)
        small_rve.reset()

    def test_moderate_mismatch_warns_and_continues(self, small_rve):
        small_rve.reset()
        gp = GaussPointModel(ElasticityTensor(33000.0 * 1.1, 0.17))
        gamma = 5e-5 * np.diag([1.0, -0.17, -0.17])
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            mismatch = insert_rve(gp, small_rve, gamma, 25.0 ** 3,
                                  warn_tol=0.01, abort_tol=0.5)
        assert mismatch > 0.01
        assert any("handoff" in str(w.message).lower() for w in caught)
        assert gp.kind == "homogenized"
        gp.kind = "elastic"
        gp.rve = None
        small_rve.reset()

    def test_per_element_seeds_differ(self, reference_mix, reference_params):
        tpl = RveTemplate(mix=reference_mix, params=reference_params, size=25.0)
        seed_a = tpl.element_seed(42, 3)
        seed_b = tpl.element_seed(42, 4)
        assert seed_a != seed_b
        assert seed_a == tpl.element_seed(42, 3)
        mesh_a = tpl.build(seed_a).mesh
        mesh_b = tpl.build(seed_b).mesh
        assert mesh_a.n_nodes != mesh_b.n_nodes \
            or not np.allclose(mesh_a.positions[:min(mesh_a.n_nodes,
                                                     mesh_b.n_nodes)],
                               mesh_b.positions[:min(mesh_a.n_nodes,
                                                     mesh_b.n_nodes)])
