import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import lebedev_rule

from donorspin.material import CONSTANTS, MaterialParameters, derive_donor
from donorspin.oracle import (MIN_QUAD_ORDER, PhononMode, PiezoTensor, golden_rule_rate, matrix_element_sq,
                              piezo_projection, product_rule, transverse_average_check, transverse_pair,
                              validate_against_analytic)
from donorspin.relaxation import Geometry, lambda_branch_terms, lambda_coefficient, spin_flip_rate

F, V = Geometry.FARADAY, Geometry.VOIGT
X, Y, Z = np.eye(3)
unit_vectors = st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1)).filter(
    lambda v: np.linalg.norm(v) > 0.1).map(lambda v: np.array(v) / np.linalg.norm(v))


def lebedev_rate(geometry, B, mat, derived):
    """Golden-rule rate evaluated independently: Lebedev nodes, explicit tensor loops, SI throughout."""
    c = CONSTANTS
    e, hbar = c.e_charge, c.hbar_Js
    pts, w = lebedev_rule(17)
    xi_all = pts.T
    beta = np.zeros((3, 3, 3))
    beta[2, 0, 0] = beta[2, 1, 1] = mat.h31
    beta[2, 2, 2] = mat.h33
    beta[0, 0, 2] = beta[0, 2, 0] = beta[1, 1, 2] = beta[1, 2, 1] = mat.h15
    d1 = mat.g_e * c.mu_B * B * e
    hwc = hbar * e * B / (mat.m_star_ratio * c.m0)
    K = 9 * e**2 / (8 * (derived.E1s * e) ** 2)
    alpha = mat.alpha_so * e
    total = 0.0
    for speed, polarizations in ((mat.s_l, "l"), (mat.s_t, "t")):
        q = d1 / (hbar * speed)
        acc = 0.0
        for xi, wt in zip(xi_all, w):
            if polarizations == "l":
                pols = [xi]
            else:
                a = np.array([1.0, 0, 0]) if abs(xi[0]) < 0.9 else np.array([0, 1.0, 0])
                e1 = np.cross(xi, a)
                e1 /= np.linalg.norm(e1)
                pols = [e1, np.cross(xi, e1)]
            for ep in pols:
                A = sum(beta[i, j, k] * xi[i] * xi[j] * ep[k] for i in range(3) for j in range(3) for k in range(3))
                field = q * math.sqrt(hbar / (2 * mat.rho * speed * q)) * A * xi
                if geometry is V:
                    M2 = (d1 * alpha * K / e) ** 2 * field[0] ** 2
                else:
                    M2 = ((2 * d1 - hwc) * alpha * K / (2 * e)) ** 2 * (field[0] ** 2 + field[1] ** 2)
                acc += wt * M2
        total += 2 * math.pi / hbar * q**2 / (hbar * speed) / (2 * math.pi) ** 3 * acc
    return total


class TestPiezoTensor:
    def test_pattern(self):
        b = PiezoTensor(h31=1.0, h33=2.0, h15=3.0).full()
        assert b[2, 0, 0] == b[2, 1, 1] == 1.0
        assert b[2, 2, 2] == 2.0
        assert b[0, 0, 2] == b[0, 2, 0] == b[1, 1, 2] == b[1, 2, 1] == 3.0
        assert np.count_nonzero(b) == 7

    def test_strain_pair_symmetry(self):
        b = PiezoTensor(-0.6, 1.5, -0.6).full()
        np.testing.assert_array_equal(b, b.transpose(0, 2, 1))


class TestProjection:
    tensor = PiezoTensor(h31=-0.6e10, h33=1.5e10, h15=-0.7e10)

    def test_zz(self):
        assert piezo_projection(self.tensor, Z, Z) == 1.5e10

    def test_xx(self):
        assert piezo_projection(self.tensor, X, X) == 0.0

    def test_x_propagation_z_polarization(self):
        # only beta_xxz survives: xi_x xi_x e_z picks h15
        assert piezo_projection(self.tensor, X, Z) == -0.7e10

    def test_z_propagation_x_polarization(self):
        # needs beta_zzx, which is not in the pattern
        assert piezo_projection(self.tensor, Z, X) == 0.0

    def test_rejects_non_unit(self):
        with pytest.raises(ValueError):
            piezo_projection(self.tensor, 2 * X, Z)

    @given(unit_vectors, unit_vectors)
    def test_matches_explicit_sum(self, xi, e):
        b = self.tensor.full()
        ref = sum(b[i, j, k] * xi[i] * xi[j] * e[k] for i in range(3) for j in range(3) for k in range(3))
        assert piezo_projection(self.tensor, xi, e) == pytest.approx(ref, rel=1e-12, abs=1e-3)


class TestPhononMode:
    def test_longitudinal_must_follow_xi(self):
        with pytest.raises(ValueError):
            PhononMode("longitudinal", Z, X, 6.1e3)

    def test_transverse_must_be_orthogonal(self):
        with pytest.raises(ValueError):
            PhononMode("transverse1", Z, Z, 2.9e3)

    def test_unknown_branch(self):
        with pytest.raises(ValueError):
            PhononMode("optical", Z, Z, 1.0)


class TestQuadrature:
    def test_constant(self):
        assert product_rule(64).weights.sum() == pytest.approx(4 * math.pi, rel=1e-10)

    @pytest.mark.parametrize("order", [MIN_QUAD_ORDER, 8, 64])
    def test_positive_weights(self, order):
        assert np.all(product_rule(order).weights > 0)

    @pytest.mark.parametrize("powers", [(2, 0, 0), (0, 0, 2), (2, 2, 0), (4, 0, 2), (2, 2, 2), (0, 0, 6),
                                        (1, 0, 0), (1, 1, 1), (3, 1, 0)])
    def test_monomials(self, powers):
        # int x^a y^b z^c dOmega has a closed form; odd powers vanish
        a, b, c = powers
        rule = product_rule(MIN_QUAD_ORDER)
        vals = np.prod(rule.nodes ** np.array(powers), axis=1)
        if any(p % 2 for p in powers):
            exact = 0.0
        else:
            g = math.gamma
            exact = 2 * g((a + 1) / 2) * g((b + 1) / 2) * g((c + 1) / 2) / g((a + b + c + 3) / 2)
        assert rule.integrate(vals) == pytest.approx(exact, abs=1e-13)

    def test_spherical_harmonics_orthogonality(self):
        from scipy.special import sph_harm_y

        rule = product_rule(MIN_QUAD_ORDER)
        theta = np.arccos(rule.nodes[:, 2])
        phi = np.arctan2(rule.nodes[:, 1], rule.nodes[:, 0])
        for l1 in range(4):
            for l2 in range(4):
                for m in range(-min(l1, l2), min(l1, l2) + 1):
                    v = sph_harm_y(l1, m, theta, phi) * np.conj(sph_harm_y(l2, m, theta, phi))
                    got = np.dot(rule.weights, v)
                    assert abs(got - (1.0 if l1 == l2 else 0.0)) < 1e-12


class TestTransverse:
    def test_z(self):
        np.testing.assert_allclose(transverse_average_check(Z), np.diag([0.5, 0.5, 0.0]), atol=1e-15)

    @given(unit_vectors)
    def test_projector(self, xi):
        P = transverse_average_check(xi)
        assert np.trace(P) == pytest.approx(1.0, abs=1e-14)
        np.testing.assert_allclose(P @ xi, 0, atol=1e-14)
        np.testing.assert_allclose(P, (np.eye(3) - np.outer(xi, xi)) / 2, atol=1e-14)

    @given(unit_vectors, st.floats(0, 2 * math.pi))
    def test_pair_independence(self, xi, angle):
        e1, e2 = transverse_pair(xi[None, :])
        e1, e2 = e1[0], e2[0]
        f1 = math.cos(angle) * e1 + math.sin(angle) * e2
        f2 = -math.sin(angle) * e1 + math.cos(angle) * e2
        np.testing.assert_allclose(transverse_average_check(xi, (f1, f2)), transverse_average_check(xi), atol=1e-14)

    @given(unit_vectors)
    def test_pair_orthonormal(self, xi):
        e1, e2 = transverse_pair(xi[None, :])
        basis = np.stack([xi, e1[0], e2[0]])
        np.testing.assert_allclose(basis @ basis.T, np.eye(3), atol=1e-12)


class TestMatrixElement:
    def test_voigt_zero_when_no_x_field(self, mat, derived):
        # field is along xi; xi = z has no x component
        mode = PhononMode("longitudinal", Z, Z, mat.s_l)
        assert matrix_element_sq(V, mode, 3.0, mat, derived) == 0.0

    def test_faraday_zero_when_prefactor_vanishes(self):
        # 2 g mu_B B = hbar omega_c needs m*/m0 = 1/g
        mat = MaterialParameters(m_star_ratio=0.5)
        d = derive_donor(mat)
        xi = np.array([1.0, 1.0, 1.0]) / math.sqrt(3)
        mode = PhononMode("longitudinal", xi, xi, mat.s_l)
        full = matrix_element_sq(F, mode, 3.0, MaterialParameters(), derive_donor(MaterialParameters()))
        assert full > 0
        # residue is the ~1e-9 rounding between tabulated mu_B and e hbar / 2 m0, squared
        assert matrix_element_sq(F, mode, 3.0, mat, d) < 1e-15 * full

    def test_averaged_ratio(self, mat, derived):
        assert golden_rule_rate(F, 4.0, mat, derived) / golden_rule_rate(V, 4.0, mat, derived) == pytest.approx(2.0, rel=1e-6)

    def test_requires_positive_field(self, mat, derived):
        mode = PhononMode("longitudinal", Z, Z, mat.s_l)
        with pytest.raises(ValueError):
            matrix_element_sq(V, mode, 0.0, mat, derived)


class TestGoldenRule:
    @pytest.mark.parametrize("geometry", [F, V])
    @pytest.mark.parametrize("B", [1.0, 5.0])
    def test_independent_lebedev_evaluation(self, mat, derived, geometry, B):
        assert golden_rule_rate(geometry, B, mat, derived) == pytest.approx(lebedev_rate(geometry, B, mat, derived),
                                                                            rel=1e-10)

    @pytest.mark.parametrize("geometry", [F, V])
    def test_matches_exact_angular_average(self, mat, derived, geometry):
        for B in (1.0, 3.0, 5.0, 7.0):
            oracle = golden_rule_rate(geometry, B, mat, derived)
            assert oracle == pytest.approx(spin_flip_rate(mat, derived, B, geometry, interference=True), rel=1e-12)

    @pytest.mark.parametrize("geometry", [F, V])
    def test_incoherent_sum_matches_published_coefficient(self, mat, derived, geometry):
        for B in (1.0, 3.0, 5.0, 7.0):
            oracle = golden_rule_rate(geometry, B, mat, derived, interference=False)
            assert oracle == pytest.approx(spin_flip_rate(mat, derived, B, geometry), rel=1e-12)

    def test_published_coefficient_omits_cross_terms(self, mat, derived):
        # the faithful oracle and the published closed form differ by about 10%
        ratio = golden_rule_rate(V, 5.0, mat, derived) / spin_flip_rate(mat, derived, 5.0, V)
        assert ratio == pytest.approx(lambda_coefficient(mat, True) / lambda_coefficient(mat), rel=1e-12)
        assert ratio == pytest.approx(0.8951, abs=1e-3)

    def test_zero_field(self, mat, derived):
        assert golden_rule_rate(V, 0.0, mat, derived) == 0.0

    def test_minimum_order(self, mat, derived):
        with pytest.raises(ValueError):
            golden_rule_rate(V, 1.0, mat, derived, rule=product_rule(MIN_QUAD_ORDER - 1))

    def test_branch_ratio(self, mat, derived):
        lon = golden_rule_rate(V, 5.0, mat, derived, branches=["longitudinal"], interference=False)
        tra = golden_rule_rate(V, 5.0, mat, derived, branches=["transverse1", "transverse2"], interference=False)
        lt, tt = lambda_branch_terms(mat)
        assert tra / lon == pytest.approx(tt / lt, rel=1e-12)
        assert lt / tt == pytest.approx(60.7 / 2843, rel=2e-3)

    def test_no_piezo_no_rate(self, derived):
        mat = MaterialParameters(h33=0.0, h31=0.0, h15=0.0)
        assert golden_rule_rate(V, 3.0, mat, derived) == 0.0

    @settings(max_examples=20, deadline=None)
    @given(st.floats(0.2, 8.0))
    def test_b5_scaling(self, B):
        mat = MaterialParameters()
        d = derive_donor(mat)
        rule = product_rule(16)
        ratio = golden_rule_rate(V, 2 * B, mat, d, rule) / golden_rule_rate(V, B, mat, d, rule)
        assert ratio == pytest.approx(32, rel=1e-6)

    @settings(max_examples=10, deadline=None)
    @given(st.floats(0, 2 * math.pi))
    def test_transverse_rotation_invariance(self, angle):
        mat = MaterialParameters()
        d = derive_donor(mat)
        rule = product_rule(16)
        rng = np.random.default_rng(int(angle * 1e6))
        angles = angle + rng.uniform(0, 2 * math.pi, size=len(rule.nodes))
        a = golden_rule_rate(F, 3.0, mat, d, rule)
        b = golden_rule_rate(F, 3.0, mat, d, rule, transverse_angles=angles)
        assert b == pytest.approx(a, rel=1e-10)

    def test_deterministic(self, mat, derived):
        assert golden_rule_rate(F, 2.0, mat, derived) == golden_rule_rate(F, 2.0, mat, derived)


class TestValidation:
    def test_report_against_exact_average(self, mat, derived):
        rep = validate_against_analytic([F, V], [1, 3, 5, 7], mat, derived, analytic_interference=True)
        assert len(rep.rows) == 8
        assert rep.max_rel_err < 1e-12

    def test_report_against_published(self, mat, derived):
        rep = validate_against_analytic([F, V], [1, 3, 5, 7], mat, derived)
        assert rep.max_rel_err == pytest.approx(0.1049, abs=5e-4)

    def test_oracle_geometry_ratio(self, mat, derived):
        rep = validate_against_analytic([F, V], [1, 3, 5, 7], mat, derived)
        far = [r.gamma_oracle for r in rep.rows if r.geometry is F]
        voi = [r.gamma_oracle for r in rep.rows if r.geometry is V]
        for a, b in zip(far, voi):
            assert a / b == pytest.approx(2.0, abs=0.01)

    def test_convergence_trend(self, mat, derived):
        # the integrand is a polynomial of degree 8 in xi, so every rule from
        # the minimum order upward is exact: errors sit at round-off
        errs = [validate_against_analytic(V, [5.0], mat, derived, product_rule(o), analytic_interference=True).max_rel_err
                for o in (16, 8, MIN_QUAD_ORDER)]
        assert max(errs) < 1e-12

    def test_csv(self, mat, derived):
        import io

        rep = validate_against_analytic(V, [1.0], mat, derived)
        buf = io.StringIO()
        rep.write_csv(buf)
        assert buf.getvalue().splitlines()[0] == "B_T,geometry,gamma_oracle_s1,gamma_analytic_s1,rel_err"
