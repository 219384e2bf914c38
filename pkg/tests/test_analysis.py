import numpy as np
import pytest
import scipy.sparse as sp

from irkprec.analysis import (butcher_kappa, condition_number,
                              condition_number_iterative, field_of_values,
                              spectrum)
from irkprec.assembly import assemble_mass, assemble_stiffness, coefficient_preset
from irkprec.butcher import (butcher_preconditioner_matrix, gauss_legendre,
                             nystrom_from, radau_iia)
from irkprec.errors import ResourceLimitError
from irkprec.mesh import build_mesh
from irkprec.precond import build_preconditioner
from irkprec.stageop import StageOperator


@pytest.fixture(scope="module")
def wave_system():
    # constant-coefficient wave equation pieces on the k=2 mesh
    mesh = build_mesh(2)
    coeff = coefficient_preset("constant-diffusion")
    M = assemble_mass(mesh)
    F = assemble_stiffness(mesh, coeff)
    return mesh, M, F


def identity_operator(n):
    I = sp.identity(n, format="csr")
    Z = sp.csr_matrix((n, n))
    return StageOperator(np.zeros((1, 1)), I, Z, 1.0, 1)


class TestConditionNumber:
    def test_identity(self):
        assert abs(condition_number(identity_operator(40)) - 1.0) <= 1e-12

    def test_prec_equal_to_coupling_gives_one(self, wave_system):
        _, M, F = wave_system
        t = nystrom_from(gauss_legendre(2))
        op = StageOperator(t, M, F, 0.4, 2)
        assert abs(condition_number(op, t.A) - 1.0) <= 1e-10

    def test_unitary_similarity_invariance(self):
        rng = np.random.default_rng(3)
        B = rng.standard_normal((60, 60))
        Q, _ = np.linalg.qr(rng.standard_normal((60, 60)))
        sv1 = np.linalg.svd(B, compute_uv=False)
        sv2 = np.linalg.svd(Q @ B @ Q.T, compute_uv=False)
        assert abs(sv1[0] / sv1[-1] - sv2[0] / sv2[-1]) <= 1e-8 * (sv1[0] / sv1[-1])

    def test_guard(self):
        big = sp.identity(25000, format="csr")
        op = StageOperator(np.array([[1.0]]), big, big, 1.0, 1)
        with pytest.raises(ResourceLimitError):
            condition_number(op)

    @pytest.mark.parametrize("kind", ["J", "GSL", "TRIU", "LD", "DU"])
    def test_iterative_matches_dense(self, wave_system, kind):
        _, M, F = wave_system
        t = nystrom_from(gauss_legendre(3))
        h_t = 0.5
        op = StageOperator(t, M, F, h_t, 2)
        prec = build_preconditioner(t, kind, M, F, h_t, 2, subsolve="exact")
        dense = condition_number(op, prec)
        iterative = condition_number_iterative(op, prec, seed=1)
        assert abs(iterative - dense) <= 1e-4 * dense

    def test_iterative_unpreconditioned_matches_dense(self, wave_system):
        _, M, F = wave_system
        t = nystrom_from(gauss_legendre(2))
        op = StageOperator(t, M, F, 0.5, 2)
        dense = condition_number(op)
        iterative = condition_number_iterative(op, seed=2)
        assert abs(iterative - dense) <= 1e-4 * dense


class TestSpectrum:
    def test_identity_coupling_unit_mass(self):
        result = spectrum(identity_operator(25))
        assert result.eigenvalues.shape == (25,)
        assert np.allclose(result.eigenvalues, 1.0, atol=1e-12)
        assert result.kappa >= 1.0

    def test_symmetric_matrix_real_spectrum(self, wave_system):
        _, M, F = wave_system
        op = StageOperator(np.array([[2.0]]), M, F, 0.3, 1)
        result = spectrum(op)
        assert np.abs(result.eigenvalues.imag).max() <= 1e-10

    def test_preconditioning_moves_spectrum_off_origin(self, wave_system):
        _, M, F = wave_system
        t = nystrom_from(gauss_legendre(3))
        h_t = build_mesh(2).h ** (1.0 / 3.0)
        op = StageOperator(t, M, F, h_t, 2)
        prec = build_preconditioner(t, "LD", M, F, h_t, 2, subsolve="exact")
        plain = spectrum(op)
        preconditioned = spectrum(op, prec)
        assert (np.abs(preconditioned.eigenvalues).min()
                > np.abs(plain.eigenvalues).min())

    def test_count(self, wave_system):
        _, M, F = wave_system
        t = radau_iia(2)
        op = StageOperator(t, M, F, 0.2, 1)
        result = spectrum(op)
        assert result.eigenvalues.shape == (op.size,)


class TestFieldOfValues:
    def test_hermitian_collapses_to_real_segment(self):
        rng = np.random.default_rng(4)
        B = rng.standard_normal((30, 30))
        B = 0.5 * (B + B.T)
        w = np.linalg.eigvalsh(B)
        fov = field_of_values(B, n_angles=64)
        assert np.abs(fov.boundary_points.imag).max() <= 1e-10
        assert fov.boundary_points.real.max() <= w[-1] + 1e-10
        assert fov.boundary_points.real.min() >= w[0] - 1e-10

    def test_nilpotent_disk_radius_half(self):
        B = np.array([[0.0, 1.0], [0.0, 0.0]])
        fov = field_of_values(B, n_angles=256)
        radii = np.abs(fov.boundary_points)
        assert abs(radii.max() - 0.5) <= 1e-6
        # brute-force interior samples stay inside the traced boundary
        rng = np.random.default_rng(5)
        worst = 0.0
        for _ in range(500):
            v = rng.standard_normal(2) + 1j * rng.standard_normal(2)
            v /= np.linalg.norm(v)
            worst = max(worst, abs(np.conj(v) @ B @ v))
        assert worst <= radii.max() + 1e-9

    def test_single_point(self):
        fov = field_of_values(np.array([[2.0]]), n_angles=16)
        assert np.allclose(fov.boundary_points, 2.0)
        assert fov.min_distance_to_origin == 2.0

    def test_contains_eigenvalues(self):
        rng = np.random.default_rng(6)
        B = rng.standard_normal((25, 25))
        fov = field_of_values(B, n_angles=128)
        evs = np.linalg.eigvals(B)
        pts = fov.boundary_points
        # supporting half-plane test: every eigenvalue lies inside all of them
        for k in range(len(pts)):
            theta = 2.0 * np.pi * k / len(pts)
            support = (np.exp(1j * theta) * pts[k]).real
            assert np.all((np.exp(1j * theta) * evs).real <= support + 1e-8)

    def test_boundary_convex(self):
        # increasing theta rotates the support direction clockwise, so the
        # traced polygon turns consistently clockwise (cross products <= 0)
        rng = np.random.default_rng(7)
        B = rng.standard_normal((20, 20)) + 1j * rng.standard_normal((20, 20))
        fov = field_of_values(B, n_angles=64)
        pts = fov.boundary_points
        n = len(pts)
        scale = np.abs(pts).max() ** 2
        for i in range(n):
            a, b, c = pts[i], pts[(i + 1) % n], pts[(i + 2) % n]
            cross = (b - a).real * (c - b).imag - (b - a).imag * (c - b).real
            assert cross <= 1e-9 * scale

    def test_resolution_stability(self, wave_system):
        _, M, F = wave_system
        t = nystrom_from(gauss_legendre(2))
        op = StageOperator(t, M, F, 0.4, 2)
        B = op.materialize()
        d64 = field_of_values(B, n_angles=64).min_distance_to_origin
        d256 = field_of_values(B, n_angles=256).min_distance_to_origin
        assert abs(d64 - d256) <= 0.02 * max(d64, d256)

    def test_min_angles(self):
        with pytest.raises(ValueError):
            field_of_values(np.eye(3), n_angles=4)


class TestButcherKappa:
    def test_p_equals_a(self):
        A = radau_iia(3).A
        assert abs(butcher_kappa(A, A) - 1.0) <= 1e-13

    def test_identity_preconditioner(self):
        A = radau_iia(3).A
        sv = np.linalg.svd(A, compute_uv=False)
        assert abs(butcher_kappa(np.eye(3), A) - sv[0] / sv[-1]) <= 1e-12

    def test_ld_beats_jacobi_for_radau3(self):
        t = radau_iia(3)
        P_ld = butcher_preconditioner_matrix(t, "LD")
        P_j = butcher_preconditioner_matrix(t, "J")
        assert butcher_kappa(P_ld, t.A) < butcher_kappa(P_j, t.A)

    def test_singular_p_raises(self):
        with pytest.raises(np.linalg.LinAlgError):
            butcher_kappa(np.zeros((2, 2)), np.eye(2))
