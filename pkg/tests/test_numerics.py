import numpy as np
import pytest

from ctrlrom.errors import ConvergenceError
from ctrlrom.numerics import (
    InnerProduct,
    cg_solve,
    dotw,
    gram_schmidt_extend,
    normw,
    svd_singular_values,
    trapezoid_quad,
)


class TestInnerProduct:
    def test_orthogonal_vectors(self):
        ip = InnerProduct(weight=0.5)
        assert dotw(np.array([1.0, 0.0]), np.array([0.0, 1.0]), ip) == 0.0

    def test_weighted_value(self):
        ip = InnerProduct(weight=0.5)
        assert dotw(np.array([1.0, 1.0]), np.array([1.0, 1.0]), ip) == pytest.approx(1.0)

    def test_unit_weight_matches_euclidean(self, rng):
        ip = InnerProduct(weight=1.0)
        x, y = rng.standard_normal(17), rng.standard_normal(17)
        assert dotw(x, y, ip) == pytest.approx(float(x @ y), rel=1e-14)
        assert normw(x, ip) == pytest.approx(float(np.linalg.norm(x)), rel=1e-14)

    def test_dimension_mismatch(self):
        ip = InnerProduct(weight=1.0)
        with pytest.raises(ValueError):
            dotw(np.ones(3), np.ones(4), ip)

    def test_nonpositive_weight_rejected(self):
        with pytest.raises(ValueError):
            InnerProduct(weight=0.0)


class TestCgSolve:
    def test_identity_operator_one_iteration(self, rng):
        ip = InnerProduct(weight=0.3)
        b = rng.standard_normal(8)
        x, iters = cg_solve(lambda v: v, b, ip, tol=1e-12)
        assert iters == 1
        np.testing.assert_allclose(x, b, atol=1e-13)

    def test_diagonal_solve(self):
        ip = InnerProduct(weight=1.0)
        d = np.array([2.0, 4.0])
        x, _ = cg_solve(lambda v: d * v, np.array([2.0, 4.0]), ip, tol=1e-12)
        np.testing.assert_allclose(x, [1.0, 1.0], atol=1e-12)

    def test_random_spd_matches_dense_solve(self, rng):
        # oracle: dense factorization of the same SPD matrix
        A = rng.standard_normal((6, 6))
        A = A @ A.T + 6 * np.eye(6)
        b = rng.standard_normal(6)
        expected = np.linalg.solve(A, b)
        ip = InnerProduct(weight=2.0)
        x, _ = cg_solve(lambda v: A @ v, b, ip, tol=1e-12)
        assert np.max(np.abs(x - expected)) < 1e-10

    def test_residual_criterion_in_weighted_norm(self, rng):
        A = rng.standard_normal((10, 10))
        A = A @ A.T + 10 * np.eye(10)
        b = rng.standard_normal(10)
        ip = InnerProduct(weight=0.01)
        tol = 1e-9
        x, _ = cg_solve(lambda v: A @ v, b, ip, tol=tol)
        assert normw(b - A @ x, ip) <= tol

    def test_max_iter_error_carries_best_iterate(self, rng):
        A = rng.standard_normal((12, 12))
        A = A @ A.T + 0.1 * np.eye(12)
        b = rng.standard_normal(12)
        ip = InnerProduct(weight=1.0)
        with pytest.raises(ConvergenceError) as err:
            cg_solve(lambda v: A @ v, b, ip, tol=1e-15, max_iter=2)
        assert err.value.best_iterate.shape == (12,)
        assert err.value.residual_norm == pytest.approx(
            normw(b - A @ err.value.best_iterate, ip), rel=1e-6
        )


class TestGramSchmidt:
    def test_normalizes_first_vector(self):
        ip = InnerProduct(weight=1.0)
        v = gram_schmidt_extend([], np.array([3.0, 0.0]), ip)
        np.testing.assert_allclose(v, [1.0, 0.0], atol=1e-14)

    def test_orthogonal_complement(self):
        ip = InnerProduct(weight=1.0)
        basis = [np.array([1.0, 0.0])]
        v = gram_schmidt_extend(basis, np.array([1.0, 1.0]), ip)
        np.testing.assert_allclose(v, [0.0, 1.0], atol=1e-14)

    def test_rejects_dependent_vector(self):
        ip = InnerProduct(weight=1.0)
        basis = [np.array([1.0, 0.0])]
        assert gram_schmidt_extend(basis, np.array([1.0, 1e-14]), ip, drop_tol=1e-10) is None

    def test_orthonormality_property(self, rng):
        # repeated extension keeps all pairwise products within 1e-10 of delta_ij
        ip = InnerProduct(weight=0.05)
        basis = []
        for _ in range(12):
            v = gram_schmidt_extend(basis, rng.standard_normal(40), ip)
            assert v is not None
            basis.append(v)
        for i, phi in enumerate(basis):
            for j, psi in enumerate(basis):
                assert abs(dotw(phi, psi, ip) - (1.0 if i == j else 0.0)) <= 1e-10


class TestTrapezoid:
    def test_constant(self):
        values = np.ones(11)
        assert trapezoid_quad(values, 0.1) == pytest.approx(1.0, rel=1e-14)

    def test_exact_for_linear(self):
        t = np.linspace(0.0, 1.0, 7)
        assert trapezoid_quad(t, t[1] - t[0]) == pytest.approx(0.5, rel=1e-14)

    def test_quadratic_converges_to_third(self):
        # oracle: closed form int_0^1 t^2 dt = 1/3
        t = np.linspace(0.0, 1.0, 1001)
        assert trapezoid_quad(t**2, t[1] - t[0]) == pytest.approx(1.0 / 3.0, abs=1e-6)

    def test_needs_two_nodes(self):
        with pytest.raises(ValueError):
            trapezoid_quad(np.array([1.0]), 0.1)


class TestSingularValues:
    def test_single_normalized_column(self):
        ip = InnerProduct(weight=0.25)
        v = np.array([2.0, 0.0, 0.0])  # normw = 1
        sigma = svd_singular_values([v], ip)
        np.testing.assert_allclose(sigma, [1.0], atol=1e-12)

    def test_orthonormal_pair(self, rng):
        ip = InnerProduct(weight=0.5)
        basis = []
        for _ in range(2):
            basis.append(gram_schmidt_extend(basis, rng.standard_normal(5), ip))
        sigma = svd_singular_values(basis, ip)
        np.testing.assert_allclose(sigma, [1.0, 1.0], atol=1e-10)

    def test_duplicated_column_is_rank_one(self, rng):
        ip = InnerProduct(weight=1.3)
        v = rng.standard_normal(6)
        sigma = svd_singular_values([v, v], ip)
        assert sigma[0] == pytest.approx(np.sqrt(2.0) * normw(v, ip), rel=1e-12)
        assert sigma[1] <= 1e-12

    def test_orthonormal_set_all_ones(self, rng):
        ip = InnerProduct(weight=0.01)
        basis = []
        for _ in range(8):
            basis.append(gram_schmidt_extend(basis, rng.standard_normal(30), ip))
        sigma = svd_singular_values(basis, ip)
        np.testing.assert_allclose(sigma, np.ones(8), atol=1e-10)
