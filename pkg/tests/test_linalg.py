import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from shapelift import linalg
from shapelift.errors import InvalidInputError

# Hand-derived singular values of [[1, 1], [0, 1]]: the eigenvalues of
# M^T M = [[1, 1], [1, 2]] solve l^2 - 3l + 1 = 0, so l = (3 +- sqrt(5))/2.
SIGMA_HAND = (math.sqrt((3 + math.sqrt(5)) / 2), math.sqrt((3 - math.sqrt(5)) / 2))


def random_matrix(seed, m, n, scale=1.0):
    rng = np.random.default_rng(seed)
    return scale * rng.standard_normal((m, n))


class TestSvd:
    def test_identity(self):
        res = linalg.svd(np.eye(3))
        np.testing.assert_allclose(res.sigma, [1.0, 1.0, 1.0])
        np.testing.assert_allclose(res.u @ res.v.T, np.eye(3), atol=1e-12)

    def test_diagonal_with_zero_row(self):
        res = linalg.svd(np.diag([3.0, 0.0, 1.0]))
        assert res.rank == 2
        np.testing.assert_allclose(res.sigma, [3.0, 1.0])

    def test_hand_derived_singular_values(self):
        res = linalg.svd([[1.0, 1.0], [0.0, 1.0]])
        np.testing.assert_allclose(res.sigma, SIGMA_HAND, rtol=1e-12)

    def test_zero_matrix_has_rank_zero(self):
        res = linalg.svd(np.zeros((3, 4)))
        assert res.rank == 0
        assert res.u.shape == (3, 0)
        assert res.v.shape == (4, 0)

    def test_sign_convention(self):
        res = linalg.svd(random_matrix(5, 7, 4))
        for j in range(res.rank):
            lead = np.argmax(np.abs(res.u[:, j]))
            assert res.u[lead, j] >= 0.0

    def test_bit_stable_across_calls(self):
        m = random_matrix(11, 9, 6)
        a = linalg.svd(m)
        b = linalg.svd(m)
        assert np.array_equal(a.u, b.u)
        assert np.array_equal(a.sigma, b.sigma)
        assert np.array_equal(a.v, b.v)

    @given(st.integers(0, 10**9), st.integers(1, 20), st.integers(1, 20))
    def test_reconstruction_and_orthonormality(self, seed, m, n):
        mat = random_matrix(seed, m, n)
        res = linalg.svd(mat)
        recon = res.u @ np.diag(res.sigma) @ res.v.T
        denom = max(np.linalg.norm(mat), 1e-30)
        assert np.linalg.norm(recon - mat) / denom <= 1e-10
        eye = np.eye(res.rank)
        assert np.abs(res.u.T @ res.u - eye).max() <= 1e-10
        assert np.abs(res.v.T @ res.v - eye).max() <= 1e-10
        assert np.all(np.diff(res.sigma) <= 0.0)
        assert np.all(res.sigma >= 0.0)

    def test_rejects_non_finite(self):
        with pytest.raises(InvalidInputError):
            linalg.svd([[1.0, np.nan], [0.0, 1.0]])
        with pytest.raises(InvalidInputError):
            linalg.svd([[np.inf]])

    def test_rejects_empty(self):
        with pytest.raises(InvalidInputError):
            linalg.svd(np.zeros((0, 3)))
        with pytest.raises(InvalidInputError):
            linalg.svd([1.0, 2.0])


class TestLeastSquares:
    def test_invertible_square(self):
        x = linalg.least_squares(np.eye(3), 2.0 * np.eye(3))
        np.testing.assert_allclose(x, 2.0 * np.eye(3), atol=1e-12)

    def test_exact_1d_scaling(self):
        x = linalg.least_squares([[1.0, 2.0, 3.0]], [[2.0, 4.0, 6.0]])
        np.testing.assert_allclose(x, [[2.0]], atol=1e-12)

    def test_rank_deficient_minimum_norm(self):
        # a+ computed by hand: a = [[1,1],[0,0]] has sigma = sqrt(2),
        # u = e1, v = (1,1)/sqrt(2), so a+ = [[0.5, 0], [0.5, 0]] and
        # X = b a+ = [[1, 0], [1, 0]].
        x = linalg.least_squares([[1.0, 1.0], [0.0, 0.0]], np.ones((2, 2)))
        np.testing.assert_allclose(x, [[1.0, 0.0], [1.0, 0.0]], atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidInputError):
            linalg.least_squares(np.ones((2, 3)), np.ones((2, 4)))

    @given(st.integers(0, 10**9))
    def test_residual_beats_random_perturbations(self, seed):
        rng = np.random.default_rng(seed)
        k, kp, n = rng.integers(1, 6, size=3)
        a = rng.standard_normal((k, n))
        b = rng.standard_normal((kp, n))
        x = linalg.least_squares(a, b)
        base = np.linalg.norm(b - x @ a)
        for _ in range(100):
            delta = rng.standard_normal(x.shape)
            assert base <= np.linalg.norm(b - (x + 1e-3 * delta) @ a) + 1e-12

    @given(st.integers(0, 10**9))
    def test_minimum_norm_solution(self, seed):
        # Rows of the solution lie in the row space of a: any component in
        # the null space would grow ||X||_F without changing the residual.
        rng = np.random.default_rng(seed)
        a = rng.standard_normal((4, 6))
        a[3] = a[0] + a[1]  # force rank deficiency
        b = rng.standard_normal((2, 6))
        x = linalg.least_squares(a, b)
        null_proj = np.eye(4) - a @ linalg.pseudo_inverse(a)
        assert np.abs(x @ null_proj).max() <= 1e-10


class TestPseudoInverse:
    def test_identity(self):
        np.testing.assert_allclose(linalg.pseudo_inverse(np.eye(3)), np.eye(3),
                                   atol=1e-12)

    def test_zero_singular_value_maps_to_zero(self):
        got = linalg.pseudo_inverse(np.diag([2.0, 0.0]))
        np.testing.assert_allclose(got, np.diag([0.5, 0.0]), atol=1e-12)

    def test_hand_computed_column(self):
        # A = [[1], [1]]: A+ = (A^T A)^-1 A^T = (1/2) [1, 1].
        got = linalg.pseudo_inverse([[1.0], [1.0]])
        np.testing.assert_allclose(got, [[0.5, 0.5]], atol=1e-12)

    @given(st.integers(0, 10**9), st.integers(1, 12), st.integers(1, 12))
    def test_penrose_conditions(self, seed, m, n):
        a = random_matrix(seed, m, n)
        p = linalg.pseudo_inverse(a)
        scale = max(np.linalg.norm(a), 1.0)
        assert np.linalg.norm(a @ p @ a - a) / scale <= 1e-8
        pscale = max(np.linalg.norm(p), 1.0)
        assert np.linalg.norm(p @ a @ p - p) / pscale <= 1e-8
        ap = a @ p
        pa = p @ a
        assert np.linalg.norm(ap - ap.T) <= 1e-8 * max(np.linalg.norm(ap), 1.0)
        assert np.linalg.norm(pa - pa.T) <= 1e-8 * max(np.linalg.norm(pa), 1.0)

    def test_propagates_invalid_input(self):
        with pytest.raises(InvalidInputError):
            linalg.pseudo_inverse([[np.nan]])
