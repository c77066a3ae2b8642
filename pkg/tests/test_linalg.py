"""
Unit tests for random streams and the linear-algebra helpers.
"""

import unittest

import numpy as np

from tprop.errors import NumericalError, ParameterError
from tprop.linalg import (
    Rng,
    condition_number,
    cosine,
    gaussian_noise,
    jacobi_eigenvalues_sym,
    largest_eigenvalue_sym,
    orthogonal_init,
    svd_singular_values,
)


class TestRng(unittest.TestCase):
    """Test cases for the seeded Rng streams."""

    def test_same_seed_same_draws(self):
        """Test that two streams with one seed produce identical draws."""
        a = Rng(3).standard_normal((4, 5))
        b = Rng(3).standard_normal((4, 5))
        np.testing.assert_array_equal(a, b)

    def test_split_streams_are_independent_of_draw_order(self):
        """Test that a named child stream ignores draws made on its parent."""
        parent = Rng(11)
        before = parent.split("noise").uniform(6)
        parent.standard_normal(100)
        after = parent.split("noise").uniform(6)
        np.testing.assert_array_equal(before, after)

    def test_split_names_differ(self):
        """Test that differently named children diverge."""
        rng = Rng(0)
        self.assertFalse(np.array_equal(rng.split("a").standard_normal(8), rng.split("b").standard_normal(8)))

    def test_negative_seed_rejected(self):
        """Test that a negative seed raises ParameterError."""
        with self.assertRaises(ParameterError):
            Rng(-1)

    def test_choice_is_distinct(self):
        """Test that choice draws distinct indices."""
        picked = Rng(5).choice(20, 10)
        self.assertEqual(len(set(picked.tolist())), 10)

    def test_bernoulli_extremes(self):
        """Test that probabilities 0 and 1 sample deterministically."""
        draws = Rng(2).bernoulli(np.array([0.0, 1.0, 0.0, 1.0]))
        np.testing.assert_array_equal(draws, [0.0, 1.0, 0.0, 1.0])


class TestOrthogonalInit(unittest.TestCase):
    """Test cases for orthogonal initialisation."""

    def test_square_is_orthogonal(self):
        """Test that a square draw satisfies W W^T = gain^2 I."""
        W = orthogonal_init(6, 6, 2.0, Rng(1))
        np.testing.assert_allclose(W @ W.T, 4.0 * np.eye(6), atol=1e-12)

    def test_wide_rows_orthonormal(self):
        """Test that a wide matrix has orthonormal rows."""
        W = orthogonal_init(3, 7, 1.0, Rng(1))
        np.testing.assert_allclose(W @ W.T, np.eye(3), atol=1e-12)

    def test_tall_columns_orthonormal(self):
        """Test that a tall matrix has orthonormal columns."""
        W = orthogonal_init(7, 3, 1.0, Rng(1))
        np.testing.assert_allclose(W.T @ W, np.eye(3), atol=1e-12)


class TestDecompositions(unittest.TestCase):
    """Test cases for the Jacobi solvers and derived quantities."""

    def test_singular_values_match_numpy(self):
        """Test one-sided Jacobi singular values against numpy."""
        a = Rng(4).standard_normal((6, 4))
        np.testing.assert_allclose(svd_singular_values(a), np.linalg.svd(a, compute_uv=False), rtol=1e-10)

    def test_singular_values_odd_wide(self):
        """Test a wide matrix with an odd column count."""
        a = Rng(8).standard_normal((3, 5))
        np.testing.assert_allclose(svd_singular_values(a), np.linalg.svd(a, compute_uv=False), rtol=1e-10)

    def test_singular_values_of_transpose(self):
        """Test that A and its transpose share singular values."""
        for seed, shape in ((11, (6, 4)), (12, (5, 5)), (13, (3, 7))):
            a = Rng(seed).standard_normal(shape)
            np.testing.assert_allclose(svd_singular_values(a), svd_singular_values(a.T), rtol=0, atol=1e-10)

    def test_diagonal_singular_values(self):
        """Test that a diagonal matrix returns its sorted absolute diagonal."""
        np.testing.assert_allclose(svd_singular_values(np.diag([1.0, -3.0, 2.0])), [3.0, 2.0, 1.0])

    def test_symmetric_eigenvalues(self):
        """Test classical Jacobi eigenvalues against numpy."""
        b = Rng(9).standard_normal((5, 5))
        a = b + b.T
        np.testing.assert_allclose(jacobi_eigenvalues_sym(a), np.sort(np.linalg.eigvalsh(a))[::-1], atol=1e-10)

    def test_largest_eigenvalue_psd(self):
        """Test power iteration on a positive semi-definite matrix."""
        b = Rng(10).standard_normal((4, 4))
        a = b.T @ b
        self.assertAlmostEqual(largest_eigenvalue_sym(a), float(np.max(np.linalg.eigvalsh(a))), places=8)

    def test_zero_matrix_eigenvalue(self):
        """Test that the zero matrix has dominant eigenvalue 0."""
        self.assertEqual(largest_eigenvalue_sym(np.zeros((3, 3))), 0.0)

    def test_asymmetric_rejected(self):
        """Test that a non-symmetric matrix raises ParameterError."""
        with self.assertRaises(ParameterError):
            largest_eigenvalue_sym(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_condition_number(self):
        """Test the condition number of a diagonal matrix and a singular one."""
        self.assertAlmostEqual(condition_number(np.diag([4.0, 2.0, 1.0])), 4.0)
        self.assertEqual(condition_number(np.array([[1.0, 1.0], [1.0, 1.0]])), float("inf"))


class TestHelpers(unittest.TestCase):
    """Test cases for noise and cosine helpers."""

    def test_zero_sigma_noise(self):
        """Test that sigma 0 returns zeros without needing a stream."""
        np.testing.assert_array_equal(gaussian_noise((2, 3), 0.0, None), np.zeros((2, 3)))

    def test_noise_moments(self):
        """Test the mean and spread of a million unit-sigma draws."""
        draws = gaussian_noise(1000000, 1.0, Rng(14))
        self.assertAlmostEqual(float(np.mean(draws)), 0.0, delta=0.005)
        self.assertAlmostEqual(float(np.std(draws)), 1.0, delta=0.005)

    def test_negative_sigma_rejected(self):
        """Test that a negative sigma raises ParameterError."""
        with self.assertRaises(ParameterError):
            gaussian_noise(3, -0.1, Rng(0))

    def test_cosine_of_matrices(self):
        """Test that cosine flattens matrices."""
        self.assertAlmostEqual(cosine(np.eye(2), 3 * np.eye(2)), 1.0)
        self.assertAlmostEqual(cosine(np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]])), 0.0)

    def test_cosine_zero_vector(self):
        """Test that a zero vector raises unless a fallback is given."""
        with self.assertRaises(NumericalError):
            cosine(np.zeros(3), np.ones(3))
        self.assertEqual(cosine(np.zeros(3), np.ones(3), fallback=0.0), 0.0)


if __name__ == "__main__":
    unittest.main()
