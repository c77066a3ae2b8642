"""
Unit tests for the numerical check suites.
"""

import csv
import os
import shutil
import tempfile
import unittest

import numpy as np

from tprop.errors import ParameterError, UnsupportedOperationError
from tprop.layers import Activation, ForwardLayer, InverseLayer
from tprop.linalg import Rng
from tprop.verify import (
    ANGLE_SLACK,
    AUDITS,
    PREACT_LIMIT,
    SCALE_HIGH,
    SCALE_LOW,
    THM2_PASS_FRACTION,
    Prop2Trace,
    angle_report,
    build_angle_net,
    exact_linear_pair,
    gradient_audit,
    numeric_gradient,
    prop2_check,
    relative_error,
    robbins_monro,
    run_suite,
    theorem1_check,
    theorem2_check,
    theorem2_sweep,
    trained_tanh_pair,
)


class TestAngleBound(unittest.TestCase):
    """Test cases for the angle between target-propagation and gradient updates."""

    def test_condition_numbers_stay_small(self):
        """Test that random tanh nets keep the Jacobian product inside its worst-case conditioning."""
        per_layer = (SCALE_HIGH / SCALE_LOW) / (1.0 - np.tanh(PREACT_LIMIT) ** 2)
        for trial in range(20):
            report = theorem1_check(4, 8, 1e-4, Rng(trial))
            self.assertLessEqual(report.lambda_min, report.lambda_max)
            self.assertLessEqual(report.lambda_max / report.lambda_min, per_layer ** 3 * (1 + 1e-9))
            self.assertAlmostEqual(report.cos_alpha, report.cos_alpha_trace, places=12)

    def test_top_layer_is_aligned(self):
        """Test that the top layer's two updates point the same way."""
        report = theorem1_check(4, 8, 1e-4, Rng(5), layer=4)
        self.assertAlmostEqual(report.cos_alpha, 1.0, places=9)

    def test_orthogonal_net(self):
        """Test near-perfect alignment through orthogonal Jacobians."""
        net = build_angle_net(4, 8, Rng(6), orthogonal=True)
        report = angle_report(net, 1e-4)
        self.assertGreaterEqual(report.cos_alpha, 0.99)
        self.assertAlmostEqual(report.bound_kappa_inverse, 1.0, places=9)

    def test_bad_arguments(self):
        """Test eta_hat and layer range checks."""
        with self.assertRaises(ParameterError):
            theorem1_check(4, 8, 0.0, Rng(0))
        with self.assertRaises(ParameterError):
            angle_report(build_angle_net(3, 4, Rng(0)), 1e-3, layer=4)


class TestLocalLossDecrease(unittest.TestCase):
    """Test cases for the local-loss decrease checks."""

    def test_exact_inverse(self):
        """Test that an exact linear inverse gives lambda = 0 and a smaller loss."""
        f, g = exact_linear_pair(4, Rng(0))
        draws = Rng(1)
        for _ in range(5):
            e = 0.1 * draws.split("e").standard_normal(4)
            report = theorem2_check(f, g, 0.5 * np.tanh(draws.standard_normal(4)), e)
            self.assertLess(report.lam, 1e-10)
            self.assertTrue(report.holds)
            self.assertLess(report.lhs, 1e-20)

    def test_trained_inverse(self):
        """Test that a fitted tanh inverse meets the condition at some small scale."""
        f, g = trained_tanh_pair(4, Rng(2))
        h_prev = 0.5 * np.tanh(Rng(3).standard_normal(4))
        sweep = theorem2_sweep(f, g, h_prev, 20, Rng(4))
        scale, reports = sweep[-1]
        self.assertLess(reports[0].lam, 1.0)
        self.assertGreaterEqual(np.mean([r.holds for r in reports]), THM2_PASS_FRACTION)
        self.assertGreaterEqual(scale, 1e-6 * (1 - 1e-9))

    def test_sign_input_rejected(self):
        """Test that inverses reading sign(h) are refused."""
        f = ForwardLayer(np.eye(2), np.zeros(2), Activation.TANH)
        g = InverseLayer(np.eye(2), np.zeros(2), Activation.TANH, sign_input=True)
        with self.assertRaises(UnsupportedOperationError):
            theorem2_check(f, g, np.zeros(2), np.ones(2))


class TestInverseConvergence(unittest.TestCase):
    """Test cases for the linear inverse tracking W^-1."""

    def test_robbins_monro(self):
        """Test the rate schedule."""
        rate = robbins_monro(0.02, 100.0)
        self.assertEqual(rate(0), 0.02)
        self.assertAlmostEqual(rate(100), 0.01)

    def test_frozen_w_converges(self):
        """Test that gamma shrinks when only V learns."""
        trace = prop2_check(4, 5000, lambda t: 0.0, robbins_monro(0.02, 100.0), Rng(0))
        self.assertLess(trace.gammas[-1], 0.1 * trace.gammas[0])
        self.assertEqual(len(trace.gammas), 5001)

    def test_optimum_is_stationary(self):
        """Test that V started at W^-1 stays there while W is frozen."""
        trace = prop2_check(4, 1000, lambda t: 0.0, robbins_monro(0.02, 100.0), Rng(1), v_at_optimum=True)
        self.assertLess(float(np.max(trace.gammas)), 1e-12)

    def test_window_mean(self):
        """Test the window average and its range check."""
        trace = Prop2Trace(np.arange(101, dtype=float))
        self.assertEqual(trace.window_mean(50), 50.0)
        with self.assertRaises(ParameterError):
            trace.window_mean(95)


class TestGradientAudit(unittest.TestCase):
    """Test cases for finite-difference checking."""

    def test_numeric_gradient(self):
        """Test central differences on a quadratic."""
        p = np.array([[1.0, -2.0], [0.5, 3.0]])
        grad = numeric_gradient(lambda: float(np.sum(p ** 3)), p)
        self.assertLess(relative_error(3 * p ** 2, grad), 1e-8)
        np.testing.assert_array_equal(p, [[1.0, -2.0], [0.5, 3.0]])

    def test_every_audit_passes(self):
        """Test every analytic gradient once."""
        checks = gradient_audit("all", 1, Rng(0))
        self.assertEqual(sorted(c.target for c in checks), sorted(AUDITS))
        for check in checks:
            self.assertTrue(check.passed, f"{check.target}: {check.max_rel_err}")

    def test_local_forward_on_planted_regression(self):
        """Test the local-loss gradient against targets from a planted tanh network."""
        checks = gradient_audit("local_forward", 5, Rng(1))
        self.assertEqual(len(checks), 5)
        for check in checks:
            self.assertTrue(check.passed, f"trial {check.trial}: {check.max_rel_err}")

    def test_unknown_target(self):
        """Test that an unknown audit name is rejected."""
        with self.assertRaises(ParameterError):
            gradient_audit("nonsense", 1, Rng(0))


class TestRunSuite(unittest.TestCase):
    """Test cases for run_suite and its CSV output."""

    def setUp(self):
        """Set up test fixtures."""
        self.temp_dir = tempfile.mkdtemp()

    def tearDown(self):
        """Clean up test fixtures."""
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_gradients_csv(self):
        """Test the gradient suite's file and its determinism."""
        first, = run_suite("gradients", 3, 1, os.path.join(self.temp_dir, "a"))
        second, = run_suite("gradients", 3, 1, os.path.join(self.temp_dir, "b"))
        self.assertTrue(first.passed, first.failures)
        with open(first.path, "rb") as f:
            blob = f.read()
        with open(second.path, "rb") as f:
            self.assertEqual(blob, f.read())
        with open(first.path, newline="") as f:
            rows = list(csv.reader(f))
        self.assertEqual(rows[0], ["seed", "target", "trial", "max_rel_err", "passed"])
        self.assertEqual(len(rows), 1 + len(AUDITS))
        self.assertTrue(all(r[4] == "1" for r in rows[1:]))

    def test_random_nets_satisfy_bound(self):
        """Test cos(alpha) > 0 and cos(alpha) >= lambda_min / lambda_max - slack on all 100 random nets."""
        result, = run_suite("thm1", 7, 100, self.temp_dir)
        self.assertTrue(result.passed, result.failures)
        random_rows = [row for row in result.rows if row[1] == "random"]
        self.assertEqual(len(random_rows), 100)
        for row in random_rows:
            self.assertGreater(row[4], 0.0, row)
            self.assertGreaterEqual(row[4], row[8] - ANGLE_SLACK, row)

    def test_angle_suite_with_eta_hat(self):
        """Test the angle-bound suite at a chosen top step size."""
        result, = run_suite("thm1", 0, 2, self.temp_dir, eta_hat=1e-3)
        self.assertTrue(result.passed, result.failures)
        self.assertTrue(os.path.exists(os.path.join(self.temp_dir, "verify_thm1.csv")))
        self.assertTrue(all(row[3] == 1e-3 for row in result.rows if row[1] != "orthogonal"))

    def test_bad_requests(self):
        """Test unknown suites and non-positive trial counts."""
        with self.assertRaises(ParameterError):
            run_suite("thm9", 0, 1, self.temp_dir)
        with self.assertRaises(ParameterError):
            run_suite("gradients", 0, 0, self.temp_dir)


if __name__ == "__main__":
    unittest.main()
