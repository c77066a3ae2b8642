"""
Unit tests for the command-line interface.
"""

import contextlib
import io
import os
import shutil
import tempfile
import unittest

import numpy as np

from tprop.cli import EXIT_DATA, EXIT_FORMAT, EXIT_OK, EXIT_USAGE, MID_GRAY, filter_grid, main, write_pgm
from tprop.errors import CheckpointFormatError
from tprop.linalg import Rng
from tprop.models import build_autoencoder
from tprop.storage import CheckpointStorage

FIXTURES = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "fixtures")
MNIST_DIR = os.path.join(FIXTURES, "mnist")


def run_cli(*argv):
    """Run the CLI and capture what it prints."""
    out = io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(io.StringIO()):
        code = main(["--log-level", "ERROR"] + list(argv))
    return code, out.getvalue()


class TestCommands(unittest.TestCase):
    """Test cases for the tprop subcommands."""

    def setUp(self):
        """Set up test fixtures."""
        self.temp_dir = tempfile.mkdtemp()
        self.config = os.path.join(self.temp_dir, "small.json")
        with open(self.config, "w") as f:
            f.write('{"experiment": "mnist_mlp", "hidden_layers": 2, "width": 12, "batch_size": 25}')

    def tearDown(self):
        """Clean up test fixtures."""
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def path(self, name):
        return os.path.join(self.temp_dir, name)

    def train(self, out="run"):
        return run_cli("train", "--config", self.config, "--data-dir", MNIST_DIR, "--epochs", "1",
                       "--limit", "60", "--out", self.path(out))

    def test_train_and_eval(self):
        """Test a smoke run followed by a checkpoint evaluation."""
        code, output = self.train()
        self.assertEqual(code, EXIT_OK)
        self.assertIn("TRAINING REPORT", output)
        checkpoint = os.path.join(self.path("run"), "checkpoint.tprop")
        code, first = run_cli("eval", "--checkpoint", checkpoint, "--data-dir", MNIST_DIR, "--split", "train")
        self.assertEqual(code, EXIT_OK)
        self.assertIn("Error rate:", first)
        _, second = run_cli("eval", "--checkpoint", checkpoint, "--data-dir", MNIST_DIR, "--split", "train")
        self.assertEqual(first, second)

    def test_eval_matches_training_metrics(self):
        """Test that eval reproduces the train error written to metrics.csv."""
        self.train()
        with open(os.path.join(self.path("run"), "metrics.csv")) as f:
            train_err = f.read().splitlines()[1].split(",")[2]
        checkpoint = os.path.join(self.path("run"), "checkpoint.tprop")
        _, output = run_cli("eval", "--checkpoint", checkpoint, "--data-dir", MNIST_DIR, "--split", "train")
        self.assertIn(f"Error rate: {train_err}", output)

    def test_unknown_config_key(self):
        """Test exit code 2 for an invalid config."""
        with open(self.config, "w") as f:
            f.write('{"widht": 3}')
        code, output = self.train()
        self.assertEqual(code, EXIT_USAGE)
        self.assertIn("widht", output)

    def test_missing_data(self):
        """Test exit code 3 when the dataset is absent."""
        code, _ = run_cli("train", "--config", self.config, "--data-dir", self.path("nothing"), "--out", self.path("x"))
        self.assertEqual(code, EXIT_DATA)

    def test_bad_checkpoint(self):
        """Test exit code 4 for a file that is not a checkpoint."""
        with open(self.path("bad.tprop"), "wb") as f:
            f.write(b"garbage")
        code, _ = run_cli("eval", "--checkpoint", self.path("bad.tprop"), "--data-dir", MNIST_DIR)
        self.assertEqual(code, EXIT_FORMAT)

    def test_unwritable_checkpoint(self):
        """Test exit code 4 and no success line when the checkpoint path is a directory."""
        os.makedirs(os.path.join(self.path("run"), "checkpoint.tprop"))
        code, output = self.train()
        self.assertEqual(code, EXIT_FORMAT)
        self.assertNotIn("[✓]", output)

    def test_usage_error(self):
        """Test that argparse failures exit with code 2."""
        with self.assertRaises(SystemExit) as ctx:
            run_cli("verify", "thm9")
        self.assertEqual(ctx.exception.code, 2)

    def test_verify_gradients(self):
        """Test that the gradient suite passes through the CLI."""
        code, output = run_cli("verify", "gradients", "--trials", "1", "--out", self.temp_dir)
        self.assertEqual(code, EXIT_OK)
        self.assertIn("All checks passed", output)
        self.assertTrue(os.path.exists(self.path("verify_gradients.csv")))

    def test_export_filters(self):
        """Test the 280x280 PGM written for a 784-visible auto-encoder."""
        CheckpointStorage(self.path("ae.tprop")).save(build_autoencoder(784, 120, Rng(0)), {"seed": 0})
        code, _ = run_cli("export-filters", "--checkpoint", self.path("ae.tprop"), "--out", self.path("f.pgm"))
        self.assertEqual(code, EXIT_OK)
        with open(self.path("f.pgm"), "rb") as f:
            blob = f.read()
        header = b"P5\n280 280\n255\n"
        self.assertTrue(blob.startswith(header))
        self.assertEqual(len(blob), len(header) + 280 * 280)

    def test_export_filters_needs_autoencoder(self):
        """Test exit code 4 for a classifier checkpoint."""
        self.train()
        checkpoint = os.path.join(self.path("run"), "checkpoint.tprop")
        code, _ = run_cli("export-filters", "--checkpoint", checkpoint, "--out", self.path("f.pgm"))
        self.assertEqual(code, EXIT_FORMAT)


class TestFilterImages(unittest.TestCase):
    """Test cases for filter_grid and write_pgm."""

    def test_constant_filter_is_mid_gray(self):
        """Test that a constant weight row renders as mid-gray."""
        W = np.zeros((2, 784))
        W[1] = np.linspace(-1.0, 1.0, 784)
        image = filter_grid(W, np.array([0, 1]))
        self.assertEqual(image.shape, (28, 280))
        self.assertTrue(np.all(image[:, :28] == MID_GRAY))
        self.assertEqual(image[0, 28], 0)
        self.assertEqual(image[27, 55], 255)

    def test_needs_784_visible_units(self):
        """Test that filters of other sizes are rejected."""
        with self.assertRaises(CheckpointFormatError):
            filter_grid(np.zeros((3, 100)), np.arange(3))

    def test_write_pgm(self):
        """Test the binary PGM layout."""
        temp_dir = tempfile.mkdtemp()
        try:
            path = os.path.join(temp_dir, "x.pgm")
            write_pgm(path, np.array([[0, 255, 7]], dtype=np.uint8))
            with open(path, "rb") as f:
                self.assertEqual(f.read(), b"P5\n3 1\n255\n\x00\xff\x07")
        finally:
            shutil.rmtree(temp_dir, ignore_errors=True)


if __name__ == "__main__":
    unittest.main()
