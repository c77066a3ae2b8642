"""
Unit tests for experiment configuration.
"""

import glob
import json
import os
import tempfile
import unittest
from unittest import mock

from tprop.config import DATA_DIR_ENV, Experiment, ExperimentConfig, Method, load_config
from tprop.errors import ConfigurationError, DataNotFoundError
from tprop.layers import Activation
from tprop.optim import OptimizerKind
from tprop.tpengine import GlobalLoss

PRESETS = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "presets")


class TestExperimentConfig(unittest.TestCase):
    """Test cases for ExperimentConfig."""

    def setUp(self):
        """Set up test fixtures."""
        self.temp_file = tempfile.NamedTemporaryFile(mode="w", suffix=".json", delete=False)
        self.temp_file.close()

    def tearDown(self):
        """Clean up test fixtures."""
        if os.path.exists(self.temp_file.name):
            os.unlink(self.temp_file.name)

    def write(self, data):
        with open(self.temp_file.name, "w") as f:
            f.write(data if isinstance(data, str) else json.dumps(data))
        return self.temp_file.name

    def test_every_preset_loads(self):
        """Test that each bundled preset is a valid config."""
        paths = sorted(glob.glob(os.path.join(PRESETS, "*.json")))
        self.assertEqual(len(paths), 7)
        for path in paths:
            with self.subTest(preset=os.path.basename(path)):
                load_config(path)

    def test_preset_values(self):
        """Test the values read from the seven-hidden-layer preset."""
        config = load_config(os.path.join(PRESETS, "mnist_7h_tanh.json"))
        self.assertEqual(config.experiment, Experiment.MNIST_MLP)
        self.assertEqual(config.hidden_layers, 7)
        self.assertEqual(config.train.loss, GlobalLoss.CROSS_ENTROPY)
        self.assertAlmostEqual(config.train.noise.sigma0, 0.36)
        self.assertEqual(config.optimizer.kind, OptimizerKind.RMSPROP)

    def test_stochastic_sample_counts(self):
        """Test one training sample and 100 test samples for stochastic units."""
        config = load_config(os.path.join(PRESETS, "stochastic.json"))
        self.assertTrue(config.is_stochastic)
        self.assertEqual((config.train_samples, config.eval_samples), (1, 100))

    def test_unknown_key_is_named(self):
        """Test that an unknown key is rejected with its name."""
        with self.assertRaises(ConfigurationError) as ctx:
            ExperimentConfig.from_dict({"experiment": "mnist_mlp", "widht": 10})
        self.assertEqual(ctx.exception.field_name, "widht")

    def test_unknown_nested_key_is_named(self):
        """Test that unknown keys inside sections carry the section name."""
        with self.assertRaises(ConfigurationError) as ctx:
            ExperimentConfig.from_dict({"noise": {"sigma0": 0.1, "decay": 2}})
        self.assertEqual(ctx.exception.field_name, "noise.decay")

    def test_annotation_keys_ignored(self):
        """Test that keys starting with an underscore are skipped."""
        config = ExperimentConfig.from_dict({"_note": "anything", "width": 12, "layer_lr": {"_why": 1, "f2": 0.01}})
        self.assertEqual(config.width, 12)
        self.assertEqual(config.layer_lr, {"f2": 0.01})

    def test_method_compatibility(self):
        """Test that experiment / method pairs outside the table are rejected."""
        with self.assertRaises(ConfigurationError):
            ExperimentConfig(experiment="mnist_mlp", method="straight_through")
        with self.assertRaises(ConfigurationError):
            ExperimentConfig(experiment="autoencoder", method="backprop")
        config = ExperimentConfig(experiment="discrete", method="frozen_lower")
        self.assertEqual(config.method, Method.FROZEN_LOWER)

    def test_relu_experiment_needs_relu(self):
        """Test that mnist_relu insists on relu units."""
        with self.assertRaises(ConfigurationError):
            ExperimentConfig(experiment="mnist_relu")
        self.assertEqual(ExperimentConfig(experiment="mnist_relu", act="relu").act, Activation.RELU)

    def test_bad_values(self):
        """Test range and type checks."""
        for data in ({"epochs": 0}, {"batch_size": 2.5}, {"eta_tilde": 0}, {"loss": "hinge"},
                     {"optimizer": {"lr": -1}}, {"layer_lr": {"w3": 0.1}}, {"seed": True}):
            with self.subTest(data=data):
                with self.assertRaises(ConfigurationError):
                    ExperimentConfig.from_dict(data)

    def test_with_overrides(self):
        """Test that None keeps the value and anything else replaces it."""
        config = ExperimentConfig(seed=3, epochs=5)
        changed = config.with_overrides(seed=None, epochs=1, limit=50)
        self.assertEqual((changed.seed, changed.epochs, changed.limit), (3, 1, 50))
        self.assertEqual(config.epochs, 5)

    def test_to_dict_round_trip(self):
        """Test that to_dict feeds back into from_dict."""
        config = load_config(os.path.join(PRESETS, "discrete.json"))
        self.assertEqual(ExperimentConfig.from_dict(config.to_dict()), config)

    def test_data_dir_resolution(self):
        """Test flag, environment and missing data directories."""
        with mock.patch.dict(os.environ, {DATA_DIR_ENV: "/from/env"}):
            self.assertEqual(ExperimentConfig().resolve_data_dir(), "/from/env")
            self.assertEqual(ExperimentConfig(data_dir="/flag").resolve_data_dir(), "/flag")
        with mock.patch.dict(os.environ, clear=True):
            with self.assertRaises(DataNotFoundError):
                ExperimentConfig().resolve_data_dir()

    def test_load_config_errors(self):
        """Test missing files and malformed JSON."""
        with self.assertRaises(ConfigurationError):
            load_config("definitely_not_a_config.json")
        with self.assertRaises(ConfigurationError):
            load_config(self.write("{not json"))
        with self.assertRaises(ConfigurationError):
            load_config(self.write([1, 2]))


if __name__ == "__main__":
    unittest.main()
