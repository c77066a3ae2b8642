"""
Unit tests for the CheckpointStorage class and the TPROP1 codec.
"""

import os
import struct
import tempfile
import unittest

import numpy as np

from tprop.errors import CheckpointFormatError
from tprop.linalg import Rng
from tprop.models import build_autoencoder, build_discrete_net, build_mlp
from tprop.layers import Activation
from tprop.storage import (
    KIND_AUTOENCODER,
    KIND_NETWORK,
    MAGIC,
    CheckpointStorage,
    decode_checkpoint,
    encode_checkpoint,
)


class TestCheckpointCodec(unittest.TestCase):
    """Test cases for encode_checkpoint / decode_checkpoint."""

    def setUp(self):
        """Set up test fixtures."""
        self.net = build_mlp([6, 5, 4, 3], Activation.TANH, Rng(0))

    def test_network_is_bit_exact(self):
        """Test that every parameter survives encoding unchanged."""
        checkpoint = decode_checkpoint(encode_checkpoint(self.net, {"seed": 3}))
        self.assertEqual(checkpoint.kind, KIND_NETWORK)
        self.assertEqual(checkpoint.meta["seed"], 3)
        restored = checkpoint.model.parameters()
        for key, value in self.net.parameters().items():
            self.assertEqual(restored[key].tobytes(), value.tobytes())

    def test_layer_modes_survive(self):
        """Test that activations, transmission modes and sign inputs are restored."""
        net = build_discrete_net(Rng(1), width=8)
        model = decode_checkpoint(encode_checkpoint(net)).model
        self.assertEqual([f.transmit for f in model.forward], [f.transmit for f in net.forward])
        self.assertEqual([f.act for f in model.forward], [f.act for f in net.forward])
        self.assertTrue(model.g(2).sign_input)

    def test_autoencoder_kind(self):
        """Test that an auto-encoder comes back as an auto-encoder."""
        ae = build_autoencoder(12, 5, Rng(2))
        checkpoint = decode_checkpoint(encode_checkpoint(ae))
        self.assertEqual(checkpoint.kind, KIND_AUTOENCODER)
        np.testing.assert_array_equal(checkpoint.model.W, ae.W)
        self.assertTrue(np.shares_memory(checkpoint.model.decoder_weight, checkpoint.model.W))

    def test_bad_magic(self):
        """Test that a foreign blob is rejected."""
        blob = encode_checkpoint(self.net)
        with self.assertRaises(CheckpointFormatError):
            decode_checkpoint(b"XPROP1" + blob[len(MAGIC):])

    def test_truncated(self):
        """Test that a blob cut short is rejected."""
        blob = encode_checkpoint(self.net)
        with self.assertRaises(CheckpointFormatError):
            decode_checkpoint(blob[:-8])

    def test_trailing_bytes(self):
        """Test that extra bytes after the data are rejected."""
        with self.assertRaises(CheckpointFormatError):
            decode_checkpoint(encode_checkpoint(self.net) + b"\x00")

    def test_shape_table_mismatch(self):
        """Test that an array count disagreeing with the metadata is rejected."""
        blob = encode_checkpoint(self.net)
        meta_len = struct.unpack("<I", blob[6:10])[0]
        pos = 10 + meta_len
        count = struct.unpack("<I", blob[pos:pos + 4])[0]
        tampered = blob[:pos] + struct.pack("<I", count + 1) + blob[pos + 4:]
        with self.assertRaises(CheckpointFormatError):
            decode_checkpoint(tampered)


class TestCheckpointStorage(unittest.TestCase):
    """Test cases for the CheckpointStorage class."""

    def setUp(self):
        """Set up test fixtures."""
        self.temp_file = tempfile.NamedTemporaryFile(suffix=".tprop", delete=False)
        self.temp_file.close()
        self.storage = CheckpointStorage(self.temp_file.name)
        self.net = build_mlp([6, 5, 4, 3], Activation.TANH, Rng(0))

    def tearDown(self):
        """Clean up test fixtures."""
        if os.path.exists(self.temp_file.name):
            os.unlink(self.temp_file.name)
        backup_file = self.temp_file.name + ".backup"
        if os.path.exists(backup_file):
            os.unlink(backup_file)

    def test_save_and_load(self):
        """Test saving and loading a network."""
        result = self.storage.save(self.net, {"experiment": "mnist_mlp"})
        self.assertTrue(result)

        loaded = self.storage.load()
        self.assertEqual(loaded.meta["experiment"], "mnist_mlp")
        np.testing.assert_array_equal(loaded.model.g(2).V, self.net.g(2).V)

    def test_load_missing_file(self):
        """Test loading from a non-existent file."""
        storage = CheckpointStorage("nonexistent.tprop")
        with self.assertRaises(CheckpointFormatError):
            storage.load()

    def test_load_corrupted_file(self):
        """Test loading a file that is not a checkpoint."""
        with open(self.temp_file.name, "wb") as f:
            f.write(b"not a checkpoint")
        with self.assertRaises(CheckpointFormatError):
            self.storage.load()

    def test_backup(self):
        """Test creating backup file."""
        self.storage.save(self.net)
        result = self.storage.backup()

        self.assertTrue(result)
        with open(self.temp_file.name + ".backup", "rb") as f:
            self.assertEqual(f.read(), encode_checkpoint(self.net))

    def test_file_exists(self):
        """Test file_exists method."""
        self.storage.save(self.net)
        self.assertTrue(self.storage.file_exists())

        storage = CheckpointStorage("definitely_not_a_file.tprop")
        self.assertFalse(storage.file_exists())
        self.assertFalse(storage.backup())


if __name__ == "__main__":
    unittest.main()
