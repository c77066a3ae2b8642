"""
Storage module for persisting trained models as TPROP1 checkpoint blobs.

Layout (all integers little-endian u32):
    b"TPROP1" | meta length | UTF-8 JSON meta | array count |
    per array: ndim, dims... | raw little-endian float64 data of every array
"""

import json
import logging
import os
import struct
from dataclasses import dataclass, field
from typing import Dict, List, Tuple, Union

import numpy as np

from .errors import CheckpointFormatError, TPropError
from .layers import ForwardLayer, InverseLayer
from .models import AutoEncoderParams, NetworkParams

logger = logging.getLogger(__name__)

MAGIC = b"TPROP1"
KIND_NETWORK = "network"
KIND_AUTOENCODER = "autoencoder"

Model = Union[NetworkParams, AutoEncoderParams]


@dataclass
class Checkpoint:
    """A model together with the metadata it was saved with."""

    model: Model
    meta: Dict = field(default_factory=dict)

    @property
    def kind(self) -> str:
        return self.meta.get("kind", "")


def _named_arrays(model: Model) -> Tuple[str, Dict, List[Tuple[str, np.ndarray]]]:
    if isinstance(model, AutoEncoderParams):
        return KIND_AUTOENCODER, {}, list(model.parameters().items())
    if isinstance(model, NetworkParams):
        structure = {
            "layers": [{"act": f.act.value, "transmit": f.transmit.value} for f in model.forward],
            "inverse": [{"act": g.act.value, "sign_input": g.sign_input} for g in model.inverse],
        }
        return KIND_NETWORK, structure, list(model.parameters().items())
    raise CheckpointFormatError(f"Cannot store a {type(model).__name__}")


def encode_checkpoint(model: Model, meta: Dict = None) -> bytes:
    """Serialize ``model`` and ``meta`` into one TPROP1 blob."""
    kind, structure, arrays = _named_arrays(model)
    header = dict(meta or {})
    header.update(structure)
    header["kind"] = kind
    header["arrays"] = [name for name, _ in arrays]
    meta_bytes = json.dumps(header, sort_keys=True).encode("utf-8")

    parts = [MAGIC, struct.pack("<I", len(meta_bytes)), meta_bytes, struct.pack("<I", len(arrays))]
    for _, array in arrays:
        parts.append(struct.pack(f"<I{array.ndim}I", array.ndim, *array.shape))
    for _, array in arrays:
        parts.append(np.ascontiguousarray(array, dtype="<f8").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointFormatError("Checkpoint is truncated")
        chunk = self.blob[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def _build_model(meta: Dict, arrays: Dict[str, np.ndarray]) -> Model:
    kind = meta.get("kind")
    try:
        if kind == KIND_AUTOENCODER:
            return AutoEncoderParams(arrays["W"], arrays["b"], arrays["c"])
        if kind == KIND_NETWORK:
            forward = [
                ForwardLayer(arrays[f"f{i}.W"], arrays[f"f{i}.b"], layer["act"], layer["transmit"])
                for i, layer in enumerate(meta["layers"], start=1)
            ]
            inverse = [
                InverseLayer(arrays[f"g{i}.V"], arrays[f"g{i}.c"], layer["act"], layer["sign_input"])
                for i, layer in enumerate(meta["inverse"], start=2)
            ]
            return NetworkParams(forward, inverse)
    except (KeyError, TypeError, ValueError, TPropError) as e:
        raise CheckpointFormatError(f"Checkpoint does not describe a valid {kind}: {e}") from e
    raise CheckpointFormatError(f"Unknown model kind {kind!r}")


def decode_checkpoint(blob: bytes) -> Checkpoint:
    """Parse a TPROP1 blob; any inconsistency raises CheckpointFormatError."""
    reader = _Reader(blob)
    if reader.take(len(MAGIC)) != MAGIC:
        raise CheckpointFormatError("Not a TPROP1 checkpoint (bad magic)")
    try:
        meta = json.loads(reader.take(reader.u32()).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointFormatError(f"Checkpoint metadata is unreadable: {e}") from e
    count = reader.u32()
    names = meta.get("arrays", [])
    if len(names) != count:
        raise CheckpointFormatError(f"Shape table lists {count} arrays, metadata names {len(names)}")
    shapes = []
    for _ in range(count):
        ndim = reader.u32()
        shapes.append(tuple(reader.u32() for _ in range(ndim)))
    arrays = {}
    for name, shape in zip(names, shapes):
        n = int(np.prod(shape)) if shape else 1
        arrays[name] = np.frombuffer(reader.take(8 * n), dtype="<f8").astype(np.float64).reshape(shape)
    if reader.pos != len(blob):
        raise CheckpointFormatError(f"{len(blob) - reader.pos} trailing bytes after the parameter data")
    return Checkpoint(_build_model(meta, arrays), meta)


class CheckpointStorage:
    """Handles reading and writing checkpoint blobs."""

    def __init__(self, filepath: str = "checkpoint.tprop"):
        self.filepath = filepath

    def save(self, model: Model, meta: Dict = None) -> bool:
        """
        Save a model to the checkpoint file.

        Returns:
            True if save was successful, False otherwise
        """
        blob = encode_checkpoint(model, meta)
        try:
            with open(self.filepath, "wb") as f:
                f.write(blob)
            logger.info("Wrote checkpoint %s (%d bytes)", self.filepath, len(blob))
            return True
        except (IOError, OSError) as e:
            logger.error("Error saving checkpoint: %s", e)
            return False

    def load(self) -> Checkpoint:
        """
        Load the checkpoint file.

        Raises:
            CheckpointFormatError: if the file is missing or malformed
        """
        if not os.path.exists(self.filepath):
            raise CheckpointFormatError(f"Checkpoint not found: {self.filepath}")
        try:
            with open(self.filepath, "rb") as f:
                blob = f.read()
        except (IOError, OSError) as e:
            raise CheckpointFormatError(f"Cannot read {self.filepath}: {e}") from e
        return decode_checkpoint(blob)

    def backup(self, backup_suffix: str = ".backup") -> bool:
        """
        Copy the checkpoint file next to itself.

        Returns:
            True if backup was successful, False otherwise
        """
        if not os.path.exists(self.filepath):
            return False
        try:
            with open(self.filepath, "rb") as f:
                data = f.read()
            with open(self.filepath + backup_suffix, "wb") as f:
                f.write(data)
            return True
        except (IOError, OSError) as e:
            logger.error("Error creating backup: %s", e)
            return False

    def file_exists(self) -> bool:
        """Check if the checkpoint file exists."""
        return os.path.exists(self.filepath)
