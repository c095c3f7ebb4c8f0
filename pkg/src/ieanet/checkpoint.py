"""Versioned binary model checkpoints.

Layout (all integers little-endian):
  magic "IEAC" | version u32 | config_len u64 | config JSON (UTF-8)
  then per tensor until EOF:
  name_len u64 | name (UTF-8) | rank u64 | dims u64 x rank | data f64 raw
Round-trips parameters, batch-norm running stats, and the config bit-exactly.
"""

from __future__ import annotations

import io
import struct

import numpy as np

from .errors import CheckpointError, ShapeError
from .model import Model, ModelConfig, build_model

MAGIC = b"IEAC"
VERSION = 1


def _read_exact(f, count: int, what: str) -> bytes:
    data = f.read(count)
    if len(data) != count:
        raise CheckpointError(
            f"truncated checkpoint: wanted {count} bytes for {what}, "
            f"got {len(data)}"
        )
    return data


def save_checkpoint(model: Model, path):
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    config_bytes = model.config.to_json().encode("utf-8")
    buf.write(struct.pack("<Q", len(config_bytes)))
    buf.write(config_bytes)
    for name, arr in model.state_arrays():
        name_bytes = name.encode("utf-8")
        buf.write(struct.pack("<Q", len(name_bytes)))
        buf.write(name_bytes)
        buf.write(struct.pack("<Q", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def read_checkpoint(path) -> tuple[ModelConfig, dict[str, np.ndarray]]:
    """Parse a checkpoint file into (config, {tensor name: array})."""
    with open(path, "rb") as f:
        magic = _read_exact(f, 4, "magic")
        if magic != MAGIC:
            raise CheckpointError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        (version,) = struct.unpack("<I", _read_exact(f, 4, "version"))
        if version != VERSION:
            raise CheckpointError(
                f"{path}: format version {version} unsupported "
                f"(this build reads version {VERSION})"
            )
        (cfg_len,) = struct.unpack("<Q", _read_exact(f, 8, "config length"))
        config = ModelConfig.from_json(
            _read_exact(f, cfg_len, "config").decode("utf-8")
        )
        tensors: dict[str, np.ndarray] = {}
        while True:
            head = f.read(8)
            if not head:
                break
            if len(head) != 8:
                raise CheckpointError("truncated checkpoint: partial name length")
            (name_len,) = struct.unpack("<Q", head)
            name = _read_exact(f, name_len, "tensor name").decode("utf-8")
            (rank,) = struct.unpack("<Q", _read_exact(f, 8, f"{name} rank"))
            dims = struct.unpack(f"<{rank}Q",
                                 _read_exact(f, 8 * rank, f"{name} dims"))
            count = int(np.prod(dims)) if rank else 1
            raw = _read_exact(f, 8 * count, f"{name} data")
            tensors[name] = np.frombuffer(raw, dtype="<f8").reshape(dims).copy()
    return config, tensors


def load_checkpoint(path, config: ModelConfig | None = None) -> Model:
    """Rebuild a model from a checkpoint.

    With ``config`` given, the tensors are loaded into a model of that
    config instead of the embedded one; any name or shape disagreement is a
    ShapeError, and nothing partial is returned.
    """
    stored_config, tensors = read_checkpoint(path)
    model = build_model(config if config is not None else stored_config)
    expected = model.state_arrays()
    expected_names = [name for name, _ in expected]
    if sorted(expected_names) != sorted(tensors):
        missing = sorted(set(expected_names) - set(tensors))
        extra = sorted(set(tensors) - set(expected_names))
        raise ShapeError(
            f"{path}: tensor names do not match the target config "
            f"(missing {missing}, unexpected {extra})"
        )
    for name, arr in expected:
        stored = tensors[name]
        if stored.shape != arr.shape:
            raise ShapeError(
                f"{path}: tensor {name!r} has shape {stored.shape}, "
                f"target model needs {arr.shape}"
            )
        np.copyto(arr, stored)
    model.eval()
    return model
