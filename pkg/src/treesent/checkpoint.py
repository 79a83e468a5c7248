"""Binary checkpoint container: magic ``SSTB``, version, config, provenance,
then length-prefixed name/shape/float32 tensor records, all little-endian."""

from __future__ import annotations

import json
import struct

import numpy as np

from .autodiff import Tensor
from .encoder import ModelConfig, param_shapes

__all__ = [
    "MAGIC",
    "VERSION",
    "CheckpointError",
    "save_checkpoint",
    "load_checkpoint",
]

MAGIC = b"SSTB"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _write_block(fh, payload: bytes):
    fh.write(struct.pack("<I", len(payload)))
    fh.write(payload)


def _read_block(fh):
    raw = fh.read(4)
    if len(raw) != 4:
        raise CheckpointError("truncated checkpoint")
    (n,) = struct.unpack("<I", raw)
    payload = fh.read(n)
    if len(payload) != n:
        raise CheckpointError("truncated checkpoint")
    return payload


def save_checkpoint(path, config: ModelConfig, params: dict, provenance: dict):
    """Write a name -> Tensor table; names are sorted for byte stability."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        _write_block(fh, json.dumps(config.to_dict(), sort_keys=True).encode("utf-8"))
        _write_block(fh, json.dumps(provenance, sort_keys=True).encode("utf-8"))
        names = sorted(params)
        fh.write(struct.pack("<I", len(names)))
        for name in names:
            data = np.ascontiguousarray(params[name].data, dtype="<f4")
            _write_block(fh, name.encode("utf-8"))
            fh.write(struct.pack("<I", data.ndim))
            fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
            payload = data.tobytes()
            fh.write(struct.pack("<Q", len(payload)))
            fh.write(payload)


def load_checkpoint(path, expect_extra=()):
    """Read (config, params, provenance), validating shapes against config.

    Names outside the encoder scheme must be listed in ``expect_extra``
    (e.g. ``head.w``, ``mlm.b``); their shapes are checked loosely (first
    dim against hidden/vocab where applicable).
    """
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise CheckpointError(f"{path}: bad magic")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported version {version}")
        config = ModelConfig.from_dict(json.loads(_read_block(fh).decode("utf-8")))
        provenance = json.loads(_read_block(fh).decode("utf-8"))
        (count,) = struct.unpack("<I", fh.read(4))
        params = {}
        for _ in range(count):
            name = _read_block(fh).decode("utf-8")
            (ndim,) = struct.unpack("<I", fh.read(4))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            (nbytes,) = struct.unpack("<Q", fh.read(8))
            data = np.frombuffer(fh.read(nbytes), dtype="<f4").reshape(shape)
            params[name] = Tensor(data.copy(), requires_grad=True)

    expected = param_shapes(config)
    for name, tensor in params.items():
        if name in expected:
            if tensor.shape != expected[name]:
                raise CheckpointError(
                    f"{path}: tensor {name} has shape {tensor.shape}, "
                    f"config requires {expected[name]}")
        elif name not in expect_extra:
            raise CheckpointError(f"{path}: unexpected tensor {name}")
    missing = set(expected) - set(params)
    if missing:
        raise CheckpointError(f"{path}: missing tensors {sorted(missing)[:5]}")
    return config, params, provenance
