"""Binary model checkpoints with a JSON export for inspection.

Byte layout (all integers little-endian, all floats IEEE-754 binary64):

    offset  size  field
    0       8     magic  b"RIFRLCK1"
    8       4     format version, uint32 (currently 1)
    12      8     episode index, uint64
    20      32    sha256 digest of the canonical run-config JSON
    52      4     layer count L, uint32
    56      1     activation code, uint8 (0 = relu, 1 = leaky_relu)
    57      8     leaky slope, float64
    65      ...   L layer blocks, each:
                      out_dim uint32, in_dim uint32,
                      out_dim*in_dim float64 weights (row-major),
                      out_dim float64 biases

The config digest ties a checkpoint to the run that produced it; the
loader only warns on mismatch so models can still be probed under
modified configs.
"""
from __future__ import annotations

import json
import struct
import warnings
from pathlib import Path

import numpy as np

from .policy import MlpParams

MAGIC = b"RIFRLCK1"
FORMAT_VERSION = 1
_ACT_CODES = {"relu": 0, "leaky_relu": 1}
_ACT_NAMES = {v: k for k, v in _ACT_CODES.items()}


class CheckpointError(ValueError):
    """Malformed or truncated checkpoint file."""


def save_checkpoint(path, params: MlpParams, episode: int,
                    config_digest: bytes = b"") -> None:
    """Write params to path; config_digest is a 32-byte sha256 (or empty)."""
    digest = bytes(config_digest) or b"\x00" * 32
    if len(digest) != 32:
        raise ValueError("config_digest must be 32 bytes")
    if params.activation not in _ACT_CODES:
        raise ValueError(f"cannot serialize activation {params.activation!r}")
    out = bytearray()
    out += MAGIC
    out += struct.pack("<I", FORMAT_VERSION)
    out += struct.pack("<Q", episode)
    out += digest
    out += struct.pack("<I", len(params.weights))
    out += struct.pack("<B", _ACT_CODES[params.activation])
    out += struct.pack("<d", params.leaky_slope)
    for w, b in zip(params.weights, params.biases):
        out += struct.pack("<II", w.shape[0], w.shape[1])
        out += np.ascontiguousarray(w, dtype="<f8").tobytes()
        out += np.ascontiguousarray(b, dtype="<f8").tobytes()
    Path(path).write_bytes(bytes(out))


def load_checkpoint(path, expected_digest: bytes | None = None
                    ) -> tuple[MlpParams, int]:
    """Read a checkpoint; returns (params, episode index)."""
    raw = Path(path).read_bytes()
    view = memoryview(raw)

    def take(n: int) -> memoryview:
        nonlocal view
        if len(view) < n:
            raise CheckpointError(f"truncated checkpoint: {path}")
        chunk, view = view[:n], view[n:]
        return chunk

    if bytes(take(8)) != MAGIC:
        raise CheckpointError(f"bad magic in {path}")
    (version,) = struct.unpack("<I", take(4))
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (episode,) = struct.unpack("<Q", take(8))
    digest = bytes(take(32))
    (n_layers,) = struct.unpack("<I", take(4))
    (act_code,) = struct.unpack("<B", take(1))
    (slope,) = struct.unpack("<d", take(8))
    if act_code not in _ACT_NAMES:
        raise CheckpointError(f"unknown activation code {act_code}")
    weights, biases = [], []
    for _ in range(n_layers):
        out_dim, in_dim = struct.unpack("<II", take(8))
        w = np.frombuffer(take(8 * out_dim * in_dim), dtype="<f8")
        weights.append(w.reshape(out_dim, in_dim).copy())
        biases.append(np.frombuffer(take(8 * out_dim), dtype="<f8").copy())
    if len(view):
        raise CheckpointError(f"trailing bytes in {path}")
    if expected_digest is not None and digest != bytes(expected_digest) \
            and digest != b"\x00" * 32:
        warnings.warn(f"checkpoint {path} was produced under a different "
                      "run config", stacklevel=2)
    params = MlpParams(weights, biases, _ACT_NAMES[act_code], slope)
    return params, episode


def export_json(path) -> str:
    """Human-readable JSON rendering of a checkpoint file."""
    params, episode = load_checkpoint(path)
    raw = Path(path).read_bytes()
    digest = raw[20:52]
    doc = {
        "format_version": FORMAT_VERSION,
        "episode": episode,
        "config_sha256": digest.hex(),
        "activation": params.activation,
        "leaky_slope": params.leaky_slope,
        "layers": [
            {
                "out_dim": int(w.shape[0]),
                "in_dim": int(w.shape[1]),
                "weights": w.tolist(),
                "biases": b.tolist(),
            }
            for w, b in zip(params.weights, params.biases)
        ],
    }
    return json.dumps(doc, indent=2)
