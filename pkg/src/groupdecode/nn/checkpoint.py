"""Model checkpoint file: versioned header, JSON config, float32 LE blobs.

Layout: 8-byte magic ``GDCHKPT\\x01``, uint32 LE JSON length, UTF-8 JSON
header (config, parameter order/shapes, payload CRC32, user extras), then
each parameter's raw little-endian float32 bytes in declared order.
"""

from __future__ import annotations

import json
import zlib
from pathlib import Path

import numpy as np

from .model import ModelConfig, WavenetClassifier

MAGIC = b"GDCHKPT\x01"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, model: WavenetClassifier, extra: dict | None = None) -> None:
    """Write the model to ``path``; parameters are stored as float32."""
    blobs = []
    shapes = {}
    order = []
    for name, arr in model.parameters().items():
        data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        blobs.append(data)
        shapes[name] = list(arr.shape)
        order.append(name)
    payload = b"".join(blobs)
    header = {
        "format_version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "param_order": order,
        "shapes": shapes,
        "payload_crc32": zlib.crc32(payload),
        "extra": extra or {},
    }
    hjson = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(len(hjson).to_bytes(4, "little"))
        f.write(hjson)
        f.write(payload)


def load_checkpoint(path, expect_config: ModelConfig | None = None):
    """Read a checkpoint; returns (model, extra dict).

    Rejects unknown magic/version, corrupted payloads, and (when
    ``expect_config`` is given) any config mismatch.
    """
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 4 or raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    off = len(MAGIC)
    hlen = int.from_bytes(raw[off : off + 4], "little")
    off += 4
    if off + hlen > len(raw):
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(raw[off : off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: invalid header JSON: {e}") from e
    off += hlen
    if header.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported checkpoint version {header.get('format_version')}"
        )
    config = ModelConfig.from_dict(header["config"])
    if expect_config is not None and config != expect_config:
        raise CheckpointError(f"{path}: config mismatch with expected config")

    payload = raw[off:]
    expected = sum(
        int(np.prod(header["shapes"][name])) * 4 for name in header["param_order"]
    )
    if len(payload) != expected:
        raise CheckpointError(
            f"{path}: payload size mismatch: expected {expected} bytes, "
            f"found {len(payload)}"
        )
    if zlib.crc32(payload) != header["payload_crc32"]:
        raise CheckpointError(f"{path}: payload checksum mismatch")

    model = WavenetClassifier(config, seed=0)
    params = model.parameters()
    if list(params.keys()) != header["param_order"]:
        raise CheckpointError(f"{path}: parameter order mismatch with config")
    pos = 0
    for name in header["param_order"]:
        shape = tuple(header["shapes"][name])
        if params[name].shape != shape:
            raise CheckpointError(f"{path}: shape mismatch for parameter {name}")
        count = int(np.prod(shape))
        arr = np.frombuffer(payload[pos : pos + count * 4], dtype="<f4").reshape(shape)
        params[name][...] = arr
        pos += count * 4
    return model, header["extra"]
