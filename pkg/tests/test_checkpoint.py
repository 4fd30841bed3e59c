"""Checkpoint file format: magic, header, payload integrity."""

import json
import zlib

import numpy as np
import pytest

from groupdecode.nn.checkpoint import (
    CHECKPOINT_VERSION,
    MAGIC,
    CheckpointError,
    load_checkpoint,
    save_checkpoint,
)
from groupdecode.nn.model import ModelConfig, WavenetClassifier


@pytest.fixture
def model():
    cfg = ModelConfig(
        n_channels=4,
        n_classes=3,
        n_timesteps=16,
        n_layers=3,
        hidden_channels=5,
        fc_hidden=6,
        embedding_size=2,
        n_subjects=3,
        dropout=0.1,
    )
    return WavenetClassifier(cfg, seed=11)


def test_roundtrip_bit_exact(model, tmp_path):
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, model, extra={"epoch": 7})
    back, extra = load_checkpoint(path)
    assert extra == {"epoch": 7}
    assert back.config == model.config
    for name, arr in model.parameters().items():
        assert np.array_equal(back.parameters()[name], arr)


def test_roundtrip_default_extra(model, tmp_path):
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, model)
    _, extra = load_checkpoint(path)
    assert extra == {}


def test_file_layout(model, tmp_path):
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, model)
    raw = path.read_bytes()
    assert raw[:8] == MAGIC == b"GDCHKPT\x01"
    hlen = int.from_bytes(raw[8:12], "little")
    header = json.loads(raw[12 : 12 + hlen].decode("utf-8"))
    assert header["format_version"] == CHECKPOINT_VERSION
    assert header["param_order"] == list(model.parameters())
    payload = raw[12 + hlen :]
    assert zlib.crc32(payload) == header["payload_crc32"]
    total = sum(arr.size for arr in model.parameters().values())
    assert len(payload) == total * 4  # float32 little endian blobs


def test_float64_model_saved_as_float32(model, tmp_path):
    dbl = model.astype(np.float64)
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, dbl)
    back, _ = load_checkpoint(path)
    assert back.dtype == np.float32
    for name, arr in dbl.parameters().items():
        assert np.allclose(back.parameters()[name], arr.astype(np.float32))


def test_expect_config_match(model, tmp_path):
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, model)
    back, _ = load_checkpoint(path, expect_config=model.config)
    assert back.config == model.config


def test_expect_config_mismatch(model, tmp_path):
    from dataclasses import replace

    path = tmp_path / "model.ckpt"
    save_checkpoint(path, model)
    other = replace(model.config, fc_hidden=model.config.fc_hidden + 1)
    with pytest.raises(CheckpointError, match="config mismatch"):
        load_checkpoint(path, expect_config=other)


def test_bad_magic(model, tmp_path):
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, model)
    raw = bytearray(path.read_bytes())
    raw[0] = ord("X")
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError, match="bad magic"):
        load_checkpoint(path)


def test_empty_file(tmp_path):
    path = tmp_path / "empty.ckpt"
    path.write_bytes(b"")
    with pytest.raises(CheckpointError, match="bad magic"):
        load_checkpoint(path)


def test_truncated_header(model, tmp_path):
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, model)
    path.write_bytes(path.read_bytes()[:14])
    with pytest.raises(CheckpointError, match="truncated header"):
        load_checkpoint(path)


def test_unsupported_version(model, tmp_path):
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, model)
    raw = path.read_bytes()
    hlen = int.from_bytes(raw[8:12], "little")
    header = json.loads(raw[12 : 12 + hlen])
    header["format_version"] = 99
    hjson = json.dumps(header, sort_keys=True).encode()
    path.write_bytes(MAGIC + len(hjson).to_bytes(4, "little") + hjson + raw[12 + hlen :])
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(path)


def test_payload_truncation(model, tmp_path):
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, model)
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(CheckpointError, match="payload size mismatch"):
        load_checkpoint(path)


def test_payload_corruption(model, tmp_path):
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, model)
    raw = bytearray(path.read_bytes())
    raw[-1] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError, match="checksum mismatch"):
        load_checkpoint(path)


def test_invalid_header_json(model, tmp_path):
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, model)
    raw = path.read_bytes()
    hlen = int.from_bytes(raw[8:12], "little")
    broken = b"{" + b" " * (hlen - 1)
    path.write_bytes(MAGIC + raw[8:12] + broken + raw[12 + hlen :])
    with pytest.raises(CheckpointError, match="invalid header JSON"):
        load_checkpoint(path)


def test_error_is_value_error():
    assert issubclass(CheckpointError, ValueError)


def test_loaded_model_predicts_identically(model, tmp_path):
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, model)
    back, _ = load_checkpoint(path)
    x = np.random.default_rng(0).standard_normal((4, 4, 16)).astype(np.float32)
    sub = np.array([0, 1, 2, 0])
    assert np.array_equal(model.forward(x, sub), back.forward(x, sub))
