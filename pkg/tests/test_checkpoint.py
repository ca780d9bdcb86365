"""Checkpoint store: round trips, determinism, corruption handling."""

import struct

import numpy as np
import pytest

from unite.checkpoint import (CheckpointError, load_checkpoint,
                              save_checkpoint)
from unite.model import UniteModel
from conftest import TINY


def test_roundtrip_preserves_params(tmp_path):
    model = UniteModel(TINY, seed=5)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, model)
    loaded, extras = load_checkpoint(path)
    assert loaded.cfg == model.cfg
    assert extras == {}
    for name, p in model.params.items():
        np.testing.assert_array_equal(loaded.params[name].data, p.data)


def test_roundtrip_extras(tmp_path):
    model = UniteModel(TINY, seed=0)
    extras = {"centers": np.random.default_rng(0).normal(size=(2, 4, 4)),
              "opt_step": np.asarray(7.0)}
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, model, extras=extras)
    _, loaded = load_checkpoint(path)
    assert set(loaded) == set(extras)
    for k in extras:
        np.testing.assert_array_equal(loaded[k], extras[k])


def test_save_is_deterministic(tmp_path):
    model = UniteModel(TINY, seed=1)
    extras = {"b": np.ones(2), "a": np.zeros(3)}
    save_checkpoint(tmp_path / "1.ckpt", model, extras=extras)
    save_checkpoint(tmp_path / "2.ckpt", model, extras=dict(reversed(extras.items())))
    assert (tmp_path / "1.ckpt").read_bytes() == (tmp_path / "2.ckpt").read_bytes()


def test_bad_magic(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, UniteModel(TINY, seed=0))
    blob = bytearray(path.read_bytes())
    blob[0] ^= 0xFF
    path.write_bytes(bytes(blob))
    with pytest.raises(CheckpointError, match="bad magic"):
        load_checkpoint(path)


def test_unsupported_version(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, UniteModel(TINY, seed=0))
    blob = bytearray(path.read_bytes())
    blob[8:12] = struct.pack("<I", 42)
    path.write_bytes(bytes(blob))
    with pytest.raises(CheckpointError, match="unsupported version"):
        load_checkpoint(path)


def test_truncated_file(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, UniteModel(TINY, seed=0))
    path.write_bytes(path.read_bytes()[:-50])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(path)


def test_missing_parameter_record(tmp_path):
    model = UniteModel(TINY, seed=0)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, model)
    blob = path.read_bytes()
    # Drop the final record (head.b came last in insertion order).
    name = b"param.head.b"
    idx = blob.rindex(struct.pack("<I", len(name)) + name)
    path.write_bytes(blob[:idx])
    with pytest.raises(CheckpointError, match="missing parameter record"):
        load_checkpoint(path)
