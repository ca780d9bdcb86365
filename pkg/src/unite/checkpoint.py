"""Binary checkpoint store.

Layout: magic "UNITECKP" | version u32 | u32-length-prefixed UTF-8 JSON of
the model config | named records.  Each record is: u32 name length, name
bytes, u32 ndim, u32 dims..., float64 little-endian values.  Records are
written in deterministic order (model parameters first, then extras,
sorted by name).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .model import ModelConfig, UniteModel
from .tensor import Tensor

CKP_MAGIC = b"UNITECKP"
CKP_VERSION = 1


class CheckpointError(Exception):
    pass


def _write_record(f, name: str, arr: np.ndarray) -> None:
    nb = name.encode("utf-8")
    f.write(struct.pack("<I", len(nb)))
    f.write(nb)
    arr = np.asarray(arr, dtype=np.float64)
    f.write(struct.pack("<I", arr.ndim))
    for d in arr.shape:
        f.write(struct.pack("<I", d))
    f.write(arr.astype("<f8").tobytes())


def save_checkpoint(path: str | Path, model: UniteModel,
                    extras: dict[str, np.ndarray] | None = None) -> None:
    cfg_json = json.dumps(model.cfg.to_dict(), sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CKP_MAGIC)
        f.write(struct.pack("<I", CKP_VERSION))
        f.write(struct.pack("<I", len(cfg_json)))
        f.write(cfg_json)
        for name, p in model.params.items():
            _write_record(f, "param." + name, p.data)
        for name in sorted(extras or {}):
            _write_record(f, "extra." + name, (extras or {})[name])


def load_checkpoint(path: str | Path) -> tuple[UniteModel, dict[str, np.ndarray]]:
    blob = Path(path).read_bytes()
    off = 0

    def take(n: int) -> bytes:
        nonlocal off
        if off + n > len(blob):
            raise CheckpointError(f"{path}: truncated at byte {off}")
        chunk = blob[off:off + n]
        off += n
        return chunk

    if take(8) != CKP_MAGIC:
        raise CheckpointError(f"{path}: bad magic")
    (version,) = struct.unpack("<I", take(4))
    if version != CKP_VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    (cfg_len,) = struct.unpack("<I", take(4))
    cfg = ModelConfig.from_dict(json.loads(take(cfg_len).decode("utf-8")))
    records: dict[str, np.ndarray] = {}
    while off < len(blob):
        (name_len,) = struct.unpack("<I", take(4))
        name = take(name_len).decode("utf-8")
        (ndim,) = struct.unpack("<I", take(4))
        shape = tuple(struct.unpack("<I", take(4))[0] for _ in range(ndim))
        count = int(np.prod(shape)) if shape else 1
        values = np.frombuffer(take(count * 8), dtype="<f8").reshape(shape)
        records[name] = values.astype(np.float64)

    model = UniteModel(cfg, seed=0)
    for name, p in model.params.items():
        key = "param." + name
        if key not in records:
            raise CheckpointError(f"{path}: missing parameter record '{name}'")
        if records[key].shape != p.data.shape:
            raise CheckpointError(
                f"{path}: parameter '{name}' shape {records[key].shape} "
                f"!= expected {p.data.shape}")
        model.params[name] = Tensor(records[key].copy(), requires_grad=True)
    extras = {k[len("extra."):]: v for k, v in records.items()
              if k.startswith("extra.")}
    return model, extras
