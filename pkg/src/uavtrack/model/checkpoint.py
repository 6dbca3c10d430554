"""UTCK checkpoint container: JSON metadata blob plus named float32 tensors.

Layout (little-endian)::

    b"UTCK"  u32 version
    u32 len + utf-8 JSON {model_config, norm_stats, extra}
    u32 n_tensors
    n_tensors x (u32 name_len, utf-8 name, u32 ndim, u32[ndim] shape, f32[prod(shape)] data)
"""

from __future__ import annotations

import json
import struct

import numpy as np

from ..data.layout import NormStats
from .autodiff import Tensor
from .policy import ModelConfig

MAGIC = b"UTCK"
VERSION = 1


def save_checkpoint(path, params: dict, cfg: ModelConfig, stats: NormStats, ema: dict | None = None, extra: dict | None = None) -> None:
    tensors = {k: (v.data if isinstance(v, Tensor) else np.asarray(v)) for k, v in params.items()}
    if ema is not None:
        tensors.update({"ema/" + k: np.asarray(v) for k, v in ema.items()})
    meta = json.dumps({"model_config": cfg.to_dict(), "norm_stats": stats.to_json(), "extra": extra or {}}).encode()
    parts = [MAGIC, struct.pack("<II", VERSION, len(meta)), meta, struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        raw = name.encode()
        parts.append(struct.pack("<I", len(raw)) + raw + struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    try:
        with open(path, "wb") as fh:
            fh.write(b"".join(parts))
    except OSError as exc:
        raise OSError(f"failed to write checkpoint {path}: {exc}") from exc


def load_checkpoint(path):
    """Returns ``(params, ema_or_None, cfg, stats, extra)``; tensors come back as float32."""
    with open(path, "rb") as fh:
        buf = fh.read()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(buf):
            raise ValueError(f"{path}: unexpected end of checkpoint data")
        out = buf[pos : pos + n]
        pos += n
        return out

    if take(4) != MAGIC:
        raise ValueError(f"{path}: not a UTCK checkpoint")
    version, meta_len = struct.unpack("<II", take(8))
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    meta = json.loads(take(meta_len))
    (count,) = struct.unpack("<I", take(4))
    params, ema = {}, {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4))
        name = take(name_len).decode()
        (ndim,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        n = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(take(4 * n), dtype="<f4").reshape(shape).astype(np.float32)
        if name.startswith("ema/"):
            ema[name[4:]] = arr
        else:
            params[name] = Tensor(arr, requires_grad=True, name=name)
    cfg = ModelConfig.from_dict(meta["model_config"])
    stats = NormStats.from_json(meta["norm_stats"])
    return params, (ema or None), cfg, stats, meta.get("extra", {})
