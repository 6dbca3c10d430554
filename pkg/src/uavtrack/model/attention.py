"""Text-to-current-frame attention maps for inspection and plotting."""

from __future__ import annotations

import csv
import warnings

import numpy as np

from .policy import ModelConfig, attention_maps

LAST_LAYERS = 4


def export_attention(params: dict, cfg: ModelConfig, frames, token_ids, last_layers: int = LAST_LAYERS) -> np.ndarray:
    """Attention from text tokens to current-frame visual tokens, ``(text_len, n_cur)``.

    Averages the last ``last_layers`` encoder layers and all heads, keeps the
    current-frame key columns and renormalizes each row to sum to one.
    """
    frames = np.asarray(frames)
    if frames.ndim == 4:
        if frames.shape[0] != 1:
            raise ValueError("export_attention takes a single observation")
        frames = frames[0]
    ids = np.asarray(token_ids).reshape(1, -1)
    maps = attention_maps(params, cfg, frames, ids)
    if len(maps) < last_layers:
        warnings.warn(f"model has {len(maps)} layers, averaging all of them instead of the last {last_layers}", stacklevel=2)
        last_layers = len(maps)
    att = np.mean([m[0].astype(np.float64).mean(axis=0) for m in maps[-last_layers:]], axis=0)  # (T, T)
    cur0 = cfg.n_visual - cfg.n_cur
    sub = att[cfg.n_visual : cfg.n_visual + cfg.text_len, cur0 : cfg.n_visual]
    return sub / sub.sum(axis=1, keepdims=True)


def write_attention_csv(path, matrix: np.ndarray, tokens=None) -> None:
    """One row per text position; the first column holds the token label."""
    matrix = np.asarray(matrix)
    labels = list(tokens) if tokens is not None else [str(i) for i in range(matrix.shape[0])]
    labels += [""] * (matrix.shape[0] - len(labels))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["token"] + [f"v{j}" for j in range(matrix.shape[1])])
        for lab, row in zip(labels, matrix):
            w.writerow([lab] + [f"{x:.8g}" for x in row])


def read_attention_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return [r[0] for r in rows[1:]], np.array([[float(x) for x in r[1:]] for r in rows[1:]])
