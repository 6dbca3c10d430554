"""Chunked on-disk dataset layout with JSON-lines metadata and z-score statistics."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import language
from .chunks import CHUNK_LEN
from .utd import EpisodeRecord, read_episode, write_episode

STD_FLOOR = 1e-6
FIELDS = ("action", "pose", "state")


@dataclass(frozen=True)
class Moments:
    """Count, mean and centred sum of squares, mergeable across episodes."""

    count: int
    mean: np.ndarray
    m2: np.ndarray

    @classmethod
    def of(cls, rows) -> "Moments":
        rows = np.asarray(rows, dtype=np.float64).reshape(-1, 4)
        if len(rows) == 0:
            return cls(0, np.zeros(4), np.zeros(4))
        mean = rows.mean(axis=0)
        return cls(len(rows), mean, ((rows - mean) ** 2).sum(axis=0))

    def merge(self, other: "Moments") -> "Moments":
        n = self.count + other.count
        if n == 0:
            return self
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / n
        m2 = self.m2 + other.m2 + delta**2 * self.count * other.count / n
        return Moments(n, mean, m2)

    @property
    def std(self) -> np.ndarray:
        var = self.m2 / self.count if self.count else np.zeros(4)
        return np.maximum(np.sqrt(var), STD_FLOOR)

    def to_json(self) -> dict:
        return {"count": self.count, "mean": self.mean.tolist(), "m2": self.m2.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_json(cls, d) -> "Moments":
        return cls(int(d["count"]), np.asarray(d["mean"], dtype=np.float64), np.asarray(d["m2"], dtype=np.float64))


@dataclass(frozen=True)
class NormStats:
    """Per-dimension z-score parameters for action chunks, pose targets and states."""

    action_mean: np.ndarray
    action_std: np.ndarray
    pose_mean: np.ndarray
    pose_std: np.ndarray
    state_mean: np.ndarray
    state_std: np.ndarray

    def __post_init__(self):
        for name in ("action_std", "pose_std", "state_std"):
            object.__setattr__(self, name, np.maximum(np.asarray(getattr(self, name), dtype=np.float64), STD_FLOOR))
        for name in ("action_mean", "pose_mean", "state_mean"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))

    @classmethod
    def identity(cls) -> "NormStats":
        z, o = np.zeros(4), np.ones(4)
        return cls(z, o, z, o, z, o)

    def norm(self, kind: str, x):
        return (np.asarray(x) - getattr(self, f"{kind}_mean")) / getattr(self, f"{kind}_std")

    def denorm(self, kind: str, x):
        return np.asarray(x) * getattr(self, f"{kind}_std") + getattr(self, f"{kind}_mean")

    def to_json(self) -> dict:
        return {k: getattr(self, k).tolist() for k in self.__dataclass_fields__}

    @classmethod
    def from_json(cls, d) -> "NormStats":
        return cls(**{k: np.asarray(d[k], dtype=np.float64) for k in cls.__dataclass_fields__})

    def __eq__(self, other):
        return isinstance(other, NormStats) and all(
            np.array_equal(getattr(self, k), getattr(other, k)) for k in self.__dataclass_fields__
        )

    __hash__ = None


def episode_moments(record: EpisodeRecord) -> dict:
    v = record.vision
    return {
        "action": Moments.of(v["chunk"].reshape(-1, 4)),
        "pose": Moments.of(v["pose"]),
        "state": Moments.of(v["state"]),
    }


def _stats_from_moments(moments) -> NormStats:
    moments = list(moments)
    if not moments or sum(m["action"].count for m in moments) == 0:
        raise ValueError("norm statistics need at least one sample")
    merged = {}
    for f in FIELDS:
        acc = moments[0][f]
        for m in moments[1:]:
            acc = acc.merge(m[f])
        merged[f] = acc
    return NormStats(
        merged["action"].mean, merged["action"].std,
        merged["pose"].mean, merged["pose"].std,
        merged["state"].mean, merged["state"].std,
    )


def compute_norm_stats(dataset) -> NormStats:
    """Z-score statistics over every chunk step, pose target and state in ``dataset``.

    ``dataset`` is an iterable of episode records or a mapping with ``action``,
    ``pose`` and ``state`` arrays of 4-wide rows.
    """
    if isinstance(dataset, dict):
        return _stats_from_moments([{f: Moments.of(dataset[f]) for f in FIELDS}])
    return _stats_from_moments(episode_moments(r) for r in dataset)


def episode_path(root, index: int, chunk_size: int = 1000) -> Path:
    return Path(root) / "data" / f"chunk-{index // chunk_size:03d}" / f"episode_{index:06d}.utd"


def build_dataset_layout(episodes, out_dir, chunk_size: int = 1000, force: bool = False, vocab=None, info_extra: dict | None = None) -> NormStats:
    """Write episodes under ``data/chunk-XXX`` plus the four ``meta`` files."""
    episodes = list(episodes)
    if not episodes:
        raise ValueError("dataset layout needs at least one episode")
    if chunk_size < 1:
        raise ValueError("chunk_size must be positive")
    out = Path(out_dir)
    if out.exists() and any(out.iterdir()) and not force:
        raise FileExistsError(f"{out} is not empty; pass force to overwrite")
    meta = out / "meta"
    meta.mkdir(parents=True, exist_ok=True)
    vocab = vocab if vocab is not None else language.generate_vocabulary()

    moments = []
    with open(meta / "episodes.jsonl", "w") as ep_fh, open(meta / "episodes_stats.jsonl", "w") as st_fh:
        for i, rec in enumerate(episodes):
            path = episode_path(out, i, chunk_size)
            path.parent.mkdir(parents=True, exist_ok=True)
            write_episode(rec, path)
            row = {
                "episode_index": i,
                "tasks": [rec.prompt],
                "length": rec.n_control,
                "frames": rec.n_vision,
                "path": str(path.relative_to(out)),
            }
            ep_fh.write(json.dumps(row) + "\n")
            m = episode_moments(rec)
            moments.append(m)
            st_fh.write(json.dumps({"episode_index": i, "stats": {f: m[f].to_json() for f in FIELDS}}) + "\n")

    language.write_task_table(meta / "tasks.jsonl", vocab)
    stats = _stats_from_moments(moments)
    height, width = episodes[0].frame_shape
    info = {
        "format": "UTD1",
        "total_episodes": len(episodes),
        "total_frames": sum(r.n_vision for r in episodes),
        "total_control_ticks": sum(r.n_control for r in episodes),
        "total_tasks": len(vocab),
        "chunks_size": chunk_size,
        "total_chunks": -(-len(episodes) // chunk_size),
        "control_hz": int(episodes[0].config.get("control_hz", 25)),
        "vision_hz": int(episodes[0].config.get("vision_hz", 5)),
        "action_shape": [episodes[0].k, 4],
        "state_shape": [4],
        "pose_shape": [4],
        "frame_shape": [height, width],
        "history_frames": 3,
        "norm_stats": stats.to_json(),
        **(info_extra or {}),
    }
    with open(meta / "info.json", "w") as fh:
        json.dump(info, fh, indent=2)
    return stats


def load_info(root) -> dict:
    with open(Path(root) / "meta" / "info.json") as fh:
        return json.load(fh)


def load_norm_stats(root) -> NormStats:
    """Aggregate the per-episode entries of ``episodes_stats.jsonl``."""
    moments = []
    with open(Path(root) / "meta" / "episodes_stats.jsonl") as fh:
        for line in fh:
            stats = json.loads(line)["stats"]
            moments.append({f: Moments.from_json(stats[f]) for f in FIELDS})
    return _stats_from_moments(moments)


def load_dataset(root) -> list[EpisodeRecord]:
    root = Path(root)
    out = []
    with open(root / "meta" / "episodes.jsonl") as fh:
        for line in fh:
            row = json.loads(line)
            out.append(read_episode(root / row["path"]))
    return out


def count_episode_files(root) -> int:
    return sum(1 for _, _, files in os.walk(Path(root) / "data") for f in files if f.endswith(".utd"))


__all__ = [
    "CHUNK_LEN",
    "Moments",
    "NormStats",
    "build_dataset_layout",
    "compute_norm_stats",
    "count_episode_files",
    "episode_path",
    "load_dataset",
    "load_info",
    "load_norm_stats",
]
