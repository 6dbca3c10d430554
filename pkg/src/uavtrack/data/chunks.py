"""Action chunks in the decision-time yaw frame and black-padded frame stacks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import wrap_angle, yaw_matrix

CHUNK_LEN = 25
HISTORY = 3


@dataclass(frozen=True)
class ActionChunk:
    """``k x 4`` per-tick displacements ``(dx, dy, dz, dpsi)`` in the yaw frame at the chunk start."""

    steps: np.ndarray

    def __post_init__(self):
        steps = np.asarray(self.steps, dtype=np.float64)
        if steps.ndim != 2 or steps.shape[1] != 4:
            raise ValueError(f"action chunk must be k x 4, got {steps.shape}")
        if not np.all(np.isfinite(steps)):
            raise ValueError("action chunk contains non-finite values")
        object.__setattr__(self, "steps", steps)

    @property
    def k(self) -> int:
        return self.steps.shape[0]

    def __eq__(self, other):
        return isinstance(other, ActionChunk) and np.array_equal(self.steps, other.steps)

    __hash__ = None


def _pose_rows(trajectory) -> np.ndarray:
    rows = [
        (p.x, p.y, p.z, p.yaw) if hasattr(p, "yaw") else tuple(p)
        for p in trajectory
    ]
    arr = np.asarray(rows, dtype=np.float64).reshape(-1, 4)
    if len(arr) == 0:
        raise ValueError("trajectory is empty")
    return arr


def compute_action_chunk(trajectory, t: int, k: int = CHUNK_LEN) -> ActionChunk:
    """Per-tick UAV displacements from tick ``t`` onward, in the tick-``t`` yaw frame.

    ``trajectory`` holds ``(x, y, z, yaw)`` rows or poses.  Ticks past the end
    repeat the final pose, so the tail of the chunk is zero.
    """
    poses = _pose_rows(trajectory)
    if not 0 <= t < len(poses):
        raise IndexError(f"tick {t} outside trajectory of length {len(poses)}")
    idx = np.minimum(np.arange(t, t + k + 1), len(poses) - 1)
    seg = poses[idx]
    d = np.diff(seg, axis=0)
    rot = yaw_matrix(poses[t, 3]).T
    out = np.empty((k, 4))
    out[:, :2] = d[:, :2] @ rot.T
    out[:, 2] = d[:, 2]
    out[:, 3] = [wrap_angle(a) for a in d[:, 3]]
    return ActionChunk(out)


def integrate_chunk(start, chunk) -> np.ndarray:
    """Pose ``(x, y, z, yaw)`` reached by applying every step of ``chunk`` from ``start``."""
    start = np.asarray(start.position.tolist() + [start.yaw] if hasattr(start, "yaw") else start, dtype=np.float64)
    steps = chunk.steps if isinstance(chunk, ActionChunk) else np.asarray(chunk, dtype=np.float64)
    rot = yaw_matrix(start[3])
    out = start.copy()
    out[:2] += rot @ steps[:, :2].sum(axis=0)
    out[2] += steps[:, 2].sum()
    out[3] += steps[:, 3].sum()
    return out


def rotate_steps(steps: np.ndarray, from_yaw: float, to_yaw: float) -> np.ndarray:
    """Re-express horizontal displacements given in one yaw frame in another."""
    steps = np.array(steps, dtype=np.float64)
    R = yaw_matrix(to_yaw).T @ yaw_matrix(from_yaw)
    steps[..., :2] = steps[..., :2] @ R.T
    return steps


def make_frame_stack(frames, t: int, history: int = HISTORY) -> list[np.ndarray]:
    """Frames ``[t - history, ..., t]``; slots before the episode start are all-zero."""
    if t < 0:
        raise ValueError("vision tick must be non-negative")
    if t >= len(frames):
        raise IndexError(f"vision tick {t} beyond {len(frames)} frames")
    black = np.zeros_like(np.asarray(frames[t]))
    return [np.asarray(frames[i]) if i >= 0 else black for i in range(t - history, t + 1)]


@dataclass(frozen=True)
class FrameSample:
    frames: tuple[np.ndarray, ...]
    state: np.ndarray
    pose: np.ndarray
    chunk: ActionChunk
    prompt: str
    timestamp: float
    frame_index: int
    episode_index: int
    task_index: int

    def __post_init__(self):
        if len(self.frames) != HISTORY + 1:
            raise ValueError(f"a frame sample holds exactly {HISTORY + 1} frames")

    @property
    def black_frames(self) -> int:
        return sum(1 for f in self.frames if not f.any())
