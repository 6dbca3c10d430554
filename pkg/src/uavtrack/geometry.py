"""Rigid-body poses, Euler rotations, egocentric alignment and pinhole projection.

Conventions used throughout the package:

* world frame is right-handed with z up;
* a body (or camera) looks along its own +x axis, +y points left, +z up;
* Euler angles compose intrinsically as yaw (about z), then pitch (about y),
  then roll (about x).  Positive pitch raises the nose, so a camera pitched
  at -15 degrees looks down;
* every angle is wrapped into (-pi, pi].
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Pose6D",
    "CameraModel",
    "RelativePose",
    "wrap_angle",
    "rotation_from_euler",
    "yaw_matrix",
    "world_to_ego",
    "camera_pose",
    "relative_pose",
    "project_point",
    "preprocess_frame",
]


def wrap_angle(a):
    """Wrap an angle (or array of angles) into (-pi, pi]."""
    w = np.mod(-np.asarray(a, dtype=np.float64) + math.pi, 2.0 * math.pi)
    w = math.pi - w
    if np.ndim(w) == 0:
        return float(w)
    return w


@dataclass(frozen=True)
class Pose6D:
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0

    def __post_init__(self):
        for name in ("roll", "pitch", "yaw"):
            object.__setattr__(self, name, wrap_angle(getattr(self, name)))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=np.float64)


@dataclass(frozen=True)
class CameraModel:
    mount_offset: tuple[float, float, float] = (0.0, 0.0, -0.5)
    mount_pitch: float = math.radians(-15.0)
    hfov: float = math.radians(135.0)
    width: int = 80
    height: int = 60

    def __post_init__(self):
        if not 0.0 < self.hfov < math.pi:
            raise ValueError(f"hfov must lie in (0, pi), got {self.hfov}")
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"image size must be positive, got {self.width}x{self.height}")

    @property
    def focal(self) -> float:
        return (self.width / 2.0) / math.tan(self.hfov / 2.0)

    @classmethod
    def full_scale(cls) -> "CameraModel":
        return cls(width=800, height=600)


@dataclass(frozen=True)
class RelativePose:
    dx: float
    dy: float
    dz: float
    dpsi: float

    def __post_init__(self):
        object.__setattr__(self, "dpsi", wrap_angle(self.dpsi))

    def as_array(self) -> np.ndarray:
        return np.array([self.dx, self.dy, self.dz, self.dpsi], dtype=np.float64)


def _rz(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _ry(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rx(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rotation_from_euler(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """World-to-body rotation for intrinsic yaw-pitch-roll angles.

    The body-to-world rotation is ``Rz(yaw) @ Ry(-pitch) @ Rx(roll)``; the
    negated pitch makes positive pitch tilt the +x axis upward.  The returned
    matrix is its transpose, so ``R @ (p_world - origin)`` yields body
    coordinates.
    """
    body_to_world = _rz(yaw) @ _ry(-pitch) @ _rx(roll)
    return body_to_world.T


def yaw_matrix(yaw: float) -> np.ndarray:
    """2-D rotation taking yaw-frame (x forward, y left) vectors to world xy."""
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s], [s, c]])


def world_to_ego(camera_pose: Pose6D, points, direction: str = "forward") -> np.ndarray:
    """Map points between world and egocentric coordinates.

    ``forward`` computes ``R @ (p - origin)``; ``inverse`` computes
    ``R.T @ p + origin`` and undoes ``forward``.
    """
    pts = np.asarray(points, dtype=np.float64)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    R = rotation_from_euler(camera_pose.roll, camera_pose.pitch, camera_pose.yaw)
    origin = camera_pose.position
    if direction == "forward":
        out = (pts - origin) @ R.T
    elif direction == "inverse":
        out = pts @ R + origin
    else:
        raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")
    return out[0] if single else out


def camera_pose(uav: Pose6D, cam: CameraModel) -> Pose6D:
    """Pose of a camera rigidly mounted under a UAV with fixed roll and pitch."""
    off = np.asarray(cam.mount_offset, dtype=np.float64)
    R_bw = _rz(uav.yaw)
    pos = uav.position + R_bw @ off
    return Pose6D(pos[0], pos[1], pos[2], 0.0, cam.mount_pitch, uav.yaw)


def relative_pose(uav_camera_pose: Pose6D, target_pose: Pose6D) -> RelativePose:
    """Target position in the camera frame plus the horizontal yaw offset."""
    d = world_to_ego(uav_camera_pose, target_pose.position)
    return RelativePose(d[0], d[1], d[2], target_pose.yaw - uav_camera_pose.yaw)


def project_point(camera_pose: Pose6D, cam: CameraModel, world_point):
    """Pinhole projection.  Returns ``(u, v, depth, in_frame)``.

    Behind-camera points get finite but meaningless pixel coordinates and
    ``in_frame=False``.
    """
    x, y, z = world_to_ego(camera_pose, world_point)
    depth = float(x)
    f = cam.focal
    denom = depth if depth > 1e-9 else 1e-9
    u = cam.width / 2.0 - f * y / denom
    v = cam.height / 2.0 - f * z / denom
    in_frame = depth > 0.0 and 0.0 <= u < cam.width and 0.0 <= v < cam.height
    return float(u), float(v), depth, bool(in_frame)


@functools.lru_cache(maxsize=32)
def _area_weights(n_in: int, n_out: int) -> np.ndarray:
    """Box-filter resampling matrix (n_out x n_in); rows sum to one."""
    scale = n_in / n_out
    W = np.zeros((n_out, n_in))
    for i in range(n_out):
        lo, hi = i * scale, (i + 1) * scale
        j0, j1 = int(math.floor(lo)), min(int(math.ceil(hi)), n_in)
        for j in range(j0, j1):
            W[i, j] = min(hi, j + 1) - max(lo, j)
        W[i] /= scale
    W.setflags(write=False)
    return W


def preprocess_layout(width: int, height: int, target: int) -> tuple[int, int, int]:
    """(content_height, pad_top, pad_bottom) for letterboxing into target x target."""
    if height > width:
        raise ValueError(f"unsupported aspect: {width}x{height} is portrait")
    content_h = int(round(height * target / width))
    pad = target - content_h
    return content_h, pad // 2, pad - pad // 2


def preprocess_batch(pixels, target: int) -> np.ndarray:
    """``preprocess_frame`` over a ``(N, h, w)`` stack of uint8 frames."""
    pixels = np.asarray(pixels)
    n, h, w = pixels.shape
    content_h, top, _ = preprocess_layout(w, h, target)
    out = np.zeros((n, target, target), dtype=np.uint8)
    if content_h > 0:
        if (h, w) == (content_h, target):
            content = pixels.astype(np.uint8)
        else:
            rows = _area_weights(h, content_h)
            cols = _area_weights(w, target)
            content = np.clip(np.rint(rows @ pixels.astype(np.float64) @ cols.T), 0, 255)
        out[:, top:top + content_h] = content
    return out


def preprocess_frame(frame, target: int):
    """Scale a landscape frame to ``target`` wide and zero-pad rows to a square.

    Accepts a ``RasterFrame`` or a 2-D uint8 array and returns the same kind.
    Resampling averages pixel areas so thin objects keep their energy.
    """
    pixels = np.asarray(getattr(frame, "pixels", frame))
    out = preprocess_batch(pixels[None], target)[0]
    if hasattr(frame, "pixels"):
        return type(frame)(width=target, height=target, pixels=out)
    return out
