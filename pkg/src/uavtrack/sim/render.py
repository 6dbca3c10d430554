"""Rectangle rasteriser standing in for the RGB camera."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import CameraModel, camera_pose, project_point

TARGET_INTENSITY = 255.0
CLASS_INTENSITY = {"vehicle": 110.0, "two_wheeler": 130.0, "pedestrian": 150.0}
FOG_NOISE_SCALE = 8.0


@dataclass(frozen=True)
class RasterFrame:
    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self):
        if self.pixels.shape != (self.height, self.width):
            raise ValueError(f"pixel grid {self.pixels.shape} does not match {self.height}x{self.width}")

    def __eq__(self, other):
        if not isinstance(other, RasterFrame):
            return NotImplemented
        return self.width == other.width and self.height == other.height and np.array_equal(self.pixels, other.pixels)

    __hash__ = None

    @classmethod
    def black(cls, width: int, height: int) -> "RasterFrame":
        return cls(width, height, np.zeros((height, width), dtype=np.uint8))


def _coverage(lo: float, hi: float, n: int) -> np.ndarray:
    """Fraction of each unit cell [i, i+1) covered by the interval [lo, hi]."""
    edges = np.arange(n, dtype=np.float64)
    return np.clip(np.minimum(hi, edges + 1.0) - np.maximum(lo, edges), 0.0, 1.0)


def agent_box(state, cam: CameraModel, agent):
    """Projected ``(u0, u1, v0, v1, depth)`` of an agent, or None when it is behind the camera."""
    cpose = camera_pose(state.uav, cam)
    u, v, depth, _ = project_point(cpose, cam, agent.pose.position)
    if depth <= 0.05:
        return None
    half_w = 0.5 * cam.focal * agent.width / depth
    half_h = 0.5 * cam.focal * agent.height / depth
    return u - half_w, u + half_w, v - half_h, v + half_h, depth


def render_raster(state, cam: CameraModel, noise_scale: float = FOG_NOISE_SCALE) -> RasterFrame:
    """Draw every agent as an anti-aliased filled rectangle, far to near.

    The target is drawn brightest.  Fog adds uniform noise whose amplitude
    grows with fog density; the noise stream is keyed on the world state so
    rendering stays a pure function.
    """
    canvas = np.zeros((cam.height, cam.width), dtype=np.float64)
    items = []
    for agent, is_target in [(state.target, True)] + [(d, False) for d in state.distractors]:
        box = agent_box(state, cam, agent)
        if box is None:
            continue
        intensity = TARGET_INTENSITY if is_target else CLASS_INTENSITY[agent.cls]
        items.append((box[4], box[:4], intensity))
    items.sort(key=lambda it: -it[0])
    for _, (u0, u1, v0, v1), intensity in items:
        if u1 <= 0 or v1 <= 0 or u0 >= cam.width or v0 >= cam.height:
            continue
        cov = np.outer(_coverage(v0, v1, cam.height), _coverage(u0, u1, cam.width))
        canvas = canvas * (1.0 - cov) + intensity * cov
    amp = noise_scale * state.weather.fog_density / 30.0
    if amp > 0:
        rng = np.random.default_rng([state.motion_seed & 0xFFFFFFFFFFFFFFFF, state.t, 0xF06])
        canvas = canvas + rng.uniform(0.0, amp, size=canvas.shape)
    pixels = np.clip(np.rint(canvas), 0, 255).astype(np.uint8)
    return RasterFrame(cam.width, cam.height, pixels)
