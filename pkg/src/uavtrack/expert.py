"""APF expert: anchor regression with perturbations, obstacle repulsion, quantised steps."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import wrap_angle, yaw_matrix

TIERS = ("close", "suitable", "far")
TIER_ALIASES = {"near": "close", "long": "far"}
SECTORS = ("rear", "right_rear", "left_rear")
TARGET_CLASSES = ("vehicle", "two_wheeler", "pedestrian")


@dataclass(frozen=True)
class GranularityProfile:
    z_step: float = 0.35
    yaw_step: float = math.radians(3.5)
    xy_step_vehicle: float = 1.35
    xy_step_pedestrian: float = 0.1

    def __post_init__(self):
        if min(self.z_step, self.yaw_step, self.xy_step_vehicle, self.xy_step_pedestrian) <= 0:
            raise ValueError("granularity steps must be positive")

    def steps(self, target_class: str) -> np.ndarray:
        xy = self.xy_step_pedestrian if target_class == "pedestrian" else self.xy_step_vehicle
        return np.array([xy, xy, self.z_step, self.yaw_step])


@dataclass(frozen=True)
class ApfParams:
    regression_coeff: float = 0.6
    max_repulse: float = 1.5
    min_altitude: float = 0.1
    safety_margin: dict = field(
        default_factory=lambda: {"pedestrian": 0.35, "vehicle": 0.5, "other": 0.15}
    )
    noise_amplitude: float = 1.0
    k_rep: float = 1.0

    def __post_init__(self):
        if self.max_repulse <= 0:
            raise ValueError("max_repulse must be positive")
        if any(m <= 0 for m in self.safety_margin.values()):
            raise ValueError("safety margins must be positive")

    def margin(self, cls: str) -> float:
        if cls == "two_wheeler":
            cls = "vehicle"
        return self.safety_margin.get(cls, self.safety_margin["other"])


@dataclass(frozen=True)
class ActionStep:
    """One control tick: displacement in the UAV yaw frame and a yaw change."""

    dx: float = 0.0
    dy: float = 0.0
    dz: float = 0.0
    dpsi: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.dx, self.dy, self.dz, self.dpsi], dtype=np.float64)

    @classmethod
    def from_array(cls, a) -> "ActionStep":
        a = np.asarray(a, dtype=np.float64)
        return cls(float(a[0]), float(a[1]), float(a[2]), float(a[3]))


# Per (class group, tier): x range, y range, z range, (inner, outer) yaw sector bound in degrees.
INIT_TABLE = {
    ("vehicle", "close"): ((-2.5, -1.75), (-3.0, 3.0), (0.2, 1.5), (10.0, 60.0)),
    ("vehicle", "suitable"): ((-4.0, -1.0), (-2.0, 2.0), (0.3, 2.5), (10.0, 60.0)),
    ("vehicle", "far"): ((-8.0, -2.0), (-1.5, 1.5), (0.6, 5.0), (10.0, 60.0)),
    ("pedestrian", "close"): ((-1.5, -0.5), (-0.5, 0.5), (0.1, 0.7), (8.0, 50.0)),
    ("pedestrian", "suitable"): ((-2.0, -0.8), (-1.0, 1.0), (0.2, 1.5), (8.0, 50.0)),
    ("pedestrian", "far"): ((-4.0, -1.6), (-0.8, 0.8), (0.4, 3.0), (8.0, 50.0)),
}


def normalize_tier(tier: str) -> str:
    tier = TIER_ALIASES.get(tier, tier)
    if tier not in TIERS:
        raise ValueError(f"unknown distance tier {tier!r}; expected one of {TIERS}")
    return tier


def yaw_sector_range(target_class: str, sector: str) -> tuple[float, float]:
    """Yaw perturbation interval in radians for a spawn sector."""
    group = "pedestrian" if target_class == "pedestrian" else "vehicle"
    inner, outer = INIT_TABLE[(group, "close")][3]
    if sector == "rear":
        lo, hi = -inner, inner
    elif sector == "right_rear":
        lo, hi = -outer, -inner
    elif sector == "left_rear":
        lo, hi = inner, outer
    else:
        raise ValueError(f"unknown sector {sector!r}; expected one of {SECTORS}")
    return math.radians(lo), math.radians(hi)


@dataclass(frozen=True)
class AnchorOffset:
    """Desired UAV pose expressed in the target frame (x forward, y left, z up).

    ``yaw_perturbation`` is measured from the line of sight to the target, so
    the UAV keeps the target inside its field of view at every sector.
    """

    x: float
    y: float
    z: float
    yaw_perturbation: float
    sector: str = "rear"

    @property
    def yaw(self) -> float:
        """Anchor heading relative to the target heading."""
        return wrap_angle(math.atan2(-self.y, -self.x) + self.yaw_perturbation)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.yaw])


def sample_initial_offset(target_class: str, distance_tier: str, sector: str, rng) -> AnchorOffset:
    if target_class not in TARGET_CLASSES:
        raise ValueError(f"unknown target class {target_class!r}")
    tier = normalize_tier(distance_tier)
    group = "pedestrian" if target_class == "pedestrian" else "vehicle"
    xr, yr, zr, _ = INIT_TABLE[(group, tier)]
    lo, hi = yaw_sector_range(target_class, sector)
    return AnchorOffset(
        x=float(rng.uniform(*xr)),
        y=float(rng.uniform(*yr)),
        z=float(rng.uniform(*zr)),
        yaw_perturbation=float(rng.uniform(lo, hi)),
        sector=sector,
    )


def quantize_action(raw, gran: GranularityProfile, target_class: str) -> ActionStep:
    """Sign quantiser with a half-step dead zone; at most one step per axis."""
    raw = np.asarray(raw, dtype=np.float64)
    steps = gran.steps(target_class)
    q = np.where(np.abs(raw) >= steps / 2.0, np.sign(raw) * steps, 0.0)
    return ActionStep.from_array(q)


def anchor_error(state, anchor: AnchorOffset) -> np.ndarray:
    """``anchor - current`` relative pose of the UAV, in the target frame."""
    tgt = state.target.pose
    uav = state.uav
    rel_xy = yaw_matrix(tgt.yaw).T @ np.array([uav.x - tgt.x, uav.y - tgt.y])
    current = np.array([rel_xy[0], rel_xy[1], uav.z - tgt.z, wrap_angle(uav.yaw - tgt.yaw)])
    err = anchor.as_array() - current
    err[3] = wrap_angle(err[3])
    return err


def obstacle_clearances(state):
    """Yield ``(clearance, unit_away_xy, cls)`` for every obstacle-like body."""
    uav = state.uav
    bodies = [(a.pose.x, a.pose.y, a.radius, a.height, a.cls) for a in (state.target, *state.distractors)]
    bodies += [(o.x, o.y, o.radius, o.height, o.cls) for o in state.obstacles]
    for x, y, radius, height, cls in bodies:
        dxy = np.array([uav.x - x, uav.y - y])
        horiz = float(np.hypot(*dxy))
        above = max(0.0, uav.z - height)
        clearance = math.hypot(max(horiz - radius, 0.0), above) if horiz > radius else above
        away = dxy / horiz if horiz > 1e-9 else np.array([1.0, 0.0])
        yield clearance, away, cls


def repulsion(state, params: ApfParams) -> np.ndarray:
    """Horizontal repulsive vector in world xy; its norm never exceeds ``max_repulse``."""
    total = np.zeros(2)
    for d, away, cls in obstacle_clearances(state):
        margin = params.margin(cls)
        if d >= margin:
            continue
        if d <= 0.0:
            mag = params.max_repulse
        else:
            mag = min(params.k_rep * (1.0 / d - 1.0 / margin), params.max_repulse)
        total += mag * away
    norm = float(np.hypot(*total))
    if norm > params.max_repulse:
        total *= params.max_repulse / norm
    return total


def breaches_margin(state, params: ApfParams) -> bool:
    return any(d < params.margin(cls) for d, _, cls in obstacle_clearances(state))


def apf_command(state, anchor: AnchorOffset, params: ApfParams, gran: GranularityProfile, rng) -> ActionStep:
    target_class = state.target.cls
    err = anchor_error(state, anchor)
    k = params.regression_coeff
    world_xy = yaw_matrix(state.target.pose.yaw) @ (k * err[:2])
    raw = np.array([0.0, 0.0, k * err[2], k * err[3]])
    steps = gran.steps(target_class)
    # always consume the same draws so streams stay aligned across branches
    noise = rng.uniform(-1.0, 1.0, size=4) * params.noise_amplitude * steps
    if breaches_margin(state, params):
        world_xy = world_xy + repulsion(state, params)
    else:
        raw += noise
    raw[:2] += yaw_matrix(state.uav.yaw).T @ world_xy
    step = quantize_action(raw, gran, target_class)
    if state.uav.z + step.dz < params.min_altitude:
        step = ActionStep(step.dx, step.dy, gran.z_step, step.dpsi)
    return step
