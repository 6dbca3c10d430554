"""Deterministic kinematic world: agents on lane loops and a displacement-driven UAV."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..expert import (
    TARGET_CLASSES,
    AnchorOffset,
    SECTORS,
    normalize_tier,
    sample_initial_offset,
)
from ..geometry import Pose6D, wrap_angle, yaw_matrix
from .scenarios import Lane, Obstacle, get_scenario

SPEED_CEILING = {"vehicle": 70.0, "two_wheeler": 70.0, "pedestrian": 3.0}
# cruise speed range (m/s), yaw-rate limit (rad/s), speed noise (m/s per sqrt(s))
MOTION_PROFILE = {
    "vehicle": ((6.0, 14.0), math.radians(45.0), 1.0),
    "two_wheeler": ((4.0, 10.0), math.radians(60.0), 0.8),
    "pedestrian": ((2.2, 2.9), math.radians(120.0), 0.3),
}
# body extents: (width, height, footprint radius)
BODY = {
    "vehicle": (1.9, 1.5, 1.2),
    "two_wheeler": (0.8, 1.5, 0.6),
    "pedestrian": (0.6, 1.8, 0.3),
}


@dataclass(frozen=True)
class WeatherParams:
    cloudiness: float
    precipitation: float
    deposits: float
    wind: float
    fog_density: float
    fog_distance: float
    wetness: float
    sun_azimuth: float
    sun_altitude: float

    RANGES = {
        "cloudiness": (0.0, 35.0),
        "precipitation": (0.0, 40.0),
        "deposits": (0.0, 30.0),
        "wind": (0.0, 10.0),
        "fog_density": (0.0, 30.0),
        "fog_distance": (100.0, 200.0),
        "wetness": (0.0, 10.0),
        "sun_azimuth": (0.0, 360.0),
        "sun_altitude": (-5.0, 90.0),
    }

    def __post_init__(self):
        for name, (lo, hi) in self.RANGES.items():
            v = getattr(self, name)
            if not lo <= v <= hi:
                raise ValueError(f"weather {name}={v} outside [{lo}, {hi}]")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in self.RANGES], dtype=np.float64)

    @classmethod
    def from_array(cls, values) -> "WeatherParams":
        return cls(*(float(v) for v in values))

    @classmethod
    def clear(cls) -> "WeatherParams":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, 200.0, 0.0, 180.0, 45.0)


def sample_weather(rng) -> WeatherParams:
    return WeatherParams(*(float(rng.uniform(lo, hi)) for lo, hi in WeatherParams.RANGES.values()))


@dataclass(frozen=True)
class EpisodeConfig:
    scenario_id: str = "town02"
    target_class: str = "pedestrian"
    distance_tier: str = "suitable"
    seed: int = 0
    horizon: int = 500
    control_hz: int = 25
    vision_hz: int = 5
    sector: str | None = None
    n_vehicles: int = 6
    n_pedestrians: int = 4

    def __post_init__(self):
        if self.target_class not in TARGET_CLASSES:
            raise ValueError(f"unknown target class {self.target_class!r}")
        object.__setattr__(self, "distance_tier", normalize_tier(self.distance_tier))
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.vision_hz <= 0 or self.control_hz % self.vision_hz:
            raise ValueError("control_hz must be divisible by vision_hz")
        if self.sector is not None and self.sector not in SECTORS:
            raise ValueError(f"unknown sector {self.sector!r}")

    @property
    def dt(self) -> float:
        return 1.0 / self.control_hz

    @property
    def ticks_per_frame(self) -> int:
        return self.control_hz // self.vision_hz


@dataclass(frozen=True)
class AgentState:
    pose: Pose6D
    speed: float
    cls: str
    lane: Lane
    waypoint: int
    cruise_speed: float
    turn_rate: float
    speed_noise: float

    @property
    def width(self) -> float:
        return BODY[self.cls][0]

    @property
    def height(self) -> float:
        return BODY[self.cls][1]

    @property
    def radius(self) -> float:
        return BODY[self.cls][2]


@dataclass(frozen=True)
class WorldState:
    t: int
    uav: Pose6D
    velocity: np.ndarray
    target: AgentState
    distractors: tuple[AgentState, ...]
    obstacles: tuple[Obstacle, ...]
    anchor: AnchorOffset
    weather: WeatherParams
    motion_seed: int
    scenario_id: str = ""
    distance_tier: str = "suitable"
    meta: dict = field(default_factory=dict, compare=False)

    def __eq__(self, other):
        if not isinstance(other, WorldState):
            return NotImplemented
        return (
            self.t == other.t
            and self.uav == other.uav
            and np.array_equal(self.velocity, other.velocity)
            and self.target == other.target
            and self.distractors == other.distractors
            and self.obstacles == other.obstacles
            and self.anchor == other.anchor
            and self.weather == other.weather
            and self.motion_seed == other.motion_seed
        )

    __hash__ = None


def spawn_agent(cls: str, lane: Lane, s: float, rng, cruise_speed: float | None = None) -> AgentState:
    (lo, hi), turn_rate, noise = MOTION_PROFILE[cls]
    x, y, heading, wp = lane.locate(s)
    cruise = float(rng.uniform(lo, hi)) if cruise_speed is None else float(cruise_speed)
    z = BODY[cls][1] / 2.0
    return AgentState(Pose6D(x, y, z, 0.0, 0.0, heading), cruise, cls, lane, wp, cruise, turn_rate, noise)


def target_motion_step(agent: AgentState, dt: float, rng) -> AgentState:
    """Advance an agent one tick along its lane loop.

    Speed relaxes toward the cruise speed with Gaussian noise and is clipped to
    the class ceiling; heading turns toward the next waypoint at a bounded rate
    and only while the agent moves.
    """
    eps = rng.standard_normal()
    speed = agent.speed + 0.5 * (agent.cruise_speed - agent.speed) * dt
    speed += agent.speed_noise * math.sqrt(dt) * eps
    speed = min(max(speed, 0.0), SPEED_CEILING[agent.cls])
    pose = agent.pose
    if speed == 0.0:
        return replace(agent, speed=0.0)
    wx, wy = agent.lane.points[agent.waypoint]
    desired = math.atan2(wy - pose.y, wx - pose.x)
    turn = wrap_angle(desired - pose.yaw)
    max_turn = agent.turn_rate * dt
    yaw = pose.yaw + min(max(turn, -max_turn), max_turn)
    step = speed * dt
    x = pose.x + step * math.cos(yaw)
    y = pose.y + step * math.sin(yaw)
    waypoint = agent.waypoint
    if math.hypot(wx - x, wy - y) < max(step, 0.5):
        waypoint = (waypoint + 1) % len(agent.lane.points)
    return replace(agent, pose=Pose6D(x, y, pose.z, 0.0, 0.0, yaw), speed=speed, waypoint=waypoint)


def _tick_rng(seed: int, t: int):
    return np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, t])


def init_episode(config: EpisodeConfig, scenario_path: str | None = None) -> WorldState:
    scenario = get_scenario(config.scenario_id, scenario_path)
    rng = np.random.default_rng([config.seed & 0xFFFFFFFFFFFFFFFF, 0x5EED])
    weather = sample_weather(rng)
    lane = scenario.lanes[int(rng.integers(len(scenario.lanes)))]
    target = spawn_agent(config.target_class, lane, rng.uniform(0.0, lane.length), rng)
    sector = config.sector or SECTORS[int(rng.integers(len(SECTORS)))]
    anchor = sample_initial_offset(config.target_class, config.distance_tier, sector, rng)
    tp = target.pose
    xy = np.array([tp.x, tp.y]) + yaw_matrix(tp.yaw) @ np.array([anchor.x, anchor.y])
    uav = Pose6D(xy[0], xy[1], tp.z + anchor.z, 0.0, 0.0, tp.yaw + anchor.yaw)

    distractors = []
    kinds = ["vehicle"] * config.n_vehicles + ["pedestrian"] * config.n_pedestrians
    for cls in kinds:
        if cls == "vehicle" and rng.random() < 0.3:
            cls = "two_wheeler"
        for _ in range(50):
            ln = scenario.lanes[int(rng.integers(len(scenario.lanes)))]
            agent = spawn_agent(cls, ln, rng.uniform(0.0, ln.length), rng)
            if math.hypot(agent.pose.x - uav.x, agent.pose.y - uav.y) >= 5.0:
                distractors.append(agent)
                break
    return WorldState(
        t=0,
        uav=uav,
        velocity=np.zeros(4),
        target=target,
        distractors=tuple(distractors),
        obstacles=scenario.obstacles,
        anchor=anchor,
        weather=weather,
        motion_seed=int(rng.integers(2**63)),
        scenario_id=config.scenario_id,
        distance_tier=config.distance_tier,
    )


def step_world(state: WorldState, uav_action, dt: float) -> WorldState:
    """Apply one UAV action (yaw-frame displacement, then yaw change) and move all agents."""
    a = uav_action.as_array() if hasattr(uav_action, "as_array") else np.asarray(uav_action, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"non-finite UAV action {a}")
    uav = state.uav
    R = yaw_matrix(uav.yaw)
    dxy = R @ a[:2]
    z = max(uav.z + a[2], 0.0)
    new_uav = Pose6D(uav.x + dxy[0], uav.y + dxy[1], z, 0.0, 0.0, uav.yaw + a[3])
    body = R.T @ np.array([new_uav.x - uav.x, new_uav.y - uav.y])
    velocity = np.array([body[0], body[1], z - uav.z, a[3]]) / dt

    rng = _tick_rng(state.motion_seed, state.t)
    target = target_motion_step(state.target, dt, rng)
    distractors = tuple(target_motion_step(d, dt, rng) for d in state.distractors)
    return replace(state, t=state.t + 1, uav=new_uav, velocity=velocity, target=target, distractors=distractors)
