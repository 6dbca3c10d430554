"""Tracking validity, fatal-failure detection and SR/ATF aggregation."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from ..expert import normalize_tier
from ..geometry import CameraModel, camera_pose, project_point

D_MAX = {
    ("vehicle", "close"): 25.0,
    ("vehicle", "suitable"): 35.0,
    ("vehicle", "far"): 40.0,
    ("pedestrian", "close"): 10.0,
    ("pedestrian", "suitable"): 15.0,
    ("pedestrian", "far"): 20.0,
}


@dataclass(frozen=True)
class TrackingCriteria:
    d_max: dict = field(default_factory=lambda: dict(D_MAX))
    d_min: float = 0.0
    tau: int = 15
    horizon: int = 500
    replan_interval: int = 5

    def __post_init__(self):
        if self.tau < 1:
            raise ValueError("tau must be >= 1")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.replan_interval < 1:
            raise ValueError("replan_interval must be >= 1")
        for key, hi in self.d_max.items():
            if not self.d_min < hi:
                raise ValueError(f"d_min {self.d_min} must be below d_max {hi} for {key}")

    def max_distance(self, target_class: str, tier: str) -> float:
        group = "pedestrian" if target_class == "pedestrian" else "vehicle"
        return self.d_max[(group, normalize_tier(tier))]


def target_distance(state) -> float:
    u, t = state.uav, state.target.pose
    return math.dist((u.x, u.y, u.z), (t.x, t.y, t.z))


def target_in_fov(state, cam: CameraModel) -> bool:
    return project_point(camera_pose(state.uav, cam), cam, state.target.pose.position)[3]


def is_tracked(state, cam: CameraModel, criteria: TrackingCriteria, tier: str | None = None) -> bool:
    """Target centre in frame and ``d_min <= d <= d_max`` (both bounds inclusive)."""
    tier = tier or state.distance_tier
    d = target_distance(state)
    hi = criteria.max_distance(state.target.cls, tier)
    return criteria.d_min <= d <= hi and target_in_fov(state, cam)


def detect_fatal_failure(validity, tau: int = 15) -> int | None:
    """1-based step of the ``tau``-th consecutive invalid step, or None."""
    run = 0
    for step, ok in enumerate(validity, 1):
        run = 0 if ok else run + 1
        if run >= tau:
            return step
    return None


@dataclass
class EpisodeLog:
    """Per-step tracking record; steps are numbered from 1."""

    valid: np.ndarray
    distance: np.ndarray | None = None
    in_fov: np.ndarray | None = None
    horizon: int = 500
    tau: int = 15
    scenario: str = ""
    target_class: str = "pedestrian"
    tier: str = "suitable"
    split: str = "seen"
    prompt: str = ""
    seed: int = 0

    def __post_init__(self):
        self.valid = np.asarray(self.valid, dtype=bool)

    @property
    def padded_valid(self) -> np.ndarray:
        """Valid flags over exactly ``horizon`` steps; steps missing from a short log count as invalid."""
        out = np.zeros(self.horizon, dtype=bool)
        n = min(len(self.valid), self.horizon)
        out[:n] = self.valid[:n]
        return out

    @property
    def fatal_step(self) -> int | None:
        return detect_fatal_failure(self.padded_valid, self.tau)

    @property
    def success(self) -> bool:
        return self.fatal_step is None

    @property
    def track_indicator(self) -> np.ndarray:
        """Valid flags over the horizon with every step from the fatal one onward zeroed."""
        ind = self.padded_valid
        f = self.fatal_step
        if f is not None:
            ind[f - 1:] = False
        return ind

    @property
    def tracked_frames(self) -> int:
        return int(self.track_indicator.sum())

    @property
    def key(self) -> tuple[str, str, str, str]:
        return (self.scenario, self.target_class, self.tier, self.split)


@dataclass(frozen=True)
class GroupMetrics:
    n: int
    successes: int
    sr: float
    atf: float


def _aggregate(logs) -> GroupMetrics:
    n = len(logs)
    successes = sum(1 for lg in logs if lg.success)
    atf = sum(lg.tracked_frames for lg in logs) / n
    return GroupMetrics(n, successes, successes / n, atf)


@dataclass
class MetricsReport:
    groups: dict
    overall: GroupMetrics

    def rows(self):
        for key in sorted(self.groups):
            m = self.groups[key]
            yield (*key, m.n, m.sr, m.atf)


def compute_metrics(logs) -> MetricsReport:
    logs = list(logs)
    if not logs:
        raise ValueError("compute_metrics needs at least one episode log")
    grouped = defaultdict(list)
    for lg in logs:
        grouped[lg.key].append(lg)
    return MetricsReport({k: _aggregate(v) for k, v in grouped.items()}, _aggregate(logs))
