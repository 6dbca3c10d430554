"""Scenario presets: lane loops and static obstacles, read from a plain-text file."""

from __future__ import annotations

import functools
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class Obstacle:
    x: float
    y: float
    radius: float
    height: float
    cls: str = "other"


@dataclass(frozen=True)
class Lane:
    points: tuple[tuple[float, float], ...]

    @functools.cached_property
    def _segments(self):
        pts = np.asarray(self.points + (self.points[0],), dtype=np.float64)
        seg = np.diff(pts, axis=0)
        lengths = np.hypot(seg[:, 0], seg[:, 1])
        return pts, lengths, np.concatenate([[0.0], np.cumsum(lengths)])

    @property
    def length(self) -> float:
        return float(self._segments[2][-1])

    def locate(self, s: float) -> tuple[float, float, float, int]:
        """Point, heading and index of the next waypoint at arc length ``s``."""
        pts, lengths, cum = self._segments
        s = float(s) % self.length
        i = int(np.searchsorted(cum, s, side="right") - 1)
        i = min(i, len(lengths) - 1)
        frac = (s - cum[i]) / lengths[i]
        p = pts[i] + frac * (pts[i + 1] - pts[i])
        heading = float(np.arctan2(pts[i + 1, 1] - pts[i, 1], pts[i + 1, 0] - pts[i, 0]))
        return float(p[0]), float(p[1]), heading, (i + 1) % len(self.points)


@dataclass(frozen=True)
class Scenario:
    name: str
    group: str
    lanes: tuple[Lane, ...]
    obstacles: tuple[Obstacle, ...]


def parse_scenarios(text: str) -> dict[str, Scenario]:
    presets: dict[str, Scenario] = {}
    current = None

    def close():
        if current is not None:
            name, group, lanes, obstacles = current
            if not lanes:
                raise ValueError(f"preset {name!r} has no lanes")
            presets[name] = Scenario(name, group, tuple(lanes), tuple(obstacles))

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        kind, *rest = line.split()
        try:
            if kind == "preset":
                close()
                name, group = rest
                if group not in ("seen", "unseen"):
                    raise ValueError(f"group must be seen or unseen, got {group!r}")
                current = (name, group, [], [])
            elif current is None:
                raise ValueError("entry before first preset")
            elif kind == "lane":
                pts = tuple(tuple(float(c) for c in p.split(",")) for p in rest)
                if len(pts) < 2:
                    raise ValueError("lane needs at least two points")
                current[2].append(Lane(pts))
            elif kind == "obstacle":
                xy, radius, height, cls = rest
                x, y = (float(c) for c in xy.split(","))
                current[3].append(Obstacle(x, y, float(radius), float(height), cls))
            else:
                raise ValueError(f"unknown entry {kind!r}")
        except ValueError as exc:
            raise ValueError(f"scenario file line {lineno}: {exc}") from None
    close()
    return presets


@functools.lru_cache(maxsize=4)
def load_scenarios(path: str | None = None) -> dict[str, Scenario]:
    if path is None:
        text = resources.files("uavtrack.sim").joinpath("scenarios.txt").read_text()
    else:
        text = Path(path).read_text()
    return parse_scenarios(text)


def scenario_names(group: str, path: str | None = None) -> list[str]:
    return [name for name, sc in load_scenarios(path).items() if sc.group == group]


def get_scenario(name: str, path: str | None = None) -> Scenario:
    presets = load_scenarios(path)
    if name not in presets:
        raise KeyError(f"unknown scenario preset {name!r}; known: {sorted(presets)}")
    return presets[name]
