import math
from dataclasses import replace

import numpy as np
import pytest

from uavtrack.geometry import Pose6D
from uavtrack.sim import EpisodeConfig, WeatherParams, init_episode
from uavtrack.sim.scenarios import Lane


def bare_world(uav=Pose6D(z=2.0), target_xy=(5.0, 0.0), target_cls="pedestrian", speed=0.0, obstacles=()):
    """A world with one stationary target on a straight lane, no distractors and clear weather."""
    world = init_episode(EpisodeConfig(scenario_id="town02", target_class=target_cls, seed=0))
    x, y = target_xy
    lane = Lane(((x, y), (x + 1000.0, y), (x + 1000.0, y + 1.0)))
    tgt = world.target
    tgt = replace(
        tgt,
        pose=Pose6D(x, y, tgt.pose.z, 0.0, 0.0, 0.0),
        speed=speed,
        cruise_speed=speed,
        speed_noise=0.0,
        lane=lane,
        waypoint=1,
    )
    return replace(
        world,
        uav=uav,
        target=tgt,
        distractors=(),
        obstacles=tuple(obstacles),
        weather=WeatherParams.clear(),
        velocity=np.zeros(4),
    )


@pytest.fixture
def world_factory():
    return bare_world


@pytest.fixture
def deg():
    return math.radians


# one line per acceptance criterion, printed after the run
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
