"""APF-driven episode recording: 25 Hz control rows, 5 Hz rendered frames."""

from __future__ import annotations

import dataclasses

import numpy as np

from ..expert import ApfParams, GranularityProfile, apf_command
from ..geometry import CameraModel, camera_pose, relative_pose
from ..sim import EpisodeConfig, init_episode, render_raster, step_world
from .chunks import CHUNK_LEN, compute_action_chunk
from .utd import EpisodeRecord, empty_tables


def config_snapshot(config: EpisodeConfig, **extra) -> dict:
    snap = dataclasses.asdict(config)
    snap["ticks_per_frame"] = config.ticks_per_frame
    snap.update(extra)
    return snap


def observe(world, cam: CameraModel, noise_scale: float = 8.0):
    """Rendered frame, proprioceptive state and target pose in the camera frame."""
    frame = render_raster(world, cam, noise_scale).pixels
    pose = relative_pose(camera_pose(world.uav, cam), world.target.pose).as_array()
    return frame, np.asarray(world.velocity, dtype=np.float64), pose


def collect_episode(
    config: EpisodeConfig,
    prompt: str,
    task_index: int = 0,
    episode_index: int = 0,
    cam: CameraModel | None = None,
    apf: ApfParams | None = None,
    gran: GranularityProfile | None = None,
    k: int = CHUNK_LEN,
    noise_scale: float = 8.0,
) -> EpisodeRecord:
    """Fly the APF expert for one episode and record it."""
    cam = cam or CameraModel()
    apf = apf or ApfParams()
    gran = gran or GranularityProfile()
    world = init_episode(config)
    rng = np.random.default_rng([config.seed & 0xFFFFFFFFFFFFFFFF, 0xA9F])
    n, tpf = config.horizon, config.ticks_per_frame
    n_vis = -(-n // tpf)
    control, vision = empty_tables(n, n_vis, cam.width, cam.height, k)
    trajectory = []
    for t in range(n):
        u, g = world.uav, world.target.pose
        trajectory.append((u.x, u.y, u.z, u.yaw))
        control["uav"][t] = trajectory[-1]
        control["target"][t] = (g.x, g.y, g.z, g.yaw)
        if t % tpf == 0:
            i = t // tpf
            frame, state, pose = observe(world, cam, noise_scale)
            row = vision[i]
            row["frame_index"] = i
            row["episode_index"] = episode_index
            row["task_index"] = task_index
            row["timestamp"] = t * config.dt
            row["state"] = state
            row["pose"] = pose
            row["frame"] = frame
        action = apf_command(world, world.anchor, apf, gran, rng)
        control["action"][t] = action.as_array()
        world = step_world(world, action, config.dt)
    u = world.uav
    trajectory.append((u.x, u.y, u.z, u.yaw))
    for i in range(n_vis):
        vision["chunk"][i] = compute_action_chunk(trajectory, i * tpf, k).steps
    snap = config_snapshot(config, sector=world.anchor.sector, width=cam.width, height=cam.height)
    return EpisodeRecord(prompt, snap, world.weather.as_array(), control, vision, ticks_per_frame=tpf)
