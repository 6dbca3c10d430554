"""Closed-loop rollouts: replan from rendered observations, execute chunk steps, log validity."""

from __future__ import annotations

import copy

import numpy as np

from ..data.chunks import CHUNK_LEN, compute_action_chunk, make_frame_stack, rotate_steps
from ..data.collect import observe
from ..data.layout import NormStats
from ..expert import ApfParams, GranularityProfile, apf_command
from ..geometry import CameraModel, preprocess_batch
from ..language import Vocab, tokenize
from ..model.policy import ModelConfig, init_params, sample_normalized
from ..sim import EpisodeConfig, init_episode, step_world
from .metrics import EpisodeLog, TrackingCriteria, is_tracked, target_distance, target_in_fov


class ZeroPolicy:
    """Hovers in place."""

    k = CHUNK_LEN

    def reset(self, config: EpisodeConfig, prompt: str) -> None:
        pass

    def plan(self, world, frames, state) -> np.ndarray:
        return np.zeros((self.k, 4))


class ExpertPolicy:
    """Oracle that replays the noise-free APF expert on a private copy of the world."""

    def __init__(self, apf: ApfParams | None = None, gran: GranularityProfile | None = None, k: int = CHUNK_LEN):
        apf = apf or ApfParams()
        self.apf = ApfParams(
            regression_coeff=apf.regression_coeff,
            max_repulse=apf.max_repulse,
            min_altitude=apf.min_altitude,
            safety_margin=dict(apf.safety_margin),
            noise_amplitude=0.0,
            k_rep=apf.k_rep,
        )
        self.gran = gran or GranularityProfile()
        self.k = k
        self.dt = 1.0 / 25

    def reset(self, config: EpisodeConfig, prompt: str) -> None:
        self.dt = config.dt

    def plan(self, world, frames, state) -> np.ndarray:
        sim = copy.copy(world)
        rng = np.random.default_rng(0)
        traj = [(sim.uav.x, sim.uav.y, sim.uav.z, sim.uav.yaw)]
        for _ in range(self.k):
            sim = step_world(sim, apf_command(sim, sim.anchor, self.apf, self.gran, rng), self.dt)
            traj.append((sim.uav.x, sim.uav.y, sim.uav.z, sim.uav.yaw))
        return compute_action_chunk(traj, 0, self.k).steps


class ModelPolicy:
    """Samples action chunks from the flow-matching policy."""

    def __init__(self, params: dict, cfg: ModelConfig, stats: NormStats, vocab: Vocab, seed: int = 0, euler_steps: int | None = None):
        self.params = params
        self.cfg = cfg
        self.stats = stats
        self.vocab = vocab
        self.seed = seed
        self.euler_steps = euler_steps
        self.k = cfg.k

    def reset(self, config: EpisodeConfig, prompt: str) -> None:
        self.tokens = np.asarray(tokenize(prompt, self.vocab, self.cfg.text_len).token_ids)[None]
        self.rng = np.random.default_rng([self.seed, config.seed & 0xFFFFFFFF, 0x5A3])

    def plan(self, world, frames, state) -> np.ndarray:
        stack = np.stack(frames).astype(np.float32)[None] / 255.0
        s = self.stats.norm("state", state)[None]
        x = sample_normalized(self.params, self.cfg, stack, self.tokens, s, self.rng, self.euler_steps)[0]
        return self.stats.denorm("action", x)


def untrained_policy(cfg: ModelConfig, stats: NormStats, vocab: Vocab, seed: int = 0) -> ModelPolicy:
    return ModelPolicy(init_params(cfg, seed), cfg, stats, vocab, seed)


def run_closed_loop(
    policy,
    config: EpisodeConfig,
    criteria: TrackingCriteria | None = None,
    prompt: str = "",
    cam: CameraModel | None = None,
    split: str = "seen",
    preproc_size: int = 32,
    open_loop: bool = False,
    noise_scale: float = 8.0,
) -> EpisodeLog:
    """Roll ``policy`` for one episode and log per-tick validity.

    The policy replans on every vision frame (every ``replan_interval`` control
    ticks), and its chunk, expressed in the yaw frame at planning time, is
    rotated into the current yaw frame before each step.  With ``open_loop``
    the whole chunk is executed before the next plan.  Rollout stops at the
    fatal failure; the remaining ticks are logged invalid.
    """
    criteria = criteria or TrackingCriteria()
    cam = cam or CameraModel()
    horizon = criteria.horizon
    world = init_episode(config)
    policy.reset(config, prompt)
    frames = []
    plan = None
    plan_t = 0
    plan_yaw = 0.0
    interval = policy.k if open_loop else criteria.replan_interval
    valid = np.zeros(horizon, dtype=bool)
    dist = np.full(horizon, np.nan)
    fov = np.zeros(horizon, dtype=bool)
    run = 0
    for t in range(horizon):
        if t % config.ticks_per_frame == 0:
            frame, state, _ = observe(world, cam, noise_scale)
            frames.append(preprocess_batch(frame[None], preproc_size)[0])
        if plan is None or t - plan_t >= interval:
            stack = make_frame_stack(frames, len(frames) - 1)
            plan = np.asarray(policy.plan(world, stack, np.asarray(world.velocity)), dtype=np.float64)
            if plan.shape != (policy.k, 4):
                raise ValueError(f"policy returned chunk of shape {plan.shape}, expected {(policy.k, 4)}")
            plan_t, plan_yaw = t, world.uav.yaw
        i = t - plan_t
        step = plan[i] if i < len(plan) else np.zeros(4)
        world = step_world(world, rotate_steps(step, plan_yaw, world.uav.yaw), config.dt)
        valid[t] = is_tracked(world, cam, criteria, config.distance_tier)
        dist[t] = target_distance(world)
        fov[t] = target_in_fov(world, cam)
        run = 0 if valid[t] else run + 1
        if run >= criteria.tau:
            break
    return EpisodeLog(
        valid=valid,
        distance=dist,
        in_fov=fov,
        horizon=horizon,
        tau=criteria.tau,
        scenario=config.scenario_id,
        target_class=config.target_class,
        tier=config.distance_tier,
        split=split,
        prompt=prompt,
        seed=config.seed,
    )


__all__ = [
    "ExpertPolicy",
    "ModelPolicy",
    "ZeroPolicy",
    "run_closed_loop",
    "untrained_policy",
]
