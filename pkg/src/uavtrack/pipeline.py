"""End-to-end steps shared by the CLI and the acceptance suite: collect, train, evaluate."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import language
from .data import collect_episode
from .data.layout import NormStats, build_dataset_layout, load_dataset, load_info, load_norm_stats
from .eval.closed_loop import ExpertPolicy, ModelPolicy, ZeroPolicy, run_closed_loop, untrained_policy
from .eval.metrics import EpisodeLog, TrackingCriteria
from .model.autodiff import Tensor
from .model.batches import TrainingSet
from .model.checkpoint import load_checkpoint, save_checkpoint
from .model.policy import ModelConfig, init_params, param_arrays, predict_pose
from .model.train import TrainConfig, TrainState, fit
from .sim import EpisodeConfig, scenario_names

log = logging.getLogger(__name__)

SEED_STRIDE = 100_000
EVAL_OFFSET = 50_000


def collect_seed(seed: int, episode: int) -> int:
    return seed * SEED_STRIDE + episode


def eval_seed(seed: int, episode: int) -> int:
    return seed * SEED_STRIDE + EVAL_OFFSET + episode


@dataclass(frozen=True)
class EpisodePlan:
    """Which episodes to fly: scenarios are cycled, prompts are cycled independently."""

    n_episodes: int
    seed: int = 0
    target_class: str = "pedestrian"
    tier: str = "suitable"
    scenario_group: str = "seen"
    prompt_split: str = "seen"
    horizon: int = 500
    vocab_seed: int = 0

    def prompts(self, vocab=None) -> list:
        vocab = vocab or language.generate_vocabulary(self.vocab_seed)
        if self.prompt_split == "unseen":
            # every held-out phrasing, used as a language-only perturbation of the episode
            return [p for p in vocab if p.split == "unseen"]
        found = language.prompts_for(vocab, self.target_class, self.tier, self.prompt_split)
        if not found:
            raise ValueError(f"no {self.prompt_split} prompts for {self.target_class}/{self.tier}")
        return found

    def configs(self, seed_fn) -> list[EpisodeConfig]:
        towns = scenario_names(self.scenario_group)
        if not towns:
            raise ValueError(f"no scenarios in group {self.scenario_group!r}")
        return [
            EpisodeConfig(
                scenario_id=towns[e % len(towns)],
                target_class=self.target_class,
                distance_tier=self.tier,
                seed=seed_fn(self.seed, e),
                horizon=self.horizon,
            )
            for e in range(self.n_episodes)
        ]


def _map(fn, jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*jobs)))


# ---------------------------------------------------------------------------
# collection


def collect_dataset(out_dir, plan: EpisodePlan, force: bool = False, workers: int = 1) -> NormStats:
    """Fly the APF expert for every planned episode and write the dataset directory."""
    out = Path(out_dir)
    if out.exists() and any(out.iterdir()) and not force:
        raise FileExistsError(f"{out} is not empty; pass force to overwrite")
    vocab = language.generate_vocabulary(plan.vocab_seed)
    prompts = plan.prompts(vocab)
    jobs = [(c, prompts[e % len(prompts)].text, vocab.index(prompts[e % len(prompts)]), e) for e, c in enumerate(plan.configs(collect_seed))]
    records = _map(collect_episode, jobs, workers)
    return build_dataset_layout(records, out, force=force, vocab=vocab, info_extra={"vocab_seed": plan.vocab_seed, "seed": plan.seed})


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainResult:
    params: dict
    state: TrainState
    stats: NormStats
    vocab: language.Vocab
    val_pose_mse: list = field(default_factory=list)  # (step, mse) pairs

    @property
    def ema(self) -> dict:
        return {k: Tensor(v.copy(), name=k) for k, v in self.state.ema.items()}


def pose_mse(params: dict, cfg: ModelConfig, batch: dict) -> float:
    pred = predict_pose(params, cfg, batch["frames"], batch["tokens"])
    return float(np.mean((pred - batch["pose"]) ** 2))


def train_policy(
    records,
    stats: NormStats,
    mcfg: ModelConfig,
    tcfg: TrainConfig,
    vocab_seed: int = 0,
    val_fraction: float = 0.1,
    val_rows: int = 256,
    eval_every: int = 500,
) -> TrainResult:
    """Train from scratch on ``records``; tracks grounding-head pose MSE on held-out episodes."""
    vocab = language.default_vocab(vocab_seed)
    if len(vocab) > mcfg.vocab_size:
        raise ValueError(f"vocabulary has {len(vocab)} tokens but the model embeds only {mcfg.vocab_size}")
    data = TrainingSet.from_records(records, stats, vocab, mcfg)
    train_rows, val = data.split_by_episode(val_fraction, tcfg.seed)
    if len(val) == 0:
        train_rows, val = np.arange(len(data)), np.arange(len(data))
    # spread the validation rows over every held-out episode, not just the first few
    pick = np.sort(np.random.default_rng(tcfg.seed).choice(val, size=min(val_rows, len(val)), replace=False))
    vb = data.batch(pick, np.random.default_rng(0))
    params = init_params(mcfg, tcfg.seed)
    history = [(0, pose_mse(params, mcfg, vb))]

    def on_step(state, info):
        if state.step % eval_every == 0 or state.step == tcfg.steps:
            history.append((state.step, pose_mse(params, mcfg, vb)))
            log.info("step %d val pose mse %.4f", state.step, history[-1][1])

    state = fit(params, data.sampler(train_rows), mcfg, tcfg, callback=on_step)
    return TrainResult(params, state, stats, vocab, history)


def train_from_dir(dataset_dir, checkpoint, mcfg: ModelConfig, tcfg: TrainConfig, **kw) -> TrainResult:
    vocab_seed = load_info(dataset_dir).get("vocab_seed", 0)
    result = train_policy(load_dataset(dataset_dir), load_norm_stats(dataset_dir), mcfg, tcfg, vocab_seed=vocab_seed, **kw)
    extra = {"vocab_seed": vocab_seed, "train_config": tcfg.to_dict(), "val_pose_mse": result.val_pose_mse}
    save_checkpoint(checkpoint, result.params, mcfg, result.stats, ema=result.state.ema, extra=extra)
    return result


# ---------------------------------------------------------------------------
# evaluation


def make_policy(kind: str, checkpoint=None, seed: int = 0, use_ema: bool = True, cfg: ModelConfig | None = None, stats=None):
    """``zero``, ``expert``, ``untrained`` or ``model`` (the latter two read the checkpoint)."""
    if kind == "zero":
        return ZeroPolicy()
    if kind == "expert":
        return ExpertPolicy()
    if kind not in ("model", "untrained"):
        raise ValueError(f"unknown policy kind {kind!r}")
    if checkpoint is None:
        raise ValueError(f"policy {kind!r} needs a checkpoint")
    params, ema, ck_cfg, ck_stats, extra = load_checkpoint(checkpoint)
    cfg, stats = cfg or ck_cfg, stats or ck_stats
    vocab = language.default_vocab(extra.get("vocab_seed", 0))
    if kind == "untrained":
        return untrained_policy(cfg, stats, vocab, seed)
    if use_ema and ema is not None:
        params = {k: Tensor(v, name=k) for k, v in ema.items()}
    return ModelPolicy(params, cfg, stats, vocab, seed)


def _eval_one(policy, config: EpisodeConfig, criteria: TrackingCriteria, prompt: str, split: str) -> EpisodeLog:
    return run_closed_loop(policy, config, criteria, prompt=prompt, split=split)


def evaluate(policy, plan: EpisodePlan, criteria: TrackingCriteria | None = None, workers: int = 1) -> list[EpisodeLog]:
    """Closed-loop logs for every planned episode; evaluation seeds never overlap collection seeds."""
    criteria = criteria or TrackingCriteria(horizon=plan.horizon)
    prompts = plan.prompts()
    split = "unseen" if "unseen" in (plan.scenario_group, plan.prompt_split) else "seen"
    jobs = [(policy, c, criteria, prompts[e % len(prompts)].text, split) for e, c in enumerate(plan.configs(eval_seed))]
    return _map(_eval_one, jobs, workers)


def substitution_kinds(vocab_seed: int = 0) -> dict:
    return {p.text: p.substitution_kind for p in language.generate_vocabulary(vocab_seed)}


def model_from_result(result: TrainResult, mcfg: ModelConfig, seed: int = 0, use_ema: bool = True) -> ModelPolicy:
    params = result.ema if use_ema else {k: Tensor(v, name=k) for k, v in param_arrays(result.params).items()}
    return ModelPolicy(params, mcfg, result.stats, result.vocab, seed)


def sensitivity_runs(policy, plan: EpisodePlan, criteria: TrackingCriteria | None = None, workers: int = 1) -> dict:
    """Scenario -> substitution kind -> ``{"atf", "sr"}`` using ``plan.n_episodes`` episodes per cell."""
    from .eval.sensitivity import CATEGORIES, raw_from_logs

    criteria = criteria or TrackingCriteria(horizon=plan.horizon)
    unseen = [p for p in language.generate_vocabulary(plan.vocab_seed) if p.split == "unseen"]
    configs = replace(plan, n_episodes=plan.n_episodes * len(scenario_names(plan.scenario_group))).configs(eval_seed)
    jobs = []
    for kind in CATEGORIES:
        texts = [p.text for p in unseen if p.substitution_kind == kind]
        jobs += [(policy, c, criteria, texts[e % len(texts)], "unseen") for e, c in enumerate(configs)]
    logs = _map(_eval_one, jobs, workers)
    return raw_from_logs(logs, substitution_kinds(plan.vocab_seed))


def as_tensors(arrays: dict) -> dict:
    return {k: Tensor(np.asarray(v), name=k) for k, v in arrays.items()}


def first_observation(plan: EpisodePlan, cfg: ModelConfig) -> np.ndarray:
    """Preprocessed frame stack ``(history+1, S, S)`` in ``[0, 1]`` at the first tick of the first planned episode."""
    from .data.chunks import make_frame_stack
    from .data.collect import observe
    from .geometry import CameraModel, preprocess_batch
    from .sim import init_episode

    world = init_episode(plan.configs(eval_seed)[0])
    frame, _, _ = observe(world, CameraModel())
    stack = make_frame_stack([preprocess_batch(frame[None], cfg.preproc_size)[0]], 0, cfg.history)
    return np.stack(stack).astype(np.float64) / 255.0


# ---------------------------------------------------------------------------
# verification harnesses

GRADCHECK_TOL = 1e-4


def random_batch(cfg: ModelConfig, batch_size: int, seed: int = 0) -> dict:
    """A synthetic normalised batch with every field the loss needs."""
    rng = np.random.default_rng(seed)
    S, L = cfg.preproc_size, cfg.text_len
    tokens = np.zeros((batch_size, L), dtype=np.int64)
    for b in range(batch_size):
        n = int(rng.integers(3, L + 1))
        tokens[b, :n] = rng.integers(2, cfg.vocab_size, n)
    return {
        "frames": rng.random((batch_size, cfg.history + 1, S, S)),
        "tokens": tokens,
        "state": rng.standard_normal((batch_size, 4)),
        "pose": rng.standard_normal((batch_size, 4)),
        "chunk": rng.standard_normal((batch_size, cfg.k, cfg.action_dim)),
        "s": rng.random(batch_size),
        "eps": rng.standard_normal((batch_size, cfg.k, cfg.action_dim)),
    }


def gradient_check(cfg: ModelConfig, seed: int = 0, batch_size: int = 2, coords_per_group: int = 3) -> float:
    """Max relative error of the full joint loss gradient at a random float64 initialisation."""
    from .model.train import grad_check

    params = init_params(cfg, seed, dtype=np.float64)
    # non-zero positional embedding so its gradient path is exercised too
    params["pos_emb"].data[...] = np.random.default_rng(seed).normal(0.0, 0.02, params["pos_emb"].shape)
    return grad_check(params, random_batch(cfg, batch_size, seed), cfg, coords_per_group=coords_per_group, seed=seed)


def latency_comparison(cfg: ModelConfig, n_trials: int = 100, warmup: int = 5, seed: int = 0) -> dict:
    """Sampling latency at full-scale token counts, compressed history vs a naive four-frame stack."""
    from .eval.latency import sampling_latency

    base = {k: v for k, v in cfg.to_dict().items() if k not in ("preproc_size", "patch", "compress")}
    out = {}
    for name, compress in (("compressed", True), ("naive", False)):
        out[name] = sampling_latency(ModelConfig.full_scale(compress=compress, **base), n_trials, warmup, seed).to_json()
    out["reduction"] = 1.0 - out["compressed"]["mean"] / out["naive"]["mean"]
    return out


def single_datum_fit(cfg: ModelConfig, steps: int = 2000, seed: int = 0, draws: int = 32, peak_lr: float = 1e-3, final_lr: float = 1e-6, n_samples: int = 16) -> dict:
    """Fit one fixed (observation, chunk) pair, then sample it back.

    Every step encodes the observation once and pairs it with ``draws`` fresh
    flow times and noise draws.  Returns the largest L-infinity error, in
    normalised units, over ``n_samples`` sampled chunks for both the raw and
    the EMA weights.
    """
    from .model.policy import sample_normalized
    from .model.train import ema_params

    datum = random_batch(cfg, 1, seed)
    target = datum["chunk"][0]

    def sampler(rng, n):
        return {
            **datum,
            "chunk": np.repeat(datum["chunk"], n, axis=0),
            "s": rng.random(n),
            "eps": rng.standard_normal((n, cfg.k, cfg.action_dim)),
        }

    params = init_params(cfg, seed)
    tcfg = TrainConfig(steps=steps, warmup=min(200, steps // 10), peak_lr=peak_lr, final_lr=min(final_lr, peak_lr), batch_size=draws, seed=seed, log_every=0)
    state = fit(params, sampler, cfg, tcfg)
    obs = {k: np.repeat(datum[k], n_samples, axis=0) for k in ("frames", "tokens", "state")}
    out = {"final_loss": state.history[-1]["loss"], "final_action_loss": state.history[-1]["action"]}
    for name, p in (("raw", params), ("ema", ema_params(state, params))):
        chunks = sample_normalized(p, cfg, obs["frames"], obs["tokens"], obs["state"], np.random.default_rng(seed + 1))
        out[name] = float(np.max(np.abs(chunks - target[None])))
    return out
