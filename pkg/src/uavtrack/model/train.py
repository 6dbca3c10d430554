"""Optimiser, learning-rate schedule, EMA, training loop and finite-difference gradient check."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .autodiff import Tensor
from .policy import ModelConfig, cast_params, total_loss

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 5000
    warmup: int = 200
    batch_size: int = 32
    peak_lr: float = 1.2e-4
    final_lr: float = 1e-6
    clip_norm: float = 0.8
    ema_decay: float = 0.999
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-4
    seed: int = 0
    log_every: int = 100

    def __post_init__(self):
        if self.steps < 1 or self.batch_size < 1:
            raise ValueError("steps and batch_size must be positive")
        if not 0 <= self.warmup <= self.steps:
            raise ValueError("warmup must lie in [0, steps]")
        if self.peak_lr <= 0 or self.final_lr < 0 or self.final_lr > self.peak_lr:
            raise ValueError("need 0 <= final_lr <= peak_lr and peak_lr > 0")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive")
        if not 0.0 <= self.ema_decay <= 1.0:
            raise ValueError("ema_decay must lie in [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "TrainConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)


def learning_rate(step: int, cfg: TrainConfig) -> float:
    """Linear warmup from 0 to the peak, then cosine decay reaching ``final_lr`` at ``cfg.steps``."""
    if cfg.warmup and step < cfg.warmup:
        return cfg.peak_lr * step / cfg.warmup
    span = cfg.steps - cfg.warmup
    frac = 1.0 if span == 0 else min(max((step - cfg.warmup) / span, 0.0), 1.0)
    return cfg.final_lr + 0.5 * (cfg.peak_lr - cfg.final_lr) * (1.0 + math.cos(math.pi * frac))


def clip_gradients(grads: dict, max_norm: float) -> tuple[dict, float]:
    """Scale all gradients together so their global L2 norm is at most ``max_norm``."""
    norm = math.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads.values()))
    if norm > max_norm:
        scale = max_norm / norm
        grads = {k: g * scale for k, g in grads.items()}
    return grads, norm


@dataclass
class TrainState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    ema: dict = field(default_factory=dict)
    history: list = field(default_factory=list)


def init_train_state(params: dict) -> TrainState:
    return TrainState(
        m={k: np.zeros_like(p.data) for k, p in params.items()},
        v={k: np.zeros_like(p.data) for k, p in params.items()},
        ema={k: p.data.copy() for k, p in params.items()},
    )


def _decays(name: str) -> bool:
    """Weight decay applies to matrices only, not biases, norms, embeddings or the pooling query."""
    leaf = name.split(".")[-1]
    return leaf.startswith(("w", "mlp_w", "patch_w", "compress_w", "time_w"))


def apply_update(state: TrainState, params: dict, grads: dict, cfg: TrainConfig) -> float:
    """AdamW step plus EMA update; returns the learning rate used."""
    lr = learning_rate(state.step, cfg)
    t = state.step + 1
    bc1 = 1.0 - cfg.beta1**t
    bc2 = 1.0 - cfg.beta2**t
    for k, p in params.items():
        g = grads.get(k)
        if g is None:
            g = np.zeros_like(p.data)
        m = state.m[k]
        v = state.v[k]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        upd = (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)
        if cfg.weight_decay and _decays(k):
            upd = upd + cfg.weight_decay * p.data
        p.data = (p.data - lr * upd).astype(p.data.dtype, copy=False)
        e = state.ema[k]
        e *= cfg.ema_decay
        e += (1.0 - cfg.ema_decay) * p.data
    state.step = t
    return lr


def train_step(state: TrainState, params: dict, batch: dict, mcfg: ModelConfig, tcfg: TrainConfig, **loss_kw) -> dict:
    """One optimisation step.  Raises on a non-finite loss and leaves state and params untouched."""
    for p in params.values():
        p.grad = None
    loss, parts = total_loss(params, batch, mcfg, **loss_kw)
    value = float(loss.data)
    if not math.isfinite(value):
        raise FloatingPointError(f"non-finite loss {value} at step {state.step}")
    loss.backward()
    grads = {k: p.grad for k, p in params.items() if p.grad is not None}
    grads, norm = clip_gradients(grads, tcfg.clip_norm)
    lr = apply_update(state, params, grads, tcfg)
    return {"loss": value, "grad_norm": norm, "lr": lr, **{k: float(v.data) for k, v in parts.items()}}


def ema_params(state: TrainState, params: dict) -> dict:
    return {k: Tensor(state.ema[k].copy(), name=k) for k in params}


def fit(params: dict, sampler, mcfg: ModelConfig, tcfg: TrainConfig, state: TrainState | None = None, callback=None, **loss_kw):
    """Run ``tcfg.steps`` optimisation steps drawing batches from ``sampler(rng, batch_size)``."""
    state = state or init_train_state(params)
    rng = np.random.default_rng([tcfg.seed, 0x7EA1])
    t0 = time.perf_counter()
    while state.step < tcfg.steps:
        batch = sampler(rng, tcfg.batch_size)
        info = train_step(state, params, batch, mcfg, tcfg, **loss_kw)
        state.history.append(info)
        if callback is not None:
            callback(state, info)
        if tcfg.log_every and state.step % tcfg.log_every == 0:
            log.info("step %d loss %.4f lr %.2e (%.1fs)", state.step, info["loss"], info["lr"], time.perf_counter() - t0)
    return state


def grad_check(
    params: dict,
    batch: dict,
    mcfg: ModelConfig,
    h: float = 1e-5,
    coords_per_group: int = 6,
    seed: int = 0,
    loss_fn=None,
    zero_tol: float = 1e-8,
    **loss_kw,
) -> float:
    """Largest per-group relative error between analytic and central-difference gradients.

    Runs in float64.  For every parameter group a few coordinates are
    perturbed; the group error is ``|g_num - g_ana| / max(|g_num|, |g_ana|)``
    over those coordinates.  Groups whose sampled gradients are zero (both
    norms below ``zero_tol``, e.g. attention key biases, which softmax shift
    invariance makes exactly gradient-free) are skipped.
    """
    p64 = cast_params(params, np.float64)
    loss_fn = loss_fn or (lambda p: total_loss(p, batch, mcfg, **loss_kw)[0])
    loss = loss_fn(p64)
    loss.backward()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name, p in p64.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        n = min(coords_per_group, flat.size)
        idx = rng.choice(flat.size, size=n, replace=False)
        ana = g.reshape(-1)[idx]
        num = np.empty(n)
        for j, i in enumerate(idx):
            old = flat[i]
            flat[i] = old + h
            up = float(loss_fn(p64).data)
            flat[i] = old - h
            down = float(loss_fn(p64).data)
            flat[i] = old
            num[j] = (up - down) / (2.0 * h)
        scale = max(np.linalg.norm(num), np.linalg.norm(ana))
        if scale < zero_tol:
            continue
        worst = max(worst, float(np.linalg.norm(num - ana) / scale))
    return worst
