"""Wall-clock latency of action-chunk sampling under a given visual token budget."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ..model.policy import ModelConfig, init_params, sample_normalized

MIN_TRIALS = 100


@dataclass(frozen=True)
class LatencyStats:
    n_trials: int
    mean: float
    p50: float
    p90: float
    p99: float
    n_tokens: int = 0

    def to_json(self) -> dict:
        return dict(self.__dict__)


def latency_stats(fn, n_trials: int, warmup: int = 5, n_tokens: int = 0) -> LatencyStats:
    """Time ``fn()`` ``n_trials`` times after ``warmup`` untimed calls."""
    if n_trials < MIN_TRIALS:
        raise ValueError(f"latency needs at least {MIN_TRIALS} trials, got {n_trials}")
    for _ in range(warmup):
        fn()
    times = np.empty(n_trials)
    for i in range(n_trials):
        t0 = time.perf_counter()
        fn()
        times[i] = time.perf_counter() - t0
    p50, p90, p99 = np.percentile(times, [50, 90, 99])
    return LatencyStats(n_trials, float(times.mean()), float(p50), float(p90), float(p99), n_tokens)


def sampling_latency(cfg: ModelConfig, n_trials: int = MIN_TRIALS, warmup: int = 5, seed: int = 0, params=None) -> LatencyStats:
    """Latency of one ``sample_normalized`` call on a random single observation."""
    params = params or init_params(cfg, seed)
    rng = np.random.default_rng(seed)
    S = cfg.preproc_size
    frames = rng.random((1, cfg.history + 1, S, S)).astype(np.float32)
    tokens = np.zeros((1, cfg.text_len), dtype=np.int64)
    tokens[0, :8] = rng.integers(2, cfg.vocab_size, 8)
    state = np.zeros((1, 4), dtype=np.float32)
    return latency_stats(
        lambda: sample_normalized(params, cfg, frames, tokens, state, rng),
        n_trials,
        warmup,
        n_tokens=cfg.n_visual,
    )
