"""Flatten recorded episodes into normalised arrays and draw training batches."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data.layout import NormStats
from ..geometry import preprocess_batch
from ..language import Vocab, tokenize
from .policy import ModelConfig


def stack_indices(episode_starts: np.ndarray, episode_of: np.ndarray, history: int) -> np.ndarray:
    """Row indices ``[i-history, ..., i]`` per sample; ``-1`` marks a slot before the episode start."""
    n = len(episode_of)
    idx = np.arange(n)[:, None] + np.arange(-history, 1)[None, :]
    start = episode_starts[episode_of][:, None]
    return np.where(idx >= start, idx, -1)


@dataclass
class TrainingSet:
    """Every vision tick of every episode, with frames preprocessed and targets normalised."""

    frames: np.ndarray  # (N + 1, S, S) float32, last row all-zero (black)
    stacks: np.ndarray  # (N, history + 1) indices into frames
    tokens: np.ndarray  # (N, L)
    state: np.ndarray
    pose: np.ndarray
    chunk: np.ndarray
    episode_of: np.ndarray

    def __len__(self):
        return len(self.stacks)

    @classmethod
    def from_records(cls, records, stats: NormStats, vocab: Vocab, cfg: ModelConfig) -> "TrainingSet":
        frames, tokens, state, pose, chunk, episode_of, starts = [], [], [], [], [], [], []
        offset = 0
        for e, rec in enumerate(records):
            v = rec.vision
            n = len(v)
            if n == 0:
                continue
            starts.append(offset)
            frames.append(preprocess_batch(v["frame"], cfg.preproc_size))
            ids = tokenize(rec.prompt, vocab, cfg.text_len).token_ids
            tokens.append(np.tile(np.asarray(ids), (n, 1)))
            state.append(stats.norm("state", v["state"].astype(np.float64)))
            pose.append(stats.norm("pose", v["pose"].astype(np.float64)))
            chunk.append(stats.norm("action", v["chunk"].astype(np.float64)))
            episode_of.append(np.full(n, len(starts) - 1))
            offset += n
        if not starts:
            raise ValueError("no vision samples in the given records")
        episode_of = np.concatenate(episode_of)
        stacks = stack_indices(np.asarray(starts), episode_of, cfg.history)
        all_frames = np.concatenate(frames).astype(np.float32) / 255.0
        all_frames = np.concatenate([all_frames, np.zeros((1,) + all_frames.shape[1:], np.float32)])
        stacks = np.where(stacks < 0, len(all_frames) - 1, stacks)
        return cls(
            frames=all_frames,
            stacks=stacks,
            tokens=np.concatenate(tokens),
            state=np.concatenate(state).astype(np.float32),
            pose=np.concatenate(pose).astype(np.float32),
            chunk=np.concatenate(chunk).astype(np.float32),
            episode_of=episode_of,
        )

    def batch(self, rows, rng=None, s=None, eps=None) -> dict:
        """Batch for ``rows``; flow time and noise are drawn from ``rng`` unless given."""
        rows = np.asarray(rows)
        B = len(rows)
        k = self.chunk.shape[1]
        if s is None:
            s = rng.random(B).astype(np.float32)
        if eps is None:
            eps = rng.standard_normal((B, k, 4)).astype(np.float32)
        return {
            "frames": self.frames[self.stacks[rows]],
            "tokens": self.tokens[rows],
            "state": self.state[rows],
            "pose": self.pose[rows],
            "chunk": self.chunk[rows],
            "s": s,
            "eps": eps,
        }

    def sampler(self, rows=None):
        pool = np.arange(len(self)) if rows is None else np.asarray(rows)

        def draw(rng, batch_size):
            return self.batch(pool[rng.integers(len(pool), size=batch_size)], rng)

        return draw

    def split_by_episode(self, val_fraction: float, seed: int = 0):
        """Row indices ``(train, val)`` with whole episodes held out."""
        n_ep = int(self.episode_of.max()) + 1
        rng = np.random.default_rng(seed)
        n_val = max(1, int(round(val_fraction * n_ep))) if n_ep > 1 else 0
        val_eps = set(rng.permutation(n_ep)[:n_val].tolist())
        is_val = np.array([e in val_eps for e in self.episode_of])
        return np.flatnonzero(~is_val), np.flatnonzero(is_val)
