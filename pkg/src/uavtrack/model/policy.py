"""Toy vision-language-action tracker.

Patch tokens for the current frame, temporally compressed tokens for three
history frames, a small pre-norm transformer over ``[visual | text]``, a
query-pooling grounding head that regresses the target pose, and a
flow-matching MLP that predicts the velocity of a ``k x 4`` action chunk.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .autodiff import Tensor, concat, no_grad, take_rows


@dataclass(frozen=True)
class ModelConfig:
    preproc_size: int = 32
    patch: int = 8
    compress_ratio: int = 4
    history: int = 3
    d_model: int = 64
    n_layers: int = 4
    n_heads: int = 4
    text_len: int = 16
    vocab_size: int = 64
    action_dim: int = 4
    k: int = 25
    euler_steps: int = 10
    lambda_pos: float = 2.0
    lambda_action: float = 0.1
    query_std: float = 0.02
    expert_hidden: int = 1024
    time_dim: int = 32
    mlp_ratio: int = 2
    compress: bool = True

    def __post_init__(self):
        if self.preproc_size % self.patch:
            raise ValueError("preproc_size must be a multiple of patch")
        if self.n_cur % self.compress_ratio:
            raise ValueError(f"{self.n_cur} tokens per frame not divisible by compress ratio {self.compress_ratio}")
        if self.d_model % self.n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        if self.lambda_pos < 0 or self.lambda_action < 0:
            raise ValueError("loss weights must be non-negative")
        for name in ("d_model", "n_layers", "n_heads", "text_len", "vocab_size", "k", "euler_steps", "time_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.time_dim % 2:
            raise ValueError("time_dim must be even")

    @property
    def n_cur(self) -> int:
        return (self.preproc_size // self.patch) ** 2

    @property
    def n_hist(self) -> int:
        return self.n_cur // self.compress_ratio

    @property
    def n_visual(self) -> int:
        if self.compress:
            return self.n_cur + self.history * self.n_hist
        return (self.history + 1) * self.n_cur

    @property
    def n_tokens(self) -> int:
        return self.n_visual + self.text_len

    @property
    def patch_dim(self) -> int:
        return self.patch * self.patch

    @classmethod
    def full_scale(cls, **kw) -> "ModelConfig":
        """224 px input with 14 px patches: 256 tokens per frame, 64 per compressed history frame."""
        return cls(preproc_size=224, patch=14, **kw)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "ModelConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


def _xavier(rng, fan_in: int, fan_out: int) -> np.ndarray:
    lim = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=(fan_in, fan_out))


def init_params(cfg: ModelConfig, seed: int = 0, dtype=np.float32) -> dict:
    rng = np.random.default_rng(seed)
    D, H = cfg.d_model, cfg.expert_hidden
    p = {
        "patch_w": _xavier(rng, cfg.patch_dim, D),
        "patch_b": np.zeros(D),
        "compress_w": rng.normal(0.0, 1.0 / math.sqrt(cfg.n_cur), size=(cfg.n_hist, cfg.n_cur)),
        "pos_emb": np.zeros((1, cfg.n_visual, D)),
        "tok_emb": rng.normal(0.0, 0.02, size=(cfg.vocab_size, D)),
        "text_pos": rng.normal(0.0, 0.02, size=(cfg.text_len, D)),
        "ln_f_g": np.ones(D),
        "ln_f_b": np.zeros(D),
    }
    for i in range(cfg.n_layers):
        b = f"blk{i}."
        p[b + "ln1_g"], p[b + "ln1_b"] = np.ones(D), np.zeros(D)
        p[b + "ln2_g"], p[b + "ln2_b"] = np.ones(D), np.zeros(D)
        for w in ("wq", "wk", "wv", "wo"):
            p[b + w] = _xavier(rng, D, D)
            p[b + "b" + w[1]] = np.zeros(D)
        p[b + "mlp_w1"] = _xavier(rng, D, cfg.mlp_ratio * D)
        p[b + "mlp_b1"] = np.zeros(cfg.mlp_ratio * D)
        p[b + "mlp_w2"] = _xavier(rng, cfg.mlp_ratio * D, D)
        p[b + "mlp_b2"] = np.zeros(D)
    p["ground.query"] = rng.normal(0.0, cfg.query_std, size=(1, D))
    for w in ("wq", "wk", "wv", "wo"):
        p["ground." + w] = _xavier(rng, D, D)
        p["ground.b" + w[1]] = np.zeros(D)
    p["ground.mlp_w1"] = _xavier(rng, D, D)
    p["ground.mlp_b1"] = np.zeros(D)
    p["ground.mlp_w2"] = _xavier(rng, D, 4)
    p["ground.mlp_b2"] = np.zeros(4)
    p["time_w"] = _xavier(rng, cfg.time_dim, cfg.time_dim)
    p["time_b"] = np.zeros(cfg.time_dim)
    cond = D + 4 + cfg.k * cfg.action_dim + cfg.time_dim
    p["expert.w1"] = _xavier(rng, cond, H)
    p["expert.b1"] = np.zeros(H)
    p["expert.w2"] = _xavier(rng, H, H)
    p["expert.b2"] = np.zeros(H)
    p["expert.w3"] = _xavier(rng, H, cfg.k * cfg.action_dim)
    p["expert.b3"] = np.zeros(cfg.k * cfg.action_dim)
    return {k: Tensor(v.astype(dtype), requires_grad=True, name=k) for k, v in p.items()}


def cast_params(params: dict, dtype) -> dict:
    return {k: Tensor(v.data.astype(dtype), requires_grad=True, name=k) for k, v in params.items()}


def param_arrays(params: dict) -> dict:
    return {k: v.data for k, v in params.items()}


# ---------------------------------------------------------------------------
# visual and text tokens


def patchify(frames: np.ndarray, patch: int) -> np.ndarray:
    """``(..., S, S)`` frames to ``(..., n_patches, patch*patch)`` in row-major patch order."""
    *lead, S, S2 = frames.shape
    g = S // patch
    x = frames.reshape(*lead, g, patch, g, patch)
    n = len(lead)
    x = x.transpose(*range(n), n, n + 2, n + 1, n + 3)
    return x.reshape(*lead, g * g, patch * patch)


def build_visual_sequence(frames, params: dict, cfg: ModelConfig, use_pos: bool = True) -> Tensor:
    """Token sequence ``[hist(t-3), hist(t-2), hist(t-1), current]`` of shape ``(B, n_visual, D)``.

    ``frames`` is ``(B, history+1, S, S)`` (oldest first) or a single stack
    ``(history+1, S, S)``, with pixel values already scaled to ``[0, 1]``.
    """
    frames = np.asarray(frames)
    if frames.ndim == 3:
        frames = frames[None]
    want = (cfg.history + 1, cfg.preproc_size, cfg.preproc_size)
    if frames.shape[1:] != want:
        raise ValueError(f"expected frame stack of shape (B, {want}), got {frames.shape}")
    B = frames.shape[0]
    dt = params["patch_w"].dtype
    patches = Tensor(patchify(frames.astype(dt, copy=False), cfg.patch))
    emb = patches @ params["patch_w"] + params["patch_b"]  # (B, F, n_cur, D)
    if cfg.compress:
        hist = params["compress_w"] @ emb[:, : cfg.history]  # (B, 3, n_hist, D)
        hist = hist.reshape(B, cfg.history * cfg.n_hist, cfg.d_model)
        seq = concat([hist, emb[:, cfg.history]], axis=1)
    else:
        seq = emb.reshape(B, (cfg.history + 1) * cfg.n_cur, cfg.d_model)
    if use_pos:
        seq = seq + params["pos_emb"]
    return seq


def embed_text(token_ids, params: dict, cfg: ModelConfig) -> tuple[Tensor, np.ndarray]:
    ids = np.asarray(token_ids, dtype=np.int64)
    if ids.ndim == 1:
        ids = ids[None]
    if ids.shape[1] != cfg.text_len:
        raise ValueError(f"expected {cfg.text_len} text tokens, got {ids.shape[1]}")
    if ids.max(initial=0) >= cfg.vocab_size or ids.min(initial=0) < 0:
        raise ValueError("token id outside the vocabulary")
    return take_rows(params["tok_emb"], ids) + params["text_pos"], ids != 0


# ---------------------------------------------------------------------------
# encoder


def _attention(x: Tensor, params: dict, prefix: str, n_heads: int, key_mask: np.ndarray, keep: list | None):
    B, T, D = x.shape
    dh = D // n_heads

    def heads(t):
        return t.reshape(B, T, n_heads, dh).transpose(0, 2, 1, 3)

    q = heads(x @ params[prefix + "wq"] + params[prefix + "bq"])
    k = heads(x @ params[prefix + "wk"] + params[prefix + "bk"])
    v = heads(x @ params[prefix + "wv"] + params[prefix + "bv"])
    scores = (q @ k.swapaxes(-1, -2)) * (1.0 / math.sqrt(dh))
    att = scores.softmax(-1, mask=key_mask[:, None, None, :])
    if keep is not None:
        keep.append(att.data)
    out = (att @ v).transpose(0, 2, 1, 3).reshape(B, T, D)
    return out @ params[prefix + "wo"] + params[prefix + "bo"]


def encode_crossmodal(visual: Tensor, text: Tensor, text_mask: np.ndarray, params: dict, cfg: ModelConfig, keep=None):
    """Pre-norm transformer over ``[visual | text]``; padded text keys are masked out.

    Returns the final-normed hidden states ``(B, T, D)`` and the key mask.
    """
    x = concat([visual, text], axis=1)
    B = x.shape[0]
    key_mask = np.concatenate([np.ones((B, visual.shape[1]), dtype=bool), text_mask], axis=1)
    for i in range(cfg.n_layers):
        b = f"blk{i}."
        h = x.layernorm(params[b + "ln1_g"], params[b + "ln1_b"])
        x = x + _attention(h, params, b, cfg.n_heads, key_mask, keep)
        h = x.layernorm(params[b + "ln2_g"], params[b + "ln2_b"])
        h = (h @ params[b + "mlp_w1"] + params[b + "mlp_b1"]).gelu()
        x = x + (h @ params[b + "mlp_w2"] + params[b + "mlp_b2"])
    return x.layernorm(params["ln_f_g"], params["ln_f_b"]), key_mask


# ---------------------------------------------------------------------------
# heads


def grounding_head(hidden: Tensor, key_mask: np.ndarray, params: dict) -> Tensor:
    """Learnable-query attention pooling followed by a GELU MLP; returns ``(B, 4)``."""
    B, T, D = hidden.shape
    q = params["ground.query"] @ params["ground.wq"] + params["ground.bq"]  # (1, D)
    k = hidden @ params["ground.wk"] + params["ground.bk"]
    v = hidden @ params["ground.wv"] + params["ground.bv"]
    scores = (k @ q.swapaxes(0, 1)).reshape(B, T) * (1.0 / math.sqrt(D))
    att = scores.softmax(-1, mask=key_mask)
    pooled = (att.reshape(B, 1, T) @ v).reshape(B, D)
    pooled = pooled @ params["ground.wo"] + params["ground.bo"]
    h = (pooled @ params["ground.mlp_w1"] + params["ground.mlp_b1"]).gelu()
    return h @ params["ground.mlp_w2"] + params["ground.mlp_b2"]


def pool_context(hidden: Tensor, key_mask: np.ndarray) -> Tensor:
    """Mean over unmasked token positions, ``(B, D)``."""
    m = key_mask.astype(hidden.dtype)
    return (hidden * m[:, :, None]).sum(axis=1) * (1.0 / m.sum(axis=1, keepdims=True))


def time_features(s, dim: int, dtype=np.float64) -> np.ndarray:
    """Sinusoidal features of flow time ``s`` with geometrically spaced frequencies."""
    s = np.atleast_1d(np.asarray(s, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(np.linspace(0.0, math.log(100.0), half))
    ang = s[:, None] * freqs[None, :] * math.pi
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1).astype(dtype)


def flow_velocity(context: Tensor, state, a_s, s, params: dict, cfg: ModelConfig) -> Tensor:
    """Velocity of the action chunk, ``(B, k, 4)``, conditioned on pooled context, state and flow time."""
    B = context.shape[0]
    dt = context.dtype
    state = state if isinstance(state, Tensor) else Tensor(np.asarray(state, dtype=dt).reshape(B, 4))
    a_s = a_s if isinstance(a_s, Tensor) else Tensor(np.asarray(a_s, dtype=dt))
    s = np.broadcast_to(np.asarray(s, dtype=np.float64), (B,))
    temb = (Tensor(time_features(s, cfg.time_dim, dt)) @ params["time_w"] + params["time_b"]).gelu()
    cond = concat([context, state, a_s.reshape(B, cfg.k * cfg.action_dim), temb], axis=1)
    h = (cond @ params["expert.w1"] + params["expert.b1"]).gelu()
    h = (h @ params["expert.w2"] + params["expert.b2"]).gelu()
    out = h @ params["expert.w3"] + params["expert.b3"]
    return out.reshape(B, cfg.k, cfg.action_dim)


def encode(params: dict, cfg: ModelConfig, frames, token_ids, keep=None):
    visual = build_visual_sequence(frames, params, cfg)
    text, text_mask = embed_text(token_ids, params, cfg)
    return encode_crossmodal(visual, text, text_mask, params, cfg, keep)


# ---------------------------------------------------------------------------
# loss and sampling


def total_loss(params: dict, batch: dict, cfg: ModelConfig, lambda_pos: float | None = None, lambda_action: float | None = None):
    """``lambda_pos * MSE(pose) + lambda_action * MSE(v - (A - eps))`` on a normalised batch.

    ``batch`` holds ``frames (B,4,S,S)``, ``tokens (B,L)``, ``state (B,4)``,
    ``pose (B,4)``, ``chunk (B,k,4)``, flow times ``s (B,)`` and noise ``eps (B,k,4)``.
    Observation fields with batch 1 are shared by every flow draw in
    ``chunk``/``s``/``eps``; the loss equals that of an explicitly repeated batch.
    Returns ``(loss, parts)`` with the two unweighted terms in ``parts``.
    """
    if len(batch["frames"]) == 0:
        raise ValueError("empty batch")
    lp = cfg.lambda_pos if lambda_pos is None else lambda_pos
    la = cfg.lambda_action if lambda_action is None else lambda_action
    dt = params["patch_w"].dtype
    hidden, key_mask = encode(params, cfg, batch["frames"], batch["tokens"])
    chunk = np.asarray(batch["chunk"], dtype=dt)
    eps = np.asarray(batch["eps"], dtype=dt)
    s = np.asarray(batch["s"], dtype=dt)
    a_s = s[:, None, None] * chunk + (1.0 - s[:, None, None]) * eps
    ctx = pool_context(hidden, key_mask)
    state = np.asarray(batch["state"], dtype=dt).reshape(-1, 4)
    n = len(chunk)
    if ctx.shape[0] == 1 and n > 1:
        ctx = ctx[np.zeros(n, dtype=np.int64)]
        state = np.repeat(state, n, axis=0)
    v = flow_velocity(ctx, state, a_s, s, params, cfg)
    l_act = (v - (chunk - eps)).square().mean()
    parts = {"action": l_act}
    loss = l_act * la
    if lp != 0.0:
        pose = grounding_head(hidden, key_mask, params)
        l_pos = (pose - np.asarray(batch["pose"], dtype=dt)).square().mean()
        parts["pose"] = l_pos
        loss = loss + l_pos * lp
    return loss, parts


def interpolant(chunk, eps, s):
    """Linear path ``s * A + (1 - s) * eps`` between noise (``s = 0``) and data (``s = 1``)."""
    return s * np.asarray(chunk) + (1.0 - s) * np.asarray(eps)


def euler_integrate(field, x0: np.ndarray, steps: int) -> np.ndarray:
    """Integrate ``dx/ds = field(x, s)`` from ``s = 0`` to ``1`` with ``steps`` Euler steps."""
    if steps < 1:
        raise ValueError("need at least one Euler step")
    x = np.array(x0, dtype=np.float64 if np.asarray(x0).dtype == np.float64 else np.asarray(x0).dtype)
    h = 1.0 / steps
    for i in range(steps):
        x = x + h * field(x, i * h)
    return x


def sample_normalized(params: dict, cfg: ModelConfig, frames, token_ids, state, rng, steps: int | None = None) -> np.ndarray:
    """Normalised action chunks ``(B, k, 4)`` by Euler integration from Gaussian noise."""
    steps = steps or cfg.euler_steps
    with no_grad():
        hidden, key_mask = encode(params, cfg, frames, token_ids)
        ctx = pool_context(hidden, key_mask)
        B = ctx.shape[0]
        state = np.asarray(state, dtype=ctx.dtype).reshape(B, 4)
        x0 = rng.standard_normal((B, cfg.k, cfg.action_dim)).astype(ctx.dtype)

        def field(x, s):
            return flow_velocity(ctx, state, x, s, params, cfg).data

        return euler_integrate(field, x0, steps)


def predict_pose(params: dict, cfg: ModelConfig, frames, token_ids) -> np.ndarray:
    with no_grad():
        hidden, key_mask = encode(params, cfg, frames, token_ids)
        return grounding_head(hidden, key_mask, params).data


def attention_maps(params: dict, cfg: ModelConfig, frames, token_ids) -> list[np.ndarray]:
    keep = []
    with no_grad():
        encode(params, cfg, frames, token_ids, keep)
    return keep
