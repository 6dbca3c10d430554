import math
import warnings

import numpy as np
import pytest

from uavtrack.data import NormStats
from uavtrack.eval.closed_loop import ModelPolicy
from uavtrack.language import default_vocab
from uavtrack.model import (
    ModelConfig,
    encode,
    export_attention,
    flow_velocity,
    grounding_head,
    init_params,
    predict_pose,
    read_attention_csv,
    sample_normalized,
    total_loss,
    write_attention_csv,
)
from uavtrack.model.autodiff import Tensor
from uavtrack.model.policy import (
    build_visual_sequence,
    embed_text,
    encode_crossmodal,
    euler_integrate,
    interpolant,
    pool_context,
)
from uavtrack.model.train import grad_check
from uavtrack.pipeline import random_batch

TINY = ModelConfig(
    preproc_size=16, patch=4, d_model=16, n_heads=2, n_layers=4, text_len=6,
    vocab_size=20, k=5, expert_hidden=24, time_dim=8,
)


@pytest.fixture(scope="module")
def params():
    return init_params(TINY, seed=0, dtype=np.float64)


@pytest.fixture
def batch():
    return random_batch(TINY, 3, seed=1)


# ---------------------------------------------------------------------------
# configuration and initialisation


def test_token_counts():
    toy = ModelConfig()
    assert (toy.n_cur, toy.n_hist, toy.n_visual) == (16, 4, 28)
    full = ModelConfig.full_scale()
    assert (full.n_cur, full.n_hist, full.n_visual) == (256, 64, 448)
    assert ModelConfig.full_scale(compress=False).n_visual == 1024


def test_config_defaults_and_validation():
    c = ModelConfig()
    assert (c.lambda_pos, c.lambda_action, c.k, c.euler_steps, c.query_std) == (2.0, 0.1, 25, 10, 0.02)
    with pytest.raises(ValueError):
        ModelConfig(preproc_size=30)
    with pytest.raises(ValueError):
        ModelConfig(compress_ratio=3)
    with pytest.raises(ValueError):
        ModelConfig(lambda_pos=-1.0)
    with pytest.raises(ValueError):
        ModelConfig.from_dict({"d_model": 32, "colour": 1})
    assert ModelConfig.from_dict(c.to_dict()) == c


def test_init_invariants():
    p = init_params(ModelConfig(), seed=3)
    assert not p["pos_emb"].data.any() and p["pos_emb"].shape == (1, 28, 64)
    assert not p["ground.mlp_b1"].data.any() and not p["ground.mlp_b2"].data.any()
    lim = math.sqrt(6 / (64 + 4))
    assert np.abs(p["ground.mlp_w2"].data).max() <= lim
    assert abs(p["ground.query"].data.std() - 0.02) < 0.01
    assert "compress_b" not in p  # temporal compression is bias-free


def test_visual_sequence_shapes(params):
    frames = np.random.default_rng(0).random((2, 4, 16, 16))
    assert build_visual_sequence(frames, params, TINY).shape == (2, TINY.n_visual, 16)
    with pytest.raises(ValueError):
        build_visual_sequence(np.zeros((2, 4, 32, 32)), params, TINY)


def test_zero_pos_emb_bitwise_invariance():
    p = init_params(ModelConfig(), seed=0)
    frames = np.random.default_rng(1).random((2, 4, 32, 32)).astype(np.float32)
    with_pos = build_visual_sequence(frames, p, ModelConfig()).data
    without = build_visual_sequence(frames, p, ModelConfig(), use_pos=False).data
    assert with_pos.tobytes() == without.tobytes()


# ---------------------------------------------------------------------------
# encoder


def test_encoder_shape_and_determinism(params, batch):
    h1, mask = encode(params, TINY, batch["frames"], batch["tokens"])
    h2, _ = encode(params, TINY, batch["frames"], batch["tokens"])
    assert h1.shape == (3, TINY.n_tokens, 16) and mask.shape == (3, TINY.n_tokens)
    assert np.array_equal(h1.data, h2.data)


def test_padding_contents_do_not_leak(params):
    frames = np.random.default_rng(2).random((1, 4, 16, 16))
    ids = np.array([[5, 7, 9, 0, 0, 0]])
    visual = build_visual_sequence(frames, params, TINY)
    text, mask = embed_text(ids, params, TINY)
    h1, km = encode_crossmodal(visual, text, mask, params, TINY)
    # scramble the padded tail (contents and order) while keeping the mask
    scrambled = text.data.copy()
    scrambled[0, 3:] = np.random.default_rng(3).standard_normal((3, 16))[::-1]
    h2, _ = encode_crossmodal(visual, Tensor(scrambled), mask, params, TINY)
    keep = km[0]
    assert np.array_equal(h1.data[0, keep], h2.data[0, keep])
    assert np.array_equal(pool_context(h1, km).data, pool_context(h2, km).data)


def test_different_prompts_differ(params):
    frames = np.random.default_rng(4).random((1, 4, 16, 16))
    h1, _ = encode(params, TINY, frames, [[3, 4, 5, 0, 0, 0]])
    h2, _ = encode(params, TINY, frames, [[6, 7, 8, 9, 0, 0]])
    assert np.max(np.abs(h1.data[0, : TINY.n_visual] - h2.data[0, : TINY.n_visual])) > 1e-6


def test_token_ids_validated(params):
    with pytest.raises(ValueError):
        embed_text([[1, 2, 3]], params, TINY)
    with pytest.raises(ValueError):
        embed_text([[1, 2, 3, 99, 0, 0]], params, TINY)


# ---------------------------------------------------------------------------
# heads


def test_grounding_head_shape_and_zeroed_output(params, batch):
    hidden, mask = encode(params, TINY, batch["frames"], batch["tokens"])
    assert grounding_head(hidden, mask, params).shape == (3, 4)
    p = dict(params)
    p["ground.mlp_w2"] = Tensor(np.zeros((16, 4)))
    p["ground.mlp_b2"] = Tensor(np.array([0.1, -0.2, 0.3, 0.0]))
    assert np.array_equal(grounding_head(hidden, mask, p).data, np.tile([0.1, -0.2, 0.3, 0.0], (3, 1)))


def test_grounding_head_is_bypassed_at_inference(params, batch):
    no_head = {k: v for k, v in params.items() if not k.startswith("ground.")}
    a = sample_normalized(params, TINY, batch["frames"], batch["tokens"], batch["state"], np.random.default_rng(0))
    b = sample_normalized(no_head, TINY, batch["frames"], batch["tokens"], batch["state"], np.random.default_rng(0))
    assert a.tobytes() == b.tobytes()


def test_flow_velocity_shape_and_boundaries(params, batch):
    hidden, mask = encode(params, TINY, batch["frames"], batch["tokens"])
    ctx = pool_context(hidden, mask)
    for s in (0.0, 1.0):
        v1 = flow_velocity(ctx, batch["state"], batch["eps"], s, params, TINY).data
        v2 = flow_velocity(ctx, batch["state"], batch["eps"], s, params, TINY).data
        assert v1.shape == (3, TINY.k, 4) and np.all(np.isfinite(v1)) and np.array_equal(v1, v2)


def test_full_scale_velocity_shape():
    cfg = ModelConfig(d_model=16, n_heads=2, n_layers=1, expert_hidden=16)
    p = init_params(cfg, 0)
    v = flow_velocity(Tensor(np.zeros((1, 16), np.float32)), np.zeros(4), np.zeros((1, 25, 4)), 0.5, p, cfg)
    assert v.shape == (1, 25, 4)


# ---------------------------------------------------------------------------
# flow matching


def test_interpolant_boundaries():
    rng = np.random.default_rng(5)
    A, eps = rng.standard_normal((25, 4)), rng.standard_normal((25, 4))
    assert np.array_equal(interpolant(A, eps, 1.0), A)
    assert np.array_equal(interpolant(A, eps, 0.0), eps)


@pytest.mark.parametrize("steps", [1, 2, 3, 10, 37, 100])
def test_euler_recovers_target_under_ideal_field(steps):
    rng = np.random.default_rng(steps)
    A = rng.standard_normal((25, 4))
    for _ in range(5):
        x = euler_integrate(lambda x, s: (A - x) / (1.0 - s), rng.standard_normal((25, 4)), steps)
        assert np.max(np.abs(x - A)) < 1e-9


def test_euler_requires_steps():
    with pytest.raises(ValueError):
        euler_integrate(lambda x, s: x, np.zeros(2), 0)


def test_sampling_deterministic_and_finite(params, batch):
    draw = lambda seed: sample_normalized(params, TINY, batch["frames"], batch["tokens"], batch["state"], np.random.default_rng(seed))
    a = draw(7)
    assert a.shape == (3, TINY.k, 4) and np.all(np.isfinite(a))
    assert np.array_equal(a, draw(7)) and not np.array_equal(a, draw(8))


def test_model_policy_denormalises(params):
    stats = NormStats(np.full(4, 2.0), np.full(4, 1e-6), np.zeros(4), np.ones(4), np.zeros(4), np.ones(4))
    vocab = default_vocab(0)
    cfg = ModelConfig(**{**TINY.to_dict(), "vocab_size": len(vocab)})
    pol = ModelPolicy(init_params(cfg, 0), cfg, stats, vocab)

    class _Cfg:
        seed = 0

    pol.reset(_Cfg, "Track the pedestrian.")
    chunk = pol.plan(None, [np.zeros((16, 16), np.uint8)] * 4, np.zeros(4))
    # with a near-zero action std every step collapses onto the mean
    assert chunk.shape == (5, 4) and np.allclose(chunk, 2.0, atol=1e-3)


# ---------------------------------------------------------------------------
# loss


def test_loss_zero_for_exact_predictor(params):
    b = random_batch(TINY, 1, seed=4)
    u = (b["chunk"] - b["eps"]).reshape(-1)
    p = dict(params)
    p["expert.w3"] = Tensor(np.zeros_like(params["expert.w3"].data))
    p["expert.b3"] = Tensor(u)
    p["ground.mlp_w2"] = Tensor(np.zeros_like(params["ground.mlp_w2"].data))
    p["ground.mlp_b2"] = Tensor(b["pose"][0])
    loss, parts = total_loss(p, b, TINY)
    assert float(loss.data) == 0.0 and float(parts["pose"].data) == 0.0


def test_loss_weights(params, batch):
    loss, parts = total_loss(params, batch, TINY)
    expected = 2.0 * float(parts["pose"].data) + 0.1 * float(parts["action"].data)
    assert float(loss.data) == pytest.approx(expected, rel=1e-12)
    l0, parts0 = total_loss(params, batch, TINY, lambda_pos=0.0)
    assert float(l0.data) == 0.1 * float(parts0["action"].data) and "pose" not in parts0


def test_empty_batch_rejected(params):
    b = random_batch(TINY, 1)
    b = {k: v[:0] for k, v in b.items()}
    with pytest.raises(ValueError):
        total_loss(params, b, TINY)


def test_joint_loss_gradient_check(batch):
    p = init_params(TINY, seed=2, dtype=np.float64)
    p["pos_emb"].data[...] = np.random.default_rng(2).normal(0.0, 0.02, p["pos_emb"].shape)
    assert grad_check(p, batch, TINY, coords_per_group=4) < 1e-4


def test_prediction_pose_shape(params, batch):
    assert predict_pose(params, TINY, batch["frames"], batch["tokens"]).shape == (3, 4)


# ---------------------------------------------------------------------------
# attention export


def test_attention_rows_stochastic(params, tmp_path):
    frames = np.random.default_rng(6).random((4, 16, 16))
    ids = [3, 4, 5, 6, 0, 0]
    att = export_attention(params, TINY, frames, ids)
    assert att.shape == (TINY.text_len, TINY.n_cur)
    assert np.max(np.abs(att.sum(axis=1) - 1.0)) < 1e-6 and np.all(att >= 0)
    write_attention_csv(tmp_path / "a.csv", att, ["track", "the", "red", "car"])
    labels, back = read_attention_csv(tmp_path / "a.csv")
    assert labels[:4] == ["track", "the", "red", "car"] and labels[4] == ""
    assert np.allclose(back, att, rtol=1e-7)


def test_attention_uniform_model(params):
    p = dict(params)
    for i in range(TINY.n_layers):
        for w in ("wq", "wk"):
            p[f"blk{i}.{w}"] = Tensor(np.zeros((16, 16)))
    att = export_attention(p, TINY, np.random.default_rng(7).random((4, 16, 16)), [3, 4, 0, 0, 0, 0])
    assert np.allclose(att, 1.0 / TINY.n_cur, atol=1e-12)


def test_attention_shallow_model_warns():
    cfg = ModelConfig(**{**TINY.to_dict(), "n_layers": 2})
    p = init_params(cfg, 0)
    with pytest.warns(UserWarning, match="2 layers"):
        att = export_attention(p, cfg, np.zeros((4, 16, 16)), [3, 0, 0, 0, 0, 0])
    assert np.allclose(att.sum(axis=1), 1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        export_attention(init_params(TINY, 0), TINY, np.zeros((4, 16, 16)), [3, 0, 0, 0, 0, 0])
