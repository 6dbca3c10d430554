import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uavtrack.data import NormStats
from uavtrack.eval import (
    EpisodeLog,
    ExpertPolicy,
    TrackingCriteria,
    ZeroPolicy,
    compute_metrics,
    latency_stats,
    run_closed_loop,
    sensitivity_normalize,
    to_csv,
    to_text,
    untrained_policy,
    write_report,
)
from uavtrack.eval.sensitivity import raw_from_logs
from uavtrack.language import default_vocab
from uavtrack.model import ModelConfig
from uavtrack.sim import EpisodeConfig

SHORT = TrackingCriteria(horizon=200)


def _cfg(seed, **kw):
    return EpisodeConfig(scenario_id="town02", target_class="pedestrian", seed=seed, **kw)


# ---------------------------------------------------------------------------
# closed loop


def test_expert_in_the_loop_succeeds():
    for seed in range(3):
        lg = run_closed_loop(ExpertPolicy(), _cfg(seed), SHORT)
        assert lg.success and lg.tracked_frames >= 190


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_hovering_loses_walking_target(seed):
    lg = run_closed_loop(ZeroPolicy(), _cfg(seed), TrackingCriteria())
    assert lg.fatal_step is not None and lg.fatal_step < 500
    # the rollout stops at the fatal step and everything after it scores zero
    assert not lg.valid[lg.fatal_step:].any()


def test_closed_loop_deterministic():
    vocab = default_vocab(0)
    cfg = ModelConfig(d_model=16, n_heads=2, n_layers=1, expert_hidden=16, vocab_size=len(vocab))
    runs = []
    for _ in range(2):
        pol = untrained_policy(cfg, NormStats.identity(), vocab, seed=3)
        runs.append(run_closed_loop(pol, _cfg(5), TrackingCriteria(horizon=60), prompt="Track the pedestrian."))
    a, b = runs
    assert a.valid.tobytes() == b.valid.tobytes()
    assert np.array_equal(a.distance, b.distance, equal_nan=True)


def test_log_metadata():
    lg = run_closed_loop(ZeroPolicy(), _cfg(0, distance_tier="far"), SHORT, prompt="p", split="unseen")
    assert lg.key == ("town02", "pedestrian", "far", "unseen") and lg.prompt == "p"
    assert len(lg.valid) == 200 and lg.horizon == 200


def test_policy_shape_mismatch():
    class Bad(ZeroPolicy):
        def plan(self, world, frames, state):
            return np.zeros((3, 4))

    with pytest.raises(ValueError, match="shape"):
        run_closed_loop(Bad(), _cfg(0), SHORT)


def test_open_loop_flag_executes_whole_chunk():
    calls = []

    class Counting(ZeroPolicy):
        def plan(self, world, frames, state):
            calls.append(world.t)
            return super().plan(world, frames, state)

    run_closed_loop(Counting(), _cfg(0), TrackingCriteria(horizon=100, tau=200))
    assert calls[:3] == [0, 5, 10]
    calls.clear()
    run_closed_loop(Counting(), _cfg(0), TrackingCriteria(horizon=100, tau=200), open_loop=True)
    assert calls == [0, 25, 50, 75]


# ---------------------------------------------------------------------------
# sensitivity


def test_sensitivity_division_example():
    t = sensitivity_normalize({"town01": {"object": (146, 1.0), "verb": (130, 1.0), "distance": (196, 1.0)}})
    n = t.normalized["town01"]
    assert (round(n["object"]["atf"], 4), n["verb"]["atf"], round(n["distance"]["atf"], 4)) == (1.1231, 1.0, 1.5077)
    assert all(n[c]["sr"] == 1.0 for c in n)


def test_sensitivity_vehicle_ordering_fixture():
    # normalised vehicle ATFs (verb < object < distance) used as a formula fixture
    t = sensitivity_normalize({"fixture": {"verb": (1.30, 1.0), "object": (1.46, 1.0), "distance": (1.96, 1.0)}})
    n = t.normalized["fixture"]
    assert n["verb"]["atf"] == 1.0 < n["object"]["atf"] < n["distance"]["atf"]
    assert n["distance"]["atf"] == pytest.approx(1.96 / 1.30)


def test_sensitivity_equal_and_degenerate():
    t = sensitivity_normalize({"a": {c: (50.0, 0.5) for c in ("verb", "object", "distance")}})
    assert all(v == {"atf": 1.0, "sr": 1.0} for v in t.normalized["a"].values())
    with pytest.raises(ValueError, match="degenerate baseline"):
        sensitivity_normalize({"a": {"verb": (0.0, 0.5), "object": (1.0, 0.5), "distance": (2.0, 0.5)}})
    with pytest.raises(ValueError):
        sensitivity_normalize({"a": {"verb": (1.0, 0.5), "object": (1.0, 0.5)}})


@settings(max_examples=100)
@given(st.dictionaries(
    st.sampled_from(["town01", "town03", "town04"]),
    st.tuples(*[st.tuples(st.floats(1.0, 500.0), st.floats(0.05, 1.0))] * 3),
    min_size=1,
))
def test_sensitivity_minimum_is_exactly_one(data):
    raw = {s: dict(zip(("verb", "object", "distance"), v)) for s, v in data.items()}
    t = sensitivity_normalize(raw)
    for scen in raw:
        for m in ("atf", "sr"):
            assert min(t.normalized[scen][c][m] for c in ("verb", "object", "distance")) == 1.0
    for c in ("verb", "object", "distance"):
        assert t.mean[c]["atf"] >= 1.0


def test_raw_from_logs_groups_by_prompt_kind():
    logs = [
        EpisodeLog(np.ones(10, bool), horizon=10, scenario="town01", prompt="a"),
        EpisodeLog(np.zeros(10, bool), horizon=10, tau=3, scenario="town01", prompt="a"),
        EpisodeLog(np.ones(10, bool), horizon=10, scenario="town01", prompt="b"),
        EpisodeLog(np.ones(10, bool), horizon=10, scenario="town01", prompt="seen prompt"),
    ]
    raw = raw_from_logs(logs, {"a": "verb", "b": "object"})
    assert raw == {"town01": {"verb": {"atf": 5.0, "sr": 0.5}, "object": {"atf": 10.0, "sr": 1.0}}}


# ---------------------------------------------------------------------------
# latency


def test_latency_requires_enough_trials():
    with pytest.raises(ValueError):
        latency_stats(lambda: None, 0)
    with pytest.raises(ValueError):
        latency_stats(lambda: None, 99)


def test_latency_stats_fields():
    s = latency_stats(lambda: sum(range(200)), 100, warmup=2, n_tokens=28)
    assert s.n_trials == 100 and s.n_tokens == 28
    assert 0 < s.p50 <= s.p90 <= s.p99 and s.mean > 0
    assert set(s.to_json()) == {"n_trials", "mean", "p50", "p90", "p99", "n_tokens"}


# ---------------------------------------------------------------------------
# reports


def _report():
    logs = [
        EpisodeLog(np.ones(50, bool), horizon=50, scenario="town02"),
        EpisodeLog(np.r_[np.ones(10, bool), np.zeros(40, bool)], horizon=50, scenario="town05"),
    ]
    return compute_metrics(logs)


def test_csv_and_text_tables():
    r = _report()
    lines = to_csv(r).splitlines()
    assert lines[0] == "scenario,class,tier,split,episodes,sr,atf"
    assert lines[1] == "town02,pedestrian,suitable,seen,1,1.0,50.0"
    assert lines[-1] == "ALL,,,,2,0.5,30.0"
    text = to_text(r).splitlines()
    assert text[0].split() == ["scenario", "class", "tier", "split", "episodes", "sr", "atf"]
    assert set(text[1]) <= {"-", " "} and len(text) == 5


def test_write_report(tmp_path):
    summary = write_report(_report(), tmp_path / "r", tau=15)
    assert json.loads((tmp_path / "r.json").read_text()) == summary
    assert summary["overall"] == {"episodes": 2, "successes": 1, "sr": 0.5, "atf": 30.0} and summary["tau"] == 15
    assert (tmp_path / "r.csv").is_file() and (tmp_path / "r.txt").is_file()
