"""Command-line entry point: collect, train, eval, report, sensitivity, attn-export, gradcheck, latency."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from . import language, pipeline
from .eval.metrics import EpisodeLog, TrackingCriteria, compute_metrics
from .eval.report import to_text, write_report
from .eval.sensitivity import CATEGORIES, sensitivity_normalize

OUTPUT_ENV = "UAVTRACK_OUTPUT_DIR"
COMMANDS = ("collect", "train", "eval", "report", "sensitivity", "attn-export", "gradcheck", "latency")
TOY_PEAK_LR = 1e-3

log = logging.getLogger("uavtrack")


@dataclass(frozen=True)
class RunConfig:
    output_dir: str = "runs"
    dataset_dir: str = ""
    checkpoint: str = ""
    seed: int = 0
    vocab_seed: int = 0
    episodes: int = 200
    eval_episodes: int = 20
    target_class: str = "pedestrian"
    tier: str = "suitable"
    horizon: int = 500
    tau: int = 15
    d_min: float = 0.0
    replan_interval: int = 5
    policy: str = "model"
    workers: int = 1
    model: dict = field(default_factory=dict)
    train: dict = field(default_factory=lambda: {"peak_lr": TOY_PEAK_LR})

    def __post_init__(self):
        if self.episodes < 1 or self.eval_episodes < 1:
            raise ValueError("episodes: must be >= 1")
        if self.workers < 1:
            raise ValueError("workers: must be >= 1")
        if self.policy not in ("model", "zero", "expert", "untrained"):
            raise ValueError(f"policy: must be one of model, zero, expert, untrained (got {self.policy!r})")
        # delegate the remaining checks to the owning types so errors name the offending key
        self.model_config()
        self.train_config()
        self.criteria()

    @property
    def dataset(self) -> Path:
        return Path(self.dataset_dir) if self.dataset_dir else Path(self.output_dir) / "dataset"

    @property
    def checkpoint_path(self) -> Path:
        return Path(self.checkpoint) if self.checkpoint else Path(self.output_dir) / "policy.utck"

    def model_config(self):
        from .model.policy import ModelConfig

        return ModelConfig.from_dict(self.model)

    def train_config(self):
        from .model.train import TrainConfig

        return TrainConfig.from_dict({"seed": self.seed, **self.train})

    def criteria(self) -> TrackingCriteria:
        return TrackingCriteria(d_min=self.d_min, tau=self.tau, horizon=self.horizon, replan_interval=self.replan_interval)

    def plan(self, n: int, split: str = "seen", prompt_split: str | None = None) -> pipeline.EpisodePlan:
        return pipeline.EpisodePlan(
            n_episodes=n,
            seed=self.seed,
            target_class=self.target_class,
            tier=self.tier,
            scenario_group=split,
            prompt_split=prompt_split or split,
            horizon=self.horizon,
            vocab_seed=self.vocab_seed,
        )


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Read a YAML run config; unknown keys and invalid values raise ``ValueError``."""
    data = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise FileNotFoundError(f"config file not found: {p}")
        data = yaml.safe_load(p.read_text()) or {}
        if not isinstance(data, dict):
            raise ValueError(f"{p}: top level must be a mapping")
    known = {f.name for f in fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    if "train" in data:
        data["train"] = {"peak_lr": TOY_PEAK_LR, **data["train"]}
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    if os.environ.get(OUTPUT_ENV):
        data["output_dir"] = os.environ[OUTPUT_ENV]
    return RunConfig(**data)


def _require(path: Path, what: str) -> None:
    if not path.exists():
        raise FileNotFoundError(f"{what} not found: {path}")


def _out(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _log_to_json(lg: EpisodeLog) -> dict:
    return {
        "valid": "".join("1" if v else "0" for v in lg.valid),
        "horizon": lg.horizon,
        "tau": lg.tau,
        "scenario": lg.scenario,
        "target_class": lg.target_class,
        "tier": lg.tier,
        "split": lg.split,
        "prompt": lg.prompt,
        "seed": lg.seed,
    }


def _log_from_json(d: dict) -> EpisodeLog:
    d = dict(d)
    d["valid"] = np.array([c == "1" for c in d["valid"]], dtype=bool)
    return EpisodeLog(**d)


def write_logs(path, logs) -> None:
    with open(path, "w") as fh:
        for lg in logs:
            fh.write(json.dumps(_log_to_json(lg)) + "\n")


def read_logs(path) -> list[EpisodeLog]:
    with open(path) as fh:
        return [_log_from_json(json.loads(line)) for line in fh if line.strip()]


def _policy(cfg: RunConfig, kind: str | None = None):
    kind = kind or cfg.policy
    if kind in ("model", "untrained"):
        _require(cfg.checkpoint_path, "checkpoint")
    return pipeline.make_policy(kind, cfg.checkpoint_path if kind in ("model", "untrained") else None, seed=cfg.seed)


# ---------------------------------------------------------------------------
# commands


def cmd_collect(cfg: RunConfig, args) -> int:
    stats = pipeline.collect_dataset(cfg.dataset, cfg.plan(cfg.episodes, "seen"), force=args.force, workers=cfg.workers)
    print(f"wrote {cfg.episodes} episodes to {cfg.dataset}")
    print(json.dumps({"action_std": stats.action_std.round(4).tolist()}))
    return 0


def cmd_train(cfg: RunConfig, args) -> int:
    _require(cfg.dataset / "meta" / "info.json", "dataset")
    if cfg.checkpoint_path.exists() and not args.force:
        raise FileExistsError(f"{cfg.checkpoint_path} exists; pass --force to overwrite")
    cfg.checkpoint_path.parent.mkdir(parents=True, exist_ok=True)
    result = pipeline.train_from_dir(cfg.dataset, cfg.checkpoint_path, cfg.model_config(), cfg.train_config())
    first, last = result.val_pose_mse[0][1], result.val_pose_mse[-1][1]
    print(f"saved {cfg.checkpoint_path}; val pose mse {first:.4f} -> {last:.4f}")
    return 0


def cmd_eval(cfg: RunConfig, args) -> int:
    split = args.split or "seen"
    policy = _policy(cfg, args.policy)
    logs = pipeline.evaluate(policy, cfg.plan(cfg.eval_episodes, split), cfg.criteria(), workers=cfg.workers)
    out = _out(cfg)
    stem = out / f"eval_{split}"
    write_logs(f"{stem}_logs.jsonl", logs)
    report = compute_metrics(logs)
    write_report(report, stem, policy=args.policy or cfg.policy, seed=cfg.seed)
    print(to_text(report), end="")
    return 0


def cmd_report(cfg: RunConfig, args) -> int:
    out = Path(cfg.output_dir)
    paths = [Path(p) for p in args.logs] if args.logs else sorted(out.glob("eval_*_logs.jsonl"))
    if not paths:
        raise FileNotFoundError(f"no evaluation logs under {out}")
    logs = []
    for p in paths:
        _require(p, "log file")
        logs += read_logs(p)
    if args.tau is not None:
        logs = [replace(lg, tau=args.tau) for lg in logs]
    report = compute_metrics(logs)
    write_report(report, _out(cfg) / "report", sources=[str(p) for p in paths])
    print(to_text(report), end="")
    return 0


def cmd_sensitivity(cfg: RunConfig, args) -> int:
    policy = _policy(cfg, args.policy)
    split = args.split or "seen"
    rows = pipeline.sensitivity_runs(policy, cfg.plan(cfg.eval_episodes, split), cfg.criteria(), workers=cfg.workers)
    table = sensitivity_normalize(rows)
    out = _out(cfg)
    payload = {"raw": table.raw, "normalized": table.normalized, "mean": table.mean}
    with open(out / "sensitivity.json", "w") as fh:
        json.dump(payload, fh, indent=2)
    print("scenario  category  atf      sr      norm_atf  norm_sr")
    for scen, cat, atf, sr, natf, nsr in table.rows():
        print(f"{scen:<9} {cat:<9} {atf:<8.2f} {sr:<7.3f} {natf:<9.4f} {nsr:.4f}")
    for cat in CATEGORIES:
        print(f"mean      {cat:<9} {'':<8} {'':<7} {table.mean[cat]['atf']:<9.4f} {table.mean[cat]['sr']:.4f}")
    return 0


def cmd_attn_export(cfg: RunConfig, args) -> int:
    from .model.attention import export_attention, write_attention_csv

    _require(cfg.checkpoint_path, "checkpoint")
    params, ema, mcfg, _, extra = pipeline.load_checkpoint(cfg.checkpoint_path)
    vocab = language.default_vocab(extra.get("vocab_seed", 0))
    prompt = args.prompt or cfg.plan(1).prompts()[0].text
    frames = pipeline.first_observation(cfg.plan(1, args.split or "seen"), mcfg)
    ids = language.tokenize(prompt, vocab, mcfg.text_len).token_ids
    matrix = export_attention(ema and pipeline.as_tensors(ema) or params, mcfg, frames, ids)
    labels = language.words(prompt)[: mcfg.text_len]
    path = Path(args.out) if args.out else _out(cfg) / "attention.csv"
    write_attention_csv(path, matrix, labels)
    print(f"wrote {matrix.shape[0]}x{matrix.shape[1]} attention grid to {path}")
    return 0


def cmd_gradcheck(cfg: RunConfig, args) -> int:
    err = pipeline.gradient_check(cfg.model_config(), seed=cfg.seed)
    ok = err < pipeline.GRADCHECK_TOL
    print(f"max relative error {err:.3e} ({'ok' if ok else 'FAILED'}, tolerance {pipeline.GRADCHECK_TOL:g})")
    return 0 if ok else 1


def cmd_latency(cfg: RunConfig, args) -> int:
    result = pipeline.latency_comparison(cfg.model_config(), n_trials=args.trials, seed=cfg.seed)
    with open(_out(cfg) / "latency.json", "w") as fh:
        json.dump(result, fh, indent=2)
    for name in ("compressed", "naive"):
        s = result[name]
        print(f"{name:<10} tokens {s['n_tokens']:<5} mean {s['mean'] * 1e3:.2f} ms  p90 {s['p90'] * 1e3:.2f} ms")
    print(f"reduction {result['reduction']:.1%}")
    return 0


HANDLERS = {
    "collect": cmd_collect,
    "train": cmd_train,
    "eval": cmd_eval,
    "report": cmd_report,
    "sensitivity": cmd_sensitivity,
    "attn-export": cmd_attn_export,
    "gradcheck": cmd_gradcheck,
    "latency": cmd_latency,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run config")
    common.add_argument("--seed", type=int)
    common.add_argument("--episodes", type=int, help="episodes to collect or evaluate")
    common.add_argument("--split", choices=("seen", "unseen"))
    common.add_argument("--force", action="store_true", help="overwrite existing outputs")
    common.add_argument("--workers", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="uavtrack", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True
    sub.add_parser("collect", parents=[common], help="fly the APF expert and write a dataset")
    sub.add_parser("train", parents=[common], help="train the policy on a collected dataset")
    for name, text in (("eval", "closed-loop evaluation"), ("sensitivity", "prompt-substitution sensitivity table")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--policy", choices=("model", "zero", "expert", "untrained"))
    p = sub.add_parser("report", parents=[common], help="re-aggregate saved evaluation logs")
    p.add_argument("logs", nargs="*")
    p.add_argument("--tau", type=int)
    p = sub.add_parser("attn-export", parents=[common], help="write a text-to-visual attention CSV")
    p.add_argument("--prompt")
    p.add_argument("--out")
    sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient check")
    p = sub.add_parser("latency", parents=[common], help="compressed vs naive token latency")
    p.add_argument("--trials", type=int, default=100)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = {"seed": args.seed, "workers": args.workers}
        if args.episodes is not None:
            overrides["eval_episodes" if args.command in ("eval", "sensitivity") else "episodes"] = args.episodes
        cfg = load_config(args.config, overrides)
        return HANDLERS[args.command](cfg, args)
    except (OSError, ValueError, KeyError, FloatingPointError) as exc:
        print(f"uavtrack {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
