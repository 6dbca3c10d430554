"""Prompt-sensitivity table: per-scenario values divided by the worst substitution category."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

CATEGORIES = ("verb", "object", "distance")
METRICS = ("atf", "sr")


@dataclass(frozen=True)
class SensitivityTable:
    raw: dict  # scenario -> category -> {"atf", "sr"}
    normalized: dict  # scenario -> category -> {"atf", "sr"}
    mean: dict  # category -> {"atf", "sr"} averaged over scenarios

    def rows(self):
        for scen in sorted(self.raw):
            for cat in CATEGORIES:
                r, n = self.raw[scen][cat], self.normalized[scen][cat]
                yield scen, cat, r["atf"], r["sr"], n["atf"], n["sr"]


def _as_metrics(value) -> dict:
    if isinstance(value, dict):
        return {m: float(value[m]) for m in METRICS}
    atf, sr = value
    return {"atf": float(atf), "sr": float(sr)}


def sensitivity_normalize(raw: dict) -> SensitivityTable:
    """Divide each category by the scenario minimum, per metric, then average across scenarios.

    ``raw`` maps scenario -> category -> ``(atf, sr)`` or ``{"atf", "sr"}``.
    """
    if not raw:
        raise ValueError("sensitivity table needs at least one scenario")
    clean, norm = {}, {}
    for scen, cats in raw.items():
        missing = set(CATEGORIES) - set(cats)
        if missing:
            raise ValueError(f"scenario {scen!r} lacks categories {sorted(missing)}")
        clean[scen] = {c: _as_metrics(cats[c]) for c in CATEGORIES}
        norm[scen] = {c: {} for c in CATEGORIES}
        for m in METRICS:
            lo = min(clean[scen][c][m] for c in CATEGORIES)
            if lo <= 0.0:
                raise ValueError(f"degenerate baseline: minimum {m} is {lo} in scenario {scen!r}")
            for c in CATEGORIES:
                norm[scen][c][m] = clean[scen][c][m] / lo
    mean = {c: {m: sum(norm[s][c][m] for s in norm) / len(norm) for m in METRICS} for c in CATEGORIES}
    return SensitivityTable(clean, norm, mean)


def raw_from_logs(logs, kind_of_prompt: dict) -> dict:
    """Group unseen-prompt episode logs into scenario -> category -> ``{"atf", "sr"}``."""
    groups = defaultdict(list)
    for lg in logs:
        kind = kind_of_prompt.get(lg.prompt)
        if kind in CATEGORIES:
            groups[(lg.scenario, kind)].append(lg)
    out = defaultdict(dict)
    for (scen, kind), lgs in groups.items():
        out[scen][kind] = {
            "atf": sum(lg.tracked_frames for lg in lgs) / len(lgs),
            "sr": sum(lg.success for lg in lgs) / len(lgs),
        }
    return dict(out)
