"""CSV, aligned-text and JSON renderings of evaluation results."""

from __future__ import annotations

import csv
import io
import json

from .metrics import MetricsReport

HEADER = ("scenario", "class", "tier", "split", "episodes", "sr", "atf")


def report_rows(report: MetricsReport):
    for scen, cls, tier, split, n, sr, atf in report.rows():
        yield scen, cls, tier, split, n, round(sr, 4), round(atf, 2)


def to_csv(report: MetricsReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    w.writerows(report_rows(report))
    o = report.overall
    w.writerow(("ALL", "", "", "", o.n, round(o.sr, 4), round(o.atf, 2)))
    return buf.getvalue()


def to_text(report: MetricsReport) -> str:
    rows = [tuple(str(c) for c in HEADER)] + [tuple(str(c) for c in r) for r in report_rows(report)]
    o = report.overall
    rows.append(("ALL", "", "", "", str(o.n), f"{o.sr:.4f}", f"{o.atf:.2f}"))
    widths = [max(len(r[i]) for r in rows) for i in range(len(HEADER))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def to_summary(report: MetricsReport, **extra) -> dict:
    o = report.overall
    groups = [
        {"scenario": s, "class": c, "tier": t, "split": sp, "episodes": n, "sr": sr, "atf": atf}
        for s, c, t, sp, n, sr, atf in report.rows()
    ]
    return {"overall": {"episodes": o.n, "successes": o.successes, "sr": o.sr, "atf": o.atf}, "groups": groups, **extra}


def write_report(report: MetricsReport, stem, **extra) -> dict:
    """Write ``<stem>.csv``, ``<stem>.txt`` and ``<stem>.json``; returns the JSON summary."""
    summary = to_summary(report, **extra)
    with open(f"{stem}.csv", "w", newline="") as fh:
        fh.write(to_csv(report))
    with open(f"{stem}.txt", "w") as fh:
        fh.write(to_text(report))
    with open(f"{stem}.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    return summary
