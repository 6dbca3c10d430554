from .closed_loop import ExpertPolicy, ModelPolicy, ZeroPolicy, run_closed_loop, untrained_policy
from .latency import LatencyStats, latency_stats, sampling_latency
from .metrics import (
    EpisodeLog,
    GroupMetrics,
    MetricsReport,
    TrackingCriteria,
    compute_metrics,
    detect_fatal_failure,
    is_tracked,
)
from .report import to_csv, to_summary, to_text, write_report
from .sensitivity import SensitivityTable, sensitivity_normalize

__all__ = [
    "EpisodeLog",
    "ExpertPolicy",
    "GroupMetrics",
    "LatencyStats",
    "MetricsReport",
    "ModelPolicy",
    "SensitivityTable",
    "TrackingCriteria",
    "ZeroPolicy",
    "compute_metrics",
    "detect_fatal_failure",
    "is_tracked",
    "latency_stats",
    "run_closed_loop",
    "sampling_latency",
    "sensitivity_normalize",
    "to_csv",
    "to_summary",
    "to_text",
    "untrained_policy",
    "write_report",
]
