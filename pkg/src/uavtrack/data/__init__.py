from .chunks import (
    CHUNK_LEN,
    ActionChunk,
    FrameSample,
    compute_action_chunk,
    integrate_chunk,
    make_frame_stack,
    rotate_steps,
)
from .collect import collect_episode, observe
from .layout import (
    NormStats,
    build_dataset_layout,
    compute_norm_stats,
    load_dataset,
    load_info,
    load_norm_stats,
)
from .utd import EpisodeRecord, UTDFormatError, decode_episode, encode_episode, read_episode, write_episode

__all__ = [
    "CHUNK_LEN",
    "ActionChunk",
    "EpisodeRecord",
    "FrameSample",
    "NormStats",
    "UTDFormatError",
    "build_dataset_layout",
    "collect_episode",
    "compute_action_chunk",
    "compute_norm_stats",
    "decode_episode",
    "encode_episode",
    "integrate_chunk",
    "load_dataset",
    "load_info",
    "load_norm_stats",
    "make_frame_stack",
    "observe",
    "read_episode",
    "rotate_steps",
    "write_episode",
]
