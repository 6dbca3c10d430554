"""UTD1 episode container: little-endian header, float32 tables, raw uint8 frames.

Layout::

    b"UTD1"
    u32 n_control  u32 n_vision  u32 width  u32 height  u32 k
    u32 len + utf-8 prompt
    u32 len + utf-8 JSON config snapshot
    9 x f32 weather
    n_control x (uav x,y,z,yaw | target x,y,z,yaw | action dx,dy,dz,dpsi) f32
    n_vision x (u32 frame_index, u32 episode_index, u32 task_index, f32 timestamp,
                f32[4] state, f32[4] pose, f32[k*4] chunk, u8[height*width] frame)
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .chunks import HISTORY, ActionChunk, FrameSample, make_frame_stack

MAGIC = b"UTD1"
_HEADER = struct.Struct("<4s5I")
_CONTROL = np.dtype([("uav", "<f4", 4), ("target", "<f4", 4), ("action", "<f4", 4)])


def _vision_dtype(width: int, height: int, k: int) -> np.dtype:
    return np.dtype(
        [
            ("frame_index", "<u4"),
            ("episode_index", "<u4"),
            ("task_index", "<u4"),
            ("timestamp", "<f4"),
            ("state", "<f4", 4),
            ("pose", "<f4", 4),
            ("chunk", "<f4", (k, 4)),
            ("frame", "u1", (height, width)),
        ]
    )


class UTDFormatError(ValueError):
    pass


@dataclass
class EpisodeRecord:
    """One recorded episode: 25 Hz control rows and 5 Hz vision rows."""

    prompt: str
    config: dict
    weather: np.ndarray
    control: np.ndarray
    vision: np.ndarray
    ticks_per_frame: int = field(default=5, compare=False)

    def __post_init__(self):
        self.weather = np.asarray(self.weather, dtype="<f4").reshape(9)
        if self.control.dtype != _CONTROL:
            raise ValueError("control table has the wrong dtype")
        n_c, n_v = len(self.control), len(self.vision)
        if abs(n_c - self.ticks_per_frame * n_v) >= self.ticks_per_frame:
            raise ValueError(f"{n_c} control ticks do not match {n_v} vision ticks")

    @property
    def n_control(self) -> int:
        return len(self.control)

    @property
    def n_vision(self) -> int:
        return len(self.vision)

    @property
    def frame_shape(self) -> tuple[int, int]:
        return tuple(self.vision.dtype["frame"].shape)

    @property
    def k(self) -> int:
        return self.vision.dtype["chunk"].shape[0]

    @property
    def frames(self) -> np.ndarray:
        return self.vision["frame"]

    def sample(self, i: int) -> FrameSample:
        row = self.vision[i]
        stack = make_frame_stack(self.vision["frame"], i, HISTORY)
        return FrameSample(
            frames=tuple(stack),
            state=row["state"].astype(np.float64),
            pose=row["pose"].astype(np.float64),
            chunk=ActionChunk(row["chunk"].astype(np.float64)),
            prompt=self.prompt,
            timestamp=float(row["timestamp"]),
            frame_index=int(row["frame_index"]),
            episode_index=int(row["episode_index"]),
            task_index=int(row["task_index"]),
        )

    def __eq__(self, other):
        if not isinstance(other, EpisodeRecord):
            return NotImplemented
        return (
            self.prompt == other.prompt
            and self.config == other.config
            and self.weather.tobytes() == other.weather.tobytes()
            and self.control.tobytes() == other.control.tobytes()
            and self.vision.dtype == other.vision.dtype
            and self.vision.tobytes() == other.vision.tobytes()
        )

    __hash__ = None


def empty_tables(n_control: int, n_vision: int, width: int, height: int, k: int):
    return np.zeros(n_control, dtype=_CONTROL), np.zeros(n_vision, dtype=_vision_dtype(width, height, k))


def encode_episode(record: EpisodeRecord) -> bytes:
    height, width = record.frame_shape
    prompt = record.prompt.encode("utf-8")
    config = json.dumps(record.config, sort_keys=True).encode("utf-8")
    parts = [
        _HEADER.pack(MAGIC, record.n_control, record.n_vision, width, height, record.k),
        struct.pack("<I", len(prompt)),
        prompt,
        struct.pack("<I", len(config)),
        config,
        record.weather.astype("<f4").tobytes(),
        np.ascontiguousarray(record.control).tobytes(),
        np.ascontiguousarray(record.vision).tobytes(),
    ]
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = memoryview(buf)
        self.pos = 0

    def take(self, n: int) -> memoryview:
        if self.pos + n > len(self.buf):
            raise UTDFormatError(f"unexpected end of data at byte {self.pos} (needed {n} more)")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out


def decode_episode(buf: bytes) -> EpisodeRecord:
    rd = _Reader(buf)
    if len(buf) >= 4 and bytes(buf[:4]) != MAGIC:
        raise UTDFormatError(f"not a UTD file (magic {bytes(buf[:4])!r})")
    magic, n_c, n_v, width, height, k = _HEADER.unpack(rd.take(_HEADER.size))
    prompt = bytes(rd.take(struct.unpack("<I", rd.take(4))[0])).decode("utf-8")
    config = json.loads(bytes(rd.take(struct.unpack("<I", rd.take(4))[0])).decode("utf-8"))
    weather = np.frombuffer(rd.take(36), dtype="<f4").copy()
    control = np.frombuffer(rd.take(n_c * _CONTROL.itemsize), dtype=_CONTROL).copy()
    vdt = _vision_dtype(width, height, k)
    vision = np.frombuffer(rd.take(n_v * vdt.itemsize), dtype=vdt).copy()
    if rd.pos != len(buf):
        raise UTDFormatError(f"{len(buf) - rd.pos} trailing bytes after episode data")
    tpf = int(config.get("ticks_per_frame", 5)) if isinstance(config, dict) else 5
    return EpisodeRecord(prompt, config, weather, control, vision, ticks_per_frame=tpf)


def write_episode(record: EpisodeRecord, path) -> None:
    data = encode_episode(record)
    try:
        with open(path, "wb") as fh:
            fh.write(data)
    except OSError as exc:
        raise OSError(f"failed to write episode to {path}: {exc}") from exc


def read_episode(path) -> EpisodeRecord:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise OSError(f"failed to read episode from {path}: {exc}") from exc
    try:
        return decode_episode(data)
    except UTDFormatError as exc:
        raise UTDFormatError(f"{path}: {exc}") from exc
