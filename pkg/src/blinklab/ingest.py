"""Session ingestion: manifest parsing, EEG traces, and clock alignment.

The acquisition rig runs two clocks: video at ``fps`` (30 Hz nominal, one
frame every 33 ms) and the EEG band at 1 Hz. Session start (t = 0) is the
first video frame, and EEG timestamps are stored relative to it, so the
conversion helpers here are the single source of truth for alignment.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

from .errors import (
    InvariantViolation,
    MalformedManifest,
    MissingFile,
    NegativeBandPower,
    NegativeTime,
    NonMonotonicTimestamps,
)

logger = logging.getLogger(__name__)

STREAM_KINDS = ("RGB", "NIR_LEFT", "NIR_RIGHT")
EEG_COLUMNS = ("t", "alpha", "beta", "gamma", "delta", "theta", "blink_strength", "attention")

# Video streams are directories of per-frame images named like 000042.png.
FRAME_NAME = "{:06d}.png"


@dataclass(frozen=True)
class StreamDescriptor:
    kind: str
    path: Path
    frame_count: int

    def frame_path(self, index: int) -> Path:
        return self.path / FRAME_NAME.format(index)


@dataclass(frozen=True)
class SessionManifest:
    session_id: str
    subject_id: str
    wears_glasses: bool
    streams: tuple[StreamDescriptor, ...]
    eeg_path: Path
    fps: float = 30.0
    resolution: tuple[int, int] = (1280, 720)

    @property
    def stream_kinds(self) -> tuple[str, ...]:
        return tuple(s.kind for s in self.streams)

    def stream(self, kind: str) -> StreamDescriptor:
        for s in self.streams:
            if s.kind == kind:
                return s
        raise KeyError(f"session {self.session_id} has no {kind} stream")

    @property
    def min_frame_count(self) -> int:
        return min(s.frame_count for s in self.streams)


@dataclass(frozen=True)
class EEGSample:
    """One 1 Hz band reading: five band powers, blink strength, attention."""

    t: float
    alpha: float
    beta: float
    gamma: float
    delta: float
    theta: float
    blink_strength: float
    attention: float


@dataclass(frozen=True)
class FrameRef:
    stream_kind: str
    frame_index: int


def load_session(manifest_path: str | Path) -> SessionManifest:
    """Parse and validate a session.json manifest.

    Relative paths (eeg_path, stream paths) are resolved against the
    manifest's directory.
    """
    path = Path(manifest_path)
    if not path.is_file():
        raise MissingFile(f"manifest not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedManifest(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise MalformedManifest(f"{path}: top level must be an object")

    base = path.parent

    def require(field: str):
        if field not in raw:
            raise MalformedManifest(f"{path}: missing required field '{field}'")
        return raw[field]

    session_id = str(require("session_id"))
    subject_id = str(require("subject_id"))
    wears_glasses = require("wears_glasses")
    if not isinstance(wears_glasses, bool):
        raise MalformedManifest(f"{path}: field 'wears_glasses' must be a boolean")
    eeg_path = base / str(require("eeg_path"))

    fps = raw.get("fps", 30.0)
    if not isinstance(fps, (int, float)) or isinstance(fps, bool):
        raise MalformedManifest(f"{path}: field 'fps' must be a number")
    if fps <= 0:
        raise InvariantViolation(f"{path}: fps must be > 0, got {fps}")

    resolution = raw.get("resolution", [1280, 720])
    if (
        not isinstance(resolution, (list, tuple))
        or len(resolution) != 2
        or not all(isinstance(v, int) and not isinstance(v, bool) for v in resolution)
    ):
        raise MalformedManifest(f"{path}: field 'resolution' must be [width, height]")
    if resolution[0] <= 0 or resolution[1] <= 0:
        raise InvariantViolation(f"{path}: resolution must be positive, got {resolution}")

    raw_streams = require("streams")
    if not isinstance(raw_streams, list):
        raise MalformedManifest(f"{path}: field 'streams' must be a list")
    streams = []
    seen_kinds = set()
    for i, entry in enumerate(raw_streams):
        if not isinstance(entry, dict):
            raise MalformedManifest(f"{path}: streams[{i}] must be an object")
        for field in ("kind", "path", "frame_count"):
            if field not in entry:
                raise MalformedManifest(f"{path}: streams[{i}] missing field '{field}'")
        kind = str(entry["kind"])
        if kind not in STREAM_KINDS:
            raise InvariantViolation(
                f"{path}: streams[{i}].kind must be one of {STREAM_KINDS}, got '{kind}'"
            )
        if kind in seen_kinds:
            raise InvariantViolation(f"{path}: duplicate stream kind '{kind}'")
        seen_kinds.add(kind)
        frame_count = entry["frame_count"]
        if not isinstance(frame_count, int) or isinstance(frame_count, bool) or frame_count < 0:
            raise InvariantViolation(
                f"{path}: streams[{i}].frame_count must be an integer >= 0"
            )
        streams.append(StreamDescriptor(kind=kind, path=base / str(entry["path"]), frame_count=frame_count))
    if not streams:
        raise InvariantViolation(f"{path}: manifest declares no streams")

    return SessionManifest(
        session_id=session_id,
        subject_id=subject_id,
        wears_glasses=wears_glasses,
        streams=tuple(streams),
        eeg_path=eeg_path,
        fps=float(fps),
        resolution=(resolution[0], resolution[1]),
    )


def load_eeg(path: str | Path) -> list[EEGSample]:
    """Load a 1 Hz EEG trace CSV (header: t,alpha,...,blink_strength,attention).

    Timestamps must be strictly increasing. Attention values outside
    [0, 100] are clipped with a warning (sensor glitches happen); negative
    band powers or blink strengths are an error.
    """
    p = Path(path)
    if not p.is_file():
        raise MissingFile(f"EEG trace not found: {p}")
    samples: list[EEGSample] = []
    clipped = 0
    with open(p, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in EEG_COLUMNS if c not in header]
        if missing:
            raise ValueError(f"{p}: EEG header missing columns {missing}")
        prev_t = None
        for lineno, row in enumerate(reader, start=2):
            try:
                vals = {c: float(row[c]) for c in EEG_COLUMNS}
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{p}:{lineno}: non-numeric value ({exc})") from exc
            t = vals["t"]
            if prev_t is not None and t <= prev_t:
                raise NonMonotonicTimestamps(
                    f"{p}:{lineno}: t={t} does not increase past {prev_t}"
                )
            prev_t = t
            for band in ("alpha", "beta", "gamma", "delta", "theta", "blink_strength"):
                if vals[band] < 0:
                    raise NegativeBandPower(f"{p}:{lineno}: {band}={vals[band]} is negative")
            attention = vals["attention"]
            if attention < 0.0 or attention > 100.0:
                attention = min(max(attention, 0.0), 100.0)
                clipped += 1
            samples.append(
                EEGSample(
                    t=t,
                    alpha=vals["alpha"],
                    beta=vals["beta"],
                    gamma=vals["gamma"],
                    delta=vals["delta"],
                    theta=vals["theta"],
                    blink_strength=vals["blink_strength"],
                    attention=attention,
                )
            )
    if clipped:
        logger.warning("%s: clipped %d attention values into [0, 100]", p, clipped)
    return samples


def time_to_frame(t: float, fps: float) -> int:
    """Map a timestamp to the nearest frame index, rounding half away from zero."""
    if fps <= 0:
        raise ValueError(f"fps must be > 0, got {fps}")
    if t < 0:
        raise NegativeTime(f"t must be >= 0, got {t}")
    return int(math.floor(t * fps + 0.5))


def frame_to_time(frame_index: int, fps: float) -> float:
    """Capture time of a frame index, in seconds from session start."""
    if fps <= 0:
        raise ValueError(f"fps must be > 0, got {fps}")
    if frame_index < 0:
        raise ValueError(f"frame_index must be >= 0, got {frame_index}")
    return frame_index / fps


def trace_duration(samples: list[EEGSample], nominal_dt: float = 1.0) -> float:
    """Duration covered by a trace: last timestamp plus one nominal period.

    A 240-row 1 Hz trace (t = 0..239) covers 240 s. The spacing is inferred
    from the data when there are enough rows, falling back to nominal_dt.
    """
    if not samples:
        return 0.0
    times = [s.t for s in samples]
    if len(times) >= 2:
        diffs = sorted(b - a for a, b in zip(times, times[1:]))
        dt = diffs[len(diffs) // 2]
        if dt <= 0:
            dt = nominal_dt
    else:
        dt = nominal_dt
    return times[-1] + dt
