"""Semi-supervised blink labeling: EEG peaks -> candidates -> reviewed
21-frame samples -> balanced dataset on disk.

The EEG band's blink-strength channel proposes candidates (local maxima
above a scale-free quantile threshold), a human accept/reject pass recorded
in a decisions CSV refines them, and accepted events become 21-frame blink
samples (center frame +/- 10). No-blink negatives are subsampled from
footage far from any blink so the two classes balance 1:1.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import shutil
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image

from . import eyes as eyes_mod
from .errors import (
    EmptyTrace,
    InsufficientNegativeFootage,
    NoFaceFound,
    WindowOutOfBounds,
)
from .ingest import EEGSample, SessionManifest, time_to_frame

logger = logging.getLogger(__name__)

WINDOW_HALF = 10
WINDOW_LEN = 2 * WINDOW_HALF + 1  # 21 frames: center +/- 10
DEFAULT_QUANTILE = 0.10
DEFAULT_MERGE_GAP = 13  # a blink spans at most 13 frames; closer peaks are one blink
DEFAULT_MARGIN = 15  # negative windows keep this many frames beyond any blink window

CANDIDATE_FIELDS = ("candidate_id", "session_id", "t_eeg", "center_frame", "strength", "status")
DECISION_FIELDS = ("candidate_id", "decision", "reviewer", "decided_at")


@dataclass(frozen=True)
class BlinkCandidate:
    candidate_id: str
    session_id: str
    t_eeg: float
    center_frame: int
    strength: float
    status: str = "pending"  # pending | accepted | rejected


@dataclass(frozen=True)
class DecisionRecord:
    candidate_id: str
    decision: str  # accept | reject
    reviewer: str
    decided_at: datetime


@dataclass(frozen=True)
class LabeledSample:
    sample_id: str
    label: str  # blink | no_blink
    session_id: str
    frame_range: tuple[int, int]  # inclusive [first, last], last - first + 1 == 21
    streams: tuple[str, ...]

    @property
    def center_frame(self) -> int:
        return self.frame_range[0] + WINDOW_HALF


def extract_candidates(
    eeg: Sequence[EEGSample],
    min_strength_quantile: float = DEFAULT_QUANTILE,
    *,
    session_id: str = "session",
    fps: float = 30.0,
    merge_gap_frames: int = DEFAULT_MERGE_GAP,
) -> list[BlinkCandidate]:
    """Propose blink candidates from the blink-strength channel.

    A candidate is a local maximum of blink_strength at or above the given
    quantile of all strictly positive strengths (the lower empirical
    quantile, so the threshold is always an observed value and the rule is
    invariant to rescaling the vendor's units). Peaks whose frames land
    closer than merge_gap_frames collapse to the stronger one, since one
    physical blink cannot span two of them.
    """
    if len(eeg) == 0:
        raise EmptyTrace("cannot extract candidates from an empty EEG trace")
    if not 0.0 < min_strength_quantile < 1.0:
        raise ValueError(f"min_strength_quantile must be in (0,1), got {min_strength_quantile}")
    s = np.array([x.blink_strength for x in eeg], dtype=np.float64)
    positive = s[s > 0]
    if positive.size == 0:
        return []
    floor = float(np.quantile(positive, min_strength_quantile, method="lower"))

    peaks = []
    n = len(s)
    for i in range(n):
        if s[i] <= 0 or s[i] < floor:
            continue
        left_ok = i == 0 or s[i] >= s[i - 1]
        right_ok = i == n - 1 or s[i] > s[i + 1]
        if left_ok and right_ok:
            peaks.append(i)

    merged: list[int] = []
    for i in peaks:
        if merged:
            prev = merged[-1]
            if abs(time_to_frame(eeg[i].t, fps) - time_to_frame(eeg[prev].t, fps)) < merge_gap_frames:
                if s[i] > s[prev]:
                    merged[-1] = i
                continue
        merged.append(i)

    return [
        BlinkCandidate(
            candidate_id=f"{session_id}-c{k:04d}",
            session_id=session_id,
            t_eeg=float(eeg[i].t),
            center_frame=time_to_frame(eeg[i].t, fps),
            strength=float(s[i]),
            status="pending",
        )
        for k, i in enumerate(merged)
    ]


def extract_window(center_frame: int, frame_count: int) -> tuple[int, int]:
    """The 21-frame range [center-10, center+10], checked against the stream."""
    first = center_frame - WINDOW_HALF
    last = center_frame + WINDOW_HALF
    if first < 0 or last >= frame_count:
        raise WindowOutOfBounds(
            f"window [{first}, {last}] around frame {center_frame} "
            f"exceeds stream of {frame_count} frames"
        )
    return (first, last)


def apply_decisions(
    candidates: Sequence[BlinkCandidate], decisions: Sequence[DecisionRecord]
) -> tuple[list[BlinkCandidate], list[str]]:
    """Fold review decisions into candidate statuses.

    For each candidate the decision with the latest decided_at wins (a tie
    goes to the later record, matching append order in the decisions file).
    Unknown candidate_ids are returned, not raised: a stale decisions file
    must not kill the pipeline.
    """
    latest: dict[str, DecisionRecord] = {}
    known = {c.candidate_id for c in candidates}
    unknown: list[str] = []
    for rec in decisions:
        if rec.candidate_id not in known:
            unknown.append(rec.candidate_id)
            continue
        cur = latest.get(rec.candidate_id)
        if cur is None or rec.decided_at >= cur.decided_at:
            latest[rec.candidate_id] = rec
    status_map = {"accept": "accepted", "reject": "rejected"}
    updated = []
    for c in candidates:
        rec = latest.get(c.candidate_id)
        if rec is None:
            updated.append(c)
        else:
            updated.append(dataclasses.replace(c, status=status_map[rec.decision]))
    return updated, unknown


# --------------------------------------------------------------------------
# candidate / decision CSV files


def write_candidates(path: str | Path, candidates: Iterable[BlinkCandidate]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CANDIDATE_FIELDS)
        for c in candidates:
            writer.writerow(
                [c.candidate_id, c.session_id, repr(c.t_eeg), c.center_frame, repr(c.strength), c.status]
            )


def read_candidates(path: str | Path) -> list[BlinkCandidate]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(
                BlinkCandidate(
                    candidate_id=row["candidate_id"],
                    session_id=row["session_id"],
                    t_eeg=float(row["t_eeg"]),
                    center_frame=int(row["center_frame"]),
                    strength=float(row["strength"]),
                    status=row.get("status", "pending") or "pending",
                )
            )
    return out


def parse_timestamp(value: str) -> datetime:
    dt = datetime.fromisoformat(value.replace("Z", "+00:00"))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt


def format_timestamp(dt: datetime) -> str:
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


def read_decisions(path: str | Path) -> list[DecisionRecord]:
    p = Path(path)
    if not p.is_file():
        return []
    out = []
    with open(p, newline="") as fh:
        for row in csv.DictReader(fh):
            if not row.get("candidate_id"):
                continue
            out.append(
                DecisionRecord(
                    candidate_id=row["candidate_id"],
                    decision=row["decision"],
                    reviewer=row.get("reviewer", ""),
                    decided_at=parse_timestamp(row["decided_at"]),
                )
            )
    return out


def append_decision(path: str | Path, record: DecisionRecord) -> None:
    """Append one decision row, creating the file (with header) on first use."""
    p = Path(path)
    new = not p.exists() or p.stat().st_size == 0
    with open(p, "a", newline="") as fh:
        writer = csv.writer(fh)
        if new:
            writer.writerow(DECISION_FIELDS)
        writer.writerow(
            [record.candidate_id, record.decision, record.reviewer, format_timestamp(record.decided_at)]
        )
        fh.flush()


# --------------------------------------------------------------------------
# negative sampling


def _run_capacity(lo: int, hi: int) -> int:
    # max count of mutually disjoint 21-frame windows whose starts lie in [lo, hi]
    return 0 if hi < lo else (hi - lo) // WINDOW_LEN + 1


def negative_capacity(frame_count: int, blink_ranges: Sequence[tuple[int, int]], margin_frames: int) -> int:
    """Max no-blink windows that fit given the blink windows and margin."""
    runs = _free_runs(frame_count, blink_ranges, margin_frames)
    return sum(_run_capacity(lo, hi) for lo, hi in runs)


def _free_runs(
    frame_count: int, blink_ranges: Sequence[tuple[int, int]], margin_frames: int
) -> list[tuple[int, int]]:
    max_start = frame_count - WINDOW_LEN
    if max_start < 0:
        return []
    blocked = []
    for b0, b1 in blink_ranges:
        # a window starting at s spans [s, s+20]; keep its distance from
        # [b0, b1] strictly greater than margin_frames on either side
        blocked.append((b0 - margin_frames - (WINDOW_LEN - 1), b1 + margin_frames))
    blocked.sort()
    runs = []
    cursor = 0
    for lo, hi in blocked:
        lo = max(lo, 0)
        if lo > max_start:
            break
        if lo > cursor:
            runs.append((cursor, min(lo - 1, max_start)))
        cursor = max(cursor, hi + 1)
    if cursor <= max_start:
        runs.append((cursor, max_start))
    return runs


def sample_negatives(
    accepted: Sequence[LabeledSample],
    session: SessionManifest,
    count: int,
    margin_frames: int = DEFAULT_MARGIN,
    rng_seed: int = 0,
) -> list[LabeledSample]:
    """Draw `count` disjoint 21-frame no-blink windows, margin-clear of blinks.

    Selection is uniform-random over the starts that keep the remaining
    demand satisfiable (capacity bookkeeping below), so the draw is both
    seeded-deterministic and guaranteed to finish whenever `count` windows
    fit at all.
    """
    if count < 0:
        raise ValueError(f"count must be >= 0, got {count}")
    frame_count = session.min_frame_count
    blink_ranges = [s.frame_range for s in accepted if s.session_id == session.session_id]
    runs = _free_runs(frame_count, blink_ranges, margin_frames)
    achievable = sum(_run_capacity(lo, hi) for lo, hi in runs)
    if count > achievable:
        raise InsufficientNegativeFootage(requested=count, achievable=achievable)

    rng = np.random.default_rng(rng_seed)
    picked: list[int] = []
    total = achievable
    for need in range(count, 0, -1):
        feasible = []
        for ri, (lo, hi) in enumerate(runs):
            cap = _run_capacity(lo, hi)
            for s in range(lo, hi + 1):
                delta = _run_capacity(lo, s - WINDOW_LEN) + _run_capacity(s + WINDOW_LEN, hi) - cap
                if total + delta >= need - 1:
                    feasible.append((ri, s))
        ri, s = feasible[int(rng.integers(len(feasible)))]
        lo, hi = runs[ri]
        picked.append(s)
        new_runs = runs[:ri] + runs[ri + 1 :]
        total -= _run_capacity(lo, hi)
        if s - WINDOW_LEN >= lo:
            new_runs.append((lo, s - WINDOW_LEN))
            total += _run_capacity(lo, s - WINDOW_LEN)
        if s + WINDOW_LEN <= hi:
            new_runs.append((s + WINDOW_LEN, hi))
            total += _run_capacity(s + WINDOW_LEN, hi)
        runs = sorted(new_runs)

    picked.sort()
    return [
        LabeledSample(
            sample_id=f"{session.session_id}-n{s:06d}",
            label="no_blink",
            session_id=session.session_id,
            frame_range=(s, s + WINDOW_LEN - 1),
            streams=session.stream_kinds,
        )
        for s in picked
    ]


def blink_samples_from_candidates(
    candidates: Sequence[BlinkCandidate], session: SessionManifest
) -> list[LabeledSample]:
    """Accepted candidates -> 21-frame blink samples; boundary ones dropped."""
    out = []
    frame_count = session.min_frame_count
    for c in candidates:
        if c.session_id != session.session_id or c.status != "accepted":
            continue
        try:
            frame_range = extract_window(c.center_frame, frame_count)
        except WindowOutOfBounds as exc:
            logger.info("dropping candidate %s: %s", c.candidate_id, exc)
            continue
        out.append(
            LabeledSample(
                sample_id=f"{session.session_id}-b{c.center_frame:06d}",
                label="blink",
                session_id=session.session_id,
                frame_range=frame_range,
                streams=session.stream_kinds,
            )
        )
    return out


# --------------------------------------------------------------------------
# dataset build


@dataclass(frozen=True)
class DatasetSummary:
    blink_count: int
    no_blink_count: int
    stream_count: int
    skipped_samples: int = 0
    dropped_candidates: int = 0

    @property
    def sample_count(self) -> int:
        return self.blink_count + self.no_blink_count

    @property
    def total_eye_images(self) -> int:
        # samples x 21 frames x 2 eyes x streams
        return self.sample_count * WINDOW_LEN * 2 * self.stream_count

    @classmethod
    def from_counts(cls, blink: int, no_blink: int, stream_count: int) -> "DatasetSummary":
        return cls(blink_count=blink, no_blink_count=no_blink, stream_count=stream_count)

    def to_dict(self) -> dict:
        return {
            "blink_count": self.blink_count,
            "no_blink_count": self.no_blink_count,
            "stream_count": self.stream_count,
            "sample_count": self.sample_count,
            "total_eye_images": self.total_eye_images,
            "skipped_samples": self.skipped_samples,
            "dropped_candidates": self.dropped_candidates,
        }


def _write_sample(
    sample: LabeledSample,
    session: SessionManifest,
    out_dir: Path,
    adapter,
    pad: float,
) -> None:
    """Write one sample's face frames, eye crops, and metadata.

    Raises NoFaceFound if any of the 21 frames fails landmarking; the
    caller removes the partial directory.
    """
    first, last = sample.frame_range
    boxes_meta: dict[str, list] = {}
    for stream in session.streams:
        stream_dir = out_dir / stream.kind
        stream_dir.mkdir(parents=True, exist_ok=True)
        frame_boxes = []
        for offset in range(WINDOW_LEN):
            frame_path = stream.frame_path(first + offset)
            img = eyes_mod.load_image(frame_path)
            landmarks = eyes_mod.detect_landmarks(frame_path, adapter)
            h, w = img.shape[:2]
            left_box, right_box = eyes_mod.eye_boxes_from_landmarks(
                landmarks, pad=pad, frame_size=(w, h)
            )
            left = eyes_mod.crop_and_resize(img, left_box)
            right = eyes_mod.crop_and_resize(img, right_box)
            shutil.copyfile(frame_path, stream_dir / f"face_{offset:02d}.png")
            _save_crop(left.pixels, stream_dir / f"left_eye_{offset:02d}.png")
            _save_crop(right.pixels, stream_dir / f"right_eye_{offset:02d}.png")
            frame_boxes.append(
                {
                    "offset": offset,
                    "left": list(left_box.as_tuple()),
                    "right": list(right_box.as_tuple()),
                }
            )
        boxes_meta[stream.kind] = frame_boxes
    meta = {
        "sample_id": sample.sample_id,
        "label": sample.label,
        "session_id": sample.session_id,
        "frame_range": list(sample.frame_range),
        "streams": list(sample.streams),
        "eye_boxes": boxes_meta,
    }
    (out_dir / "sample.json").write_text(json.dumps(meta, indent=2) + "\n")


def _save_crop(pixels: np.ndarray, path: Path) -> None:
    Image.fromarray((np.clip(pixels, 0.0, 1.0) * 255.0).round().astype(np.uint8)).save(path)


def build_dataset(
    sessions: Sequence[SessionManifest],
    candidates: Sequence[BlinkCandidate],
    decisions: Sequence[DecisionRecord],
    output_dir: str | Path,
    *,
    adapter=None,
    pad: float = eyes_mod.DEFAULT_PAD,
    margin_frames: int = DEFAULT_MARGIN,
    per_session_balance: bool = False,
    rng_seed: int = 0,
) -> DatasetSummary:
    """Materialize the labeled dataset on disk and return its counts.

    Layout: <out>/{blink|no_blink}/<sample_id>/<stream>/{face,left_eye,
    right_eye}_00..20.png plus per-sample sample.json. Negatives balance
    the blink count globally (or per session when asked); a session whose
    footage cannot host its share raises InsufficientNegativeFootage
    unless another session can absorb it in global mode.
    """
    if adapter is None:
        adapter = eyes_mod.BlobLandmarkAdapter()
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)

    updated, unknown = apply_decisions(candidates, decisions)
    if unknown:
        logger.warning("decisions referenced %d unknown candidate ids", len(unknown))

    accepted_count = sum(1 for c in updated if c.status == "accepted")
    per_session_blinks: dict[str, list[LabeledSample]] = {}
    for session in sessions:
        per_session_blinks[session.session_id] = blink_samples_from_candidates(updated, session)
    dropped = accepted_count - sum(len(v) for v in per_session_blinks.values())

    # negatives: match the blink count, drawn per session
    per_session_quota: dict[str, int] = {}
    capacities = {
        s.session_id: negative_capacity(
            s.min_frame_count,
            [b.frame_range for b in per_session_blinks[s.session_id]],
            margin_frames,
        )
        for s in sessions
    }
    if per_session_balance:
        for s in sessions:
            per_session_quota[s.session_id] = len(per_session_blinks[s.session_id])
    else:
        total_needed = sum(len(v) for v in per_session_blinks.values())
        if total_needed > sum(capacities.values()):
            raise InsufficientNegativeFootage(
                requested=total_needed, achievable=sum(capacities.values())
            )
        remaining = total_needed
        for i, s in enumerate(sessions):
            want = len(per_session_blinks[s.session_id])
            take = min(max(want, 0), capacities[s.session_id], remaining)
            per_session_quota[s.session_id] = take
            remaining -= take
        # spill unmet demand into sessions with spare capacity
        for s in sessions:
            if remaining <= 0:
                break
            spare = capacities[s.session_id] - per_session_quota[s.session_id]
            extra = min(spare, remaining)
            per_session_quota[s.session_id] += extra
            remaining -= extra

    blink_written = 0
    neg_written = 0
    skipped = 0
    stream_count = max((len(s.streams) for s in sessions), default=0)
    for session in sessions:
        blinks = per_session_blinks[session.session_id]
        negatives = sample_negatives(
            blinks, session, per_session_quota[session.session_id], margin_frames, rng_seed
        )
        for sample in [*blinks, *negatives]:
            sample_dir = out / sample.label / sample.sample_id
            try:
                _write_sample(sample, session, sample_dir, adapter, pad)
            except NoFaceFound as exc:
                logger.warning("skipping sample %s: %s", sample.sample_id, exc)
                shutil.rmtree(sample_dir, ignore_errors=True)
                skipped += 1
                continue
            if sample.label == "blink":
                blink_written += 1
            else:
                neg_written += 1

    summary = DatasetSummary(
        blink_count=blink_written,
        no_blink_count=neg_written,
        stream_count=stream_count,
        skipped_samples=skipped,
        dropped_candidates=dropped,
    )
    (out / "summary.json").write_text(json.dumps(summary.to_dict(), indent=2) + "\n")
    return summary
