"""Turning per-frame classifier scores into sample decisions and events.

A 21-frame sample is scored by its single most blink-like frame (max
aggregation): one clearly closed eye is enough evidence, and averaging
would dilute it with the 18+ open-eye frames around it. The operating
threshold is picked at the equal error rate point, where false positive
and false negative rates cross.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptyClass, EmptyScores

# A natural blink lasts 100-400 ms; at 30 fps that is 3-13 frames. Runs
# longer than this are flagged as deliberate or drowsy closures.
MAX_BLINK_FRAMES = 13
MIN_BLINK_FRAMES = 3


def aggregate_sample_score(frame_scores: Sequence[float]) -> float:
    """Collapse per-frame scores to one sample score via max."""
    if len(frame_scores) == 0:
        raise EmptyScores("cannot aggregate an empty score sequence")
    return float(max(frame_scores))


def classify(score: float, threshold: float) -> bool:
    """Blink iff the score strictly exceeds the threshold."""
    return score > threshold


@dataclass(frozen=True)
class ThresholdReport:
    threshold: float
    fpr: float
    fnr: float
    n_pos: int
    n_neg: int

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "fpr": self.fpr,
            "fnr": self.fnr,
            "n_pos": self.n_pos,
            "n_neg": self.n_neg,
        }


def calibrate_threshold(
    pos_scores: Sequence[float], neg_scores: Sequence[float]
) -> ThresholdReport:
    """Pick the decision threshold at the equal error rate point.

    Candidate thresholds are the midpoints between adjacent distinct values
    in the pooled sorted score list, plus sentinels one unit below the min
    and above the max (so "accept everything" and "reject everything" are
    always reachable). The winner minimizes |FPR - FNR|; ties go to the
    smaller FPR + FNR, then to the smaller threshold, which makes the
    result deterministic for any input.
    """
    if len(pos_scores) == 0:
        raise EmptyClass("no positive scores to calibrate on")
    if len(neg_scores) == 0:
        raise EmptyClass("no negative scores to calibrate on")
    pos = np.asarray(pos_scores, dtype=np.float64)
    neg = np.asarray(neg_scores, dtype=np.float64)

    pooled = np.unique(np.concatenate([pos, neg]))
    candidates = [pooled[0] - 1.0]
    candidates.extend((pooled[:-1] + pooled[1:]) / 2.0)
    candidates.append(pooled[-1] + 1.0)

    best = None
    for thr in candidates:
        fpr = float(np.mean(neg > thr))
        fnr = float(np.mean(pos <= thr))
        key = (abs(fpr - fnr), fpr + fnr, thr)
        if best is None or key < best[0]:
            best = (key, thr, fpr, fnr)
    _, thr, fpr, fnr = best
    return ThresholdReport(
        threshold=float(thr), fpr=fpr, fnr=fnr, n_pos=len(pos), n_neg=len(neg)
    )


@dataclass(frozen=True)
class BlinkEvent:
    start_frame: int
    end_frame: int
    peak_score: float
    long_closure: bool = False

    @property
    def span(self) -> int:
        return self.end_frame - self.start_frame + 1


def detect_events(
    frame_scores: Sequence[float], threshold: float, min_gap_frames: int = 4
) -> list[BlinkEvent]:
    """Find blink events in a continuous per-frame score stream.

    An event is a maximal run of frames scoring above the threshold. Runs
    separated by fewer than min_gap_frames below-threshold frames are
    merged: a blink's trough between two half-closed frames should not
    split it in two. Merged spans longer than 13 frames are kept whole but
    flagged as long closures.
    """
    scores = np.asarray(frame_scores, dtype=np.float64)
    above = scores > threshold
    runs: list[tuple[int, int]] = []
    start = None
    for i, flag in enumerate(above):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            runs.append((start, i - 1))
            start = None
    if start is not None:
        runs.append((start, len(above) - 1))

    merged: list[tuple[int, int]] = []
    for lo, hi in runs:
        if merged and lo - merged[-1][1] - 1 < min_gap_frames:
            merged[-1] = (merged[-1][0], hi)
        else:
            merged.append((lo, hi))

    events = []
    for lo, hi in merged:
        peak = float(scores[lo : hi + 1].max())
        span = hi - lo + 1
        events.append(
            BlinkEvent(
                start_frame=lo,
                end_frame=hi,
                peak_score=peak,
                long_closure=span > MAX_BLINK_FRAMES,
            )
        )
    return events


def recall(tp: int, fn: int) -> float:
    return tp / (tp + fn) if tp + fn > 0 else 0.0


def precision(tp: int, fp: int) -> float:
    return tp / (tp + fp) if tp + fp > 0 else 0.0


def f1_score(tp: int, fp: int, fn: int) -> float:
    r = recall(tp, fn)
    p = precision(tp, fp)
    return 2.0 * p * r / (p + r) if p + r > 0 else 0.0
