"""Attention vs blink-rate analysis: sliding-window averages, bpm series,
min-max normalization, and their Pearson correlation.

Attention is averaged over 20 s windows sliding by 5 s; blink rate uses
5 s windows. Windows are left-aligned and half-open [t, t + window). The
two series end up on different grids, so correlation resamples both onto
the coarser grid by nearest time before computing r. Attention and blink
rate are expected to anti-correlate.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    EmptyTrace,
    InsufficientOverlap,
    WindowLongerThanTrace,
    ZeroVariance,
)
from .ingest import EEGSample, trace_duration
from .scoring import BlinkEvent

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TimeSeries:
    times: tuple[float, ...]
    values: tuple[float, ...]
    meaning: str  # attention | blink_rate_bpm | blink_rate_groundtruth_bpm

    def __post_init__(self):
        if len(self.times) != len(self.values):
            raise ValueError("times and values must have equal length")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("times must be strictly increasing")

    def __len__(self) -> int:
        return len(self.times)

    @property
    def values_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)

    @property
    def times_array(self) -> np.ndarray:
        return np.asarray(self.times, dtype=np.float64)


def attention_series(
    eeg: Sequence[EEGSample], window: float = 20.0, slide: float = 5.0
) -> TimeSeries:
    """Mean attention in [t, t + window) at t = 0, slide, 2*slide, ...

    The trace is taken to cover [0, last_t + dt) where dt is the observed
    sample spacing, so a 240-row 1 Hz trace supports windows up to t = 220
    (45 points at the default 20/5 parameters).
    """
    if len(eeg) == 0:
        raise EmptyTrace("attention_series needs a non-empty EEG trace")
    if not (window >= slide > 0):
        raise ValueError(f"need window >= slide > 0, got window={window} slide={slide}")
    end = trace_duration(list(eeg))
    if window > end:
        raise WindowLongerThanTrace(f"window {window} s exceeds the {end:.3f} s trace")
    ts = np.array([s.t for s in eeg])
    vs = np.array([s.attention for s in eeg])
    times = []
    values = []
    k = 0
    while k * slide + window <= end:
        t = k * slide
        mask = (ts >= t) & (ts < t + window)
        if not mask.any():
            logger.warning("attention window [%g, %g) contains no samples", t, t + window)
            values.append(0.0)
        else:
            values.append(float(vs[mask].mean()))
        times.append(float(t))
        k += 1
    return TimeSeries(times=tuple(times), values=tuple(values), meaning="attention")


def blink_rate_series(
    events: Sequence[BlinkEvent],
    fps: float,
    window: float = 5.0,
    slide: float = 5.0,
    *,
    duration: float,
    meaning: str = "blink_rate_bpm",
) -> TimeSeries:
    """Blinks per minute at t = 0, slide, ...: events starting in
    [t, t + window) scaled by 60/window. duration bounds the grid the same
    way the trace end bounds attention_series."""
    if window <= 0 or slide <= 0:
        raise ValueError(f"window and slide must be > 0, got {window}, {slide}")
    starts = np.array([ev.start_frame / fps for ev in events], dtype=np.float64)
    times = []
    values = []
    k = 0
    while k * slide + window <= duration:
        t = k * slide
        count = int(np.count_nonzero((starts >= t) & (starts < t + window))) if len(starts) else 0
        times.append(float(t))
        values.append(count * 60.0 / window)
        k += 1
    return TimeSeries(times=tuple(times), values=tuple(values), meaning=meaning)


def minmax_normalize(series: TimeSeries) -> TimeSeries:
    """(v - min) / (max - min); a constant series maps to all zeros."""
    if len(series) == 0:
        raise ValueError("cannot normalize an empty series")
    v = series.values_array
    lo, hi = float(v.min()), float(v.max())
    if hi - lo == 0.0:
        out = np.zeros_like(v)
    else:
        out = (v - lo) / (hi - lo)
    return TimeSeries(times=series.times, values=tuple(float(x) for x in out), meaning=series.meaning)


def _nearest_values(series: TimeSeries, query_times: np.ndarray) -> np.ndarray:
    ts = series.times_array
    vs = series.values_array
    idx = np.searchsorted(ts, query_times)
    idx = np.clip(idx, 0, len(ts) - 1)
    left = np.clip(idx - 1, 0, len(ts) - 1)
    pick_left = np.abs(query_times - ts[left]) <= np.abs(ts[idx] - query_times)
    return np.where(pick_left, vs[left], vs[idx])


def _median_step(series: TimeSeries) -> float:
    ts = series.times_array
    if len(ts) < 2:
        return math.inf
    return float(np.median(np.diff(ts)))


def correlate(a: TimeSeries, b: TimeSeries) -> float:
    """Pearson r after resampling both series onto the coarser grid.

    The grid with the larger median step wins (fewer points on a tie); the
    other series is matched by nearest time. Needs at least 3 shared
    points and some variance on both sides.
    """
    if len(a) == 0 or len(b) == 0:
        raise InsufficientOverlap("cannot correlate empty series")
    step_a, step_b = _median_step(a), _median_step(b)
    if step_a > step_b or (step_a == step_b and len(a) <= len(b)):
        grid, other = a, b
    else:
        grid, other = b, a
    t = grid.times_array
    lo = max(a.times[0], b.times[0])
    hi = min(a.times[-1], b.times[-1])
    mask = (t >= lo) & (t <= hi)
    if int(mask.sum()) < 3:
        raise InsufficientOverlap(
            f"only {int(mask.sum())} shared points between the series (need >= 3)"
        )
    x = grid.values_array[mask]
    y = _nearest_values(other, t[mask])
    if float(np.ptp(x)) == 0.0 or float(np.ptp(y)) == 0.0:
        raise ZeroVariance("one of the series is constant over the overlap")
    return float(np.corrcoef(x, y)[0, 1])


def events_from_candidates(candidates) -> list[BlinkEvent]:
    """Blink events located at candidate center frames (the EEG clock only
    resolves to the second, so the center stands in for the onset)."""
    return [
        BlinkEvent(
            start_frame=c.center_frame,
            end_frame=c.center_frame,
            peak_score=float(c.strength),
            long_closure=False,
        )
        for c in candidates
    ]


# --------------------------------------------------------------------------
# report generation


def attention_report(
    eeg: Sequence[EEGSample],
    events_est: Sequence[BlinkEvent],
    events_gt: Sequence[BlinkEvent],
    fps: float,
    output_dir: str | Path,
    session_id: str = "session",
    *,
    window: float = 20.0,
    slide: float = 5.0,
    bpm_window: float = 5.0,
    make_plot: bool = True,
) -> dict:
    """Write the per-session report: normalized attention, estimated bpm,
    ground-truth bpm (CSV on the attention grid), correlation summary
    JSON, and a plot. Returns the summary dict."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    duration = trace_duration(list(eeg))

    att = attention_series(eeg, window=window, slide=slide)
    bpm_est = blink_rate_series(events_est, fps, window=bpm_window, slide=slide, duration=duration)
    bpm_gt = blink_rate_series(
        events_gt, fps, window=bpm_window, slide=slide, duration=duration,
        meaning="blink_rate_groundtruth_bpm",
    )
    att_n = minmax_normalize(att)
    est_n = minmax_normalize(bpm_est)
    gt_n = minmax_normalize(bpm_gt)

    summary: dict = {
        "session_id": session_id,
        "n_events_est": len(events_est),
        "n_events_gt": len(events_gt),
        "duration_s": duration,
        "window_s": window,
        "slide_s": slide,
        "bpm_window_s": bpm_window,
    }
    for name, series in (("r_est", bpm_est), ("r_gt", bpm_gt)):
        try:
            summary[name] = correlate(att, series)
        except (ZeroVariance, InsufficientOverlap) as exc:
            summary[name] = None
            summary[f"{name}_note"] = str(exc)

    grid = att_n.times_array
    est_vals = _nearest_values(est_n, grid) if len(est_n) else np.zeros_like(grid)
    gt_vals = _nearest_values(gt_n, grid) if len(gt_n) else np.zeros_like(grid)
    csv_path = out / f"{session_id}_series.csv"
    with open(csv_path, "w") as fh:
        fh.write("t,attention_norm,bpm_est_norm,bpm_gt_norm\n")
        for t, a_v, e_v, g_v in zip(grid, att_n.values, est_vals, gt_vals):
            fh.write(f"{t:.3f},{a_v:.6f},{e_v:.6f},{g_v:.6f}\n")

    json_path = out / f"{session_id}_summary.json"
    json_path.write_text(json.dumps(summary, indent=2) + "\n")

    if make_plot:
        plot_path = out / f"{session_id}_report.png"
        _plot_session(session_id, att_n, est_n, gt_n, plot_path)
        summary["plot"] = str(plot_path)
    summary["csv"] = str(csv_path)
    return summary


def _plot_session(
    session_id: str, att: TimeSeries, est: TimeSeries, gt: TimeSeries, path: Path
) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(9, 3.2))
    ax.plot(att.times, att.values, label="attention (norm)", color="tab:blue")
    ax.plot(est.times, est.values, label="blink rate est (norm)", color="tab:red")
    ax.plot(gt.times, gt.values, label="blink rate gt (norm)", color="tab:green", linestyle="--")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("normalized value")
    ax.set_title(session_id)
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
