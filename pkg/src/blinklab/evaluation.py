"""Per-eye benchmark evaluation: 13-frame samples -> crops -> scores ->
max aggregation -> threshold decision -> Recall/Precision/F1 table.

The benchmark layout on disk is `bench/{blink|no_blink}/<sample_id>/
<eye_side>/%02d.png` with frames 00-12. Directory placement is the label
truth; labels.csv, when present, is an index only.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import eyes as eyes_mod
from .errors import MalformedSample, NoFaceFound
from .scoring import aggregate_sample_score, classify, f1_score, precision, recall

logger = logging.getLogger(__name__)

FRAMES_PER_SAMPLE = 13
EYE_SIDES = ("left", "right")


@dataclass(frozen=True)
class BenchmarkSample:
    sample_id: str
    eye_side: str
    frames: tuple[Path, ...]  # 13 ordered image paths
    label: str  # blink | no_blink


@dataclass(frozen=True)
class EvalMetrics:
    eye_side: str
    tp: int
    fp: int
    fn: int
    tn: int
    recall: float
    precision: float
    f1: float

    @classmethod
    def from_counts(cls, eye_side: str, tp: int, fp: int, fn: int, tn: int) -> "EvalMetrics":
        return cls(
            eye_side=eye_side,
            tp=tp,
            fp=fp,
            fn=fn,
            tn=tn,
            recall=recall(tp, fn),
            precision=precision(tp, fp),
            f1=f1_score(tp, fp, fn),
        )

    def to_dict(self) -> dict:
        return {
            "eye_side": self.eye_side,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "tn": self.tn,
            "recall": self.recall,
            "precision": self.precision,
            "f1": self.f1,
        }


def load_benchmark(root_dir: str | Path) -> list[BenchmarkSample]:
    """Collect all well-formed samples; malformed ones are logged and skipped."""
    root = Path(root_dir)
    samples: list[BenchmarkSample] = []
    for label in ("blink", "no_blink"):
        label_dir = root / label
        if not label_dir.is_dir():
            continue
        for sample_dir in sorted(label_dir.iterdir()):
            if not sample_dir.is_dir():
                continue
            for side_dir in sorted(sample_dir.iterdir()):
                if not side_dir.is_dir() or side_dir.name not in EYE_SIDES:
                    continue
                frames = sorted(side_dir.glob("*.png"))
                try:
                    if len(frames) != FRAMES_PER_SAMPLE:
                        raise MalformedSample(
                            f"{side_dir}: expected {FRAMES_PER_SAMPLE} frames, found {len(frames)}"
                        )
                except MalformedSample as exc:
                    logger.warning("skipping sample: %s", exc)
                    continue
                samples.append(
                    BenchmarkSample(
                        sample_id=sample_dir.name,
                        eye_side=side_dir.name,
                        frames=tuple(frames),
                        label=label,
                    )
                )
    return samples


def benchmark_counts(samples: Sequence[BenchmarkSample]) -> dict:
    counts: dict = {"total": len(samples)}
    for label in ("blink", "no_blink"):
        counts[label] = sum(1 for s in samples if s.label == label)
    for side in EYE_SIDES:
        counts[side] = sum(1 for s in samples if s.eye_side == side)
    return counts


def score_benchmark_sample(sample: BenchmarkSample, checkpoint, adapter, pad: float) -> float:
    """Max over the 13 per-frame scores for one benchmark sample."""
    frame_scores = []
    for path in sample.frames:
        img = eyes_mod.load_image(path)
        landmarks = eyes_mod.detect_landmarks(path if _adapter_wants_path(adapter) else img, adapter)
        h, w = img.shape[:2]
        left_box, right_box = eyes_mod.eye_boxes_from_landmarks(landmarks, pad=pad, frame_size=(w, h))
        box = left_box if sample.eye_side == "left" else right_box
        crop = eyes_mod.crop_and_resize(img, box)
        frame_scores.append(float(checkpoint.predict(crop.pixels, side=sample.eye_side)))
    return aggregate_sample_score(frame_scores)


def _adapter_wants_path(adapter) -> bool:
    return isinstance(adapter, (eyes_mod.SidecarLandmarkAdapter, eyes_mod.CommandLandmarkAdapter))


def evaluate(
    samples: Sequence[BenchmarkSample],
    checkpoint,
    threshold: float,
    adapter=None,
    pad: float = eyes_mod.DEFAULT_PAD,
) -> dict:
    """Score and classify every sample; return per-eye and pooled metrics.

    Samples whose frames fail landmarking are excluded and counted under
    "skipped" rather than polluting the confusion counts.
    """
    if adapter is None:
        adapter = eyes_mod.BlobLandmarkAdapter()
    counts = {side: {"tp": 0, "fp": 0, "fn": 0, "tn": 0} for side in EYE_SIDES}
    skipped = 0
    scores: list[dict] = []
    for sample in samples:
        try:
            score = score_benchmark_sample(sample, checkpoint, adapter, pad)
        except NoFaceFound as exc:
            logger.warning("skipping %s/%s: %s", sample.sample_id, sample.eye_side, exc)
            skipped += 1
            continue
        predicted_blink = classify(score, threshold)
        actual_blink = sample.label == "blink"
        c = counts[sample.eye_side]
        if actual_blink and predicted_blink:
            c["tp"] += 1
        elif actual_blink:
            c["fn"] += 1
        elif predicted_blink:
            c["fp"] += 1
        else:
            c["tn"] += 1
        scores.append(
            {
                "sample_id": sample.sample_id,
                "eye_side": sample.eye_side,
                "score": score,
                "label": sample.label,
            }
        )
    result = {
        side: EvalMetrics.from_counts(side, **counts[side]) for side in EYE_SIDES
    }
    pooled = {k: counts["left"][k] + counts["right"][k] for k in ("tp", "fp", "fn", "tn")}
    result["pooled"] = EvalMetrics.from_counts("pooled", **pooled)
    result["skipped"] = skipped
    result["scores"] = scores
    return result


# --------------------------------------------------------------------------
# report rendering


_HEADER = f"{'Method':<28}{'Eye':<8}{'Recall':>8}  {'Precision':>9}  {'F1':>8}"
_RULE = "-" * len(_HEADER)
F1_CONSISTENCY_TOL = 1e-4


def _format_row(method: str, eye: str, r: float, p: float, f1: float) -> str:
    return f"{method:<28}{eye:<8}{r:>8.4f}  {p:>9.4f}  {f1:>8.4f}"


def render_report(
    metrics: dict | None,
    baselines: Sequence[dict] = (),
    method_name: str = "CNN (this work)",
) -> tuple[str, dict]:
    """Aligned text table plus a JSON-ready dict.

    Baseline rows are pass-through data: published numbers rendered
    verbatim, never recomputed. Any row whose stored F1 disagrees with the
    F1 recomputed from its own precision/recall by more than 1e-4 gets a
    consistency warning appended.
    """
    rows = []
    for b in baselines:
        rows.append(
            {
                "method": b["method"],
                "eye": b["eye"],
                "recall": float(b["recall"]),
                "precision": float(b["precision"]),
                "f1": float(b["f1"]),
            }
        )
    if metrics is not None:
        for side in EYE_SIDES:
            m = metrics[side]
            rows.append(
                {
                    "method": method_name,
                    "eye": m.eye_side.capitalize(),
                    "recall": m.recall,
                    "precision": m.precision,
                    "f1": m.f1,
                }
            )

    warnings = []
    for row in rows:
        p, r = row["precision"], row["recall"]
        expected_f1 = 2.0 * p * r / (p + r) if p + r > 0 else 0.0
        if abs(expected_f1 - row["f1"]) > F1_CONSISTENCY_TOL:
            warnings.append(
                f"{row['method']} ({row['eye']}): stored F1 {row['f1']:.4f} "
                f"differs from recomputed {expected_f1:.4f}"
            )

    lines = [_HEADER, _RULE]
    lines.extend(_format_row(r["method"], r["eye"], r["recall"], r["precision"], r["f1"]) for r in rows)
    if warnings:
        lines.append("")
        lines.extend(f"WARNING: {w}" for w in warnings)
    text = "\n".join(lines) + "\n"
    return text, {"rows": rows, "warnings": warnings}


def write_report(
    metrics: dict,
    out_dir: str | Path,
    baselines: Sequence[dict] = (),
    method_name: str = "CNN (this work)",
) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    text, payload = render_report(metrics, baselines, method_name)
    payload["counts"] = {
        side: metrics[side].to_dict() for side in (*EYE_SIDES, "pooled") if side in metrics
    }
    payload["skipped"] = metrics.get("skipped", 0)
    txt_path = out / "report.txt"
    json_path = out / "report.json"
    txt_path.write_text(text)
    json_path.write_text(json.dumps(payload, indent=2) + "\n")
    return txt_path, json_path
