"""Command-line entry points for the whole pipeline.

Exit codes: 0 success, 1 domain error (anything raised by the pipeline),
2 usage error (argparse). Every run writes a machine-readable run_log.json
(command, config, library versions) next to its outputs; the log content
is deterministic so identical invocations produce identical files.
"""
from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import BlinkLabError

logger = logging.getLogger("blinklab")


def _write_run_log(out: Path, command: str, config: dict) -> None:
    out_dir = out if out.is_dir() else out.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    import torch

    payload = {
        "command": command,
        "config": config,
        "versions": {
            "blinklab": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "torch": torch.__version__,
        },
    }
    (out_dir / "run_log.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _load_threshold(path: str) -> float:
    report = json.loads(Path(path).read_text())
    return float(report["threshold"])


def _make_adapter(name: str):
    from . import eyes

    if name == "blob":
        return eyes.BlobLandmarkAdapter()
    if name == "sidecar":
        return eyes.SidecarLandmarkAdapter()
    if name.startswith("command:"):
        return eyes.CommandLandmarkAdapter(name.split(":", 1)[1].split())
    raise BlinkLabError(f"unknown adapter {name!r} (use blob, sidecar, or command:<argv>)")


# --------------------------------------------------------------------------
# subcommand implementations


def _cmd_extract_candidates(args) -> int:
    from .ingest import load_eeg, load_session
    from .labeling import extract_candidates, write_candidates

    manifest = load_session(args.session)
    eeg = load_eeg(manifest.eeg_path)
    candidates = extract_candidates(
        eeg,
        args.quantile,
        session_id=manifest.session_id,
        fps=manifest.fps,
        merge_gap_frames=args.merge_gap,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_candidates(out, candidates)
    _write_run_log(out, "extract-candidates", {
        "session": str(args.session), "out": str(out),
        "quantile": args.quantile, "merge_gap": args.merge_gap,
    })
    print(json.dumps({"candidates": len(candidates), "out": str(out)}))
    return 0


def _cmd_build_dataset(args) -> int:
    from .ingest import load_session
    from .labeling import build_dataset, read_candidates, read_decisions

    sessions = [load_session(p) for p in args.session]
    candidates = read_candidates(args.candidates)
    decisions = read_decisions(args.decisions) if args.decisions else []
    summary = build_dataset(
        sessions,
        candidates,
        decisions,
        args.out,
        adapter=_make_adapter(args.adapter),
        pad=args.pad,
        margin_frames=args.margin,
        per_session_balance=args.per_session_balance,
        rng_seed=args.seed,
    )
    _write_run_log(Path(args.out), "build-dataset", {
        "sessions": [str(s) for s in args.session],
        "candidates": str(args.candidates),
        "decisions": str(args.decisions) if args.decisions else None,
        "out": str(args.out), "adapter": args.adapter, "pad": args.pad,
        "margin": args.margin, "per_session_balance": args.per_session_balance,
        "seed": args.seed,
    })
    print(json.dumps(summary.to_dict()))
    return 0


def _cmd_train(args) -> int:
    from .classifier import ModelConfig, TrainConfig, load_training_set, train
    from .synthdata import make_crop_set

    if args.dataset:
        crops, labels, groups, sides = load_training_set(args.dataset, stream=args.stream)
    else:
        crops, labels = make_crop_set(args.synthetic, seed=args.seed)
        groups, sides = None, None
    config = TrainConfig(
        batch_size=args.batch_size,
        lr=args.lr,
        epochs=args.epochs,
        validation_fraction=args.val_fraction,
        seed=args.seed,
        early_stop_patience=args.patience,
    )
    checkpoint = train(
        crops,
        labels,
        train_config=config,
        model_config=ModelConfig(),
        groups=groups,
        sides=sides,
        mode="per_eye" if args.per_eye else "shared",
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    checkpoint.save(out)
    _write_run_log(out, "train", {
        "dataset": str(args.dataset) if args.dataset else None,
        "synthetic": args.synthetic, "stream": args.stream, "out": str(out),
        "epochs": args.epochs, "batch_size": args.batch_size, "lr": args.lr,
        "seed": args.seed, "val_fraction": args.val_fraction,
        "mode": "per_eye" if args.per_eye else "shared",
    })
    last = checkpoint.history[-1] if checkpoint.history else {}
    print(json.dumps({"out": str(out), "epochs_run": len(checkpoint.history), "last": last}))
    return 0


def _cmd_calibrate(args) -> int:
    import csv

    from .scoring import aggregate_sample_score, calibrate_threshold

    by_sample: dict[str, dict] = {}
    with open(args.scores, newline="") as fh:
        for row in csv.DictReader(fh):
            entry = by_sample.setdefault(row["sample_id"], {"scores": [], "label": row["label"]})
            entry["scores"].append(float(row["score"]))
    pos, neg = [], []
    for entry in by_sample.values():
        s = aggregate_sample_score(entry["scores"])
        if entry["label"] in ("blink", "1"):
            pos.append(s)
        else:
            neg.append(s)
    report = calibrate_threshold(pos, neg)
    payload = report.to_dict()
    payload["split_name"] = args.split_name
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(payload, indent=2) + "\n")
    _write_run_log(out, "calibrate", {
        "scores": str(args.scores), "out": str(out), "split_name": args.split_name,
    })
    print(json.dumps(payload))
    return 0


def _cmd_evaluate(args) -> int:
    from .classifier import Checkpoint
    from .evaluation import benchmark_counts, evaluate, load_benchmark, write_report

    samples = load_benchmark(args.bench)
    checkpoint = Checkpoint.load(args.checkpoint)
    threshold = _load_threshold(args.threshold_report)
    result = evaluate(samples, checkpoint, threshold, adapter=_make_adapter(args.adapter))
    baselines = json.loads(Path(args.baselines).read_text()) if args.baselines else []
    out = Path(args.out)
    txt_path, json_path = write_report(result, out, baselines=baselines)
    if args.emit_scores:
        with open(args.emit_scores, "w") as fh:
            fh.write("sample_id,frame_offset,score,label\n")
            for row in result["scores"]:
                fh.write(f"{row['sample_id']}-{row['eye_side']},0,{row['score']:.6f},{row['label']}\n")
    _write_run_log(out, "evaluate", {
        "bench": str(args.bench), "checkpoint": str(args.checkpoint),
        "threshold_report": str(args.threshold_report), "out": str(out),
        "adapter": args.adapter, "baselines": str(args.baselines) if args.baselines else None,
    })
    print(json.dumps({
        "counts": benchmark_counts(samples),
        "threshold": threshold,
        "report_txt": str(txt_path),
        "report_json": str(json_path),
        "skipped": result["skipped"],
    }))
    return 0


def _cmd_attention_report(args) -> int:
    from .attention import attention_report, events_from_candidates
    from .ingest import load_eeg, load_session
    from .labeling import apply_decisions, read_candidates, read_decisions
    from .scoring import BlinkEvent
    from .synthdata import read_ground_truth

    manifest = load_session(args.session)
    eeg = load_eeg(manifest.eeg_path)

    candidates = read_candidates(args.candidates) if args.candidates else []
    if candidates and args.decisions:
        candidates, _ = apply_decisions(candidates, read_decisions(args.decisions))
        accepted = [c for c in candidates if c.status == "accepted"]
    else:
        accepted = list(candidates)

    if args.checkpoint and args.threshold_report:
        events_est = _score_session_events(
            manifest, args.checkpoint, args.threshold_report, args.adapter
        )
    else:
        events_est = events_from_candidates(accepted)

    if args.truth:
        events_gt = [
            BlinkEvent(ev.start_frame, ev.end_frame, 1.0, False)
            for ev in read_ground_truth(args.truth)
        ]
    else:
        events_gt = events_from_candidates(accepted)

    summary = attention_report(
        eeg,
        events_est,
        events_gt,
        manifest.fps,
        args.out,
        session_id=manifest.session_id,
        window=args.window,
        slide=args.slide,
        bpm_window=args.bpm_window,
    )
    _write_run_log(Path(args.out), "attention-report", {
        "session": str(args.session), "out": str(args.out),
        "candidates": str(args.candidates) if args.candidates else None,
        "decisions": str(args.decisions) if args.decisions else None,
        "truth": str(args.truth) if args.truth else None,
        "checkpoint": str(args.checkpoint) if args.checkpoint else None,
        "window": args.window, "slide": args.slide, "bpm_window": args.bpm_window,
    })
    print(json.dumps(summary))
    return 0


def _score_session_events(manifest, checkpoint_path, threshold_report, adapter_name):
    """Slow path: run the CNN over every RGB frame and detect events."""
    from .classifier import Checkpoint
    from .eyes import crop_and_resize, detect_landmarks, eye_boxes_from_landmarks, load_image
    from .scoring import detect_events

    checkpoint = Checkpoint.load(checkpoint_path)
    threshold = _load_threshold(threshold_report)
    adapter = _make_adapter(adapter_name)
    stream = manifest.stream("RGB")
    crops = {"left": [], "right": []}
    for k in range(stream.frame_count):
        path = stream.frame_path(k)
        img = load_image(path)
        landmarks = detect_landmarks(img, adapter)
        h, w = img.shape[:2]
        lbox, rbox = eye_boxes_from_landmarks(landmarks, frame_size=(w, h))
        crops["left"].append(crop_and_resize(img, lbox).pixels)
        crops["right"].append(crop_and_resize(img, rbox).pixels)
    left = checkpoint.predict(np.stack(crops["left"]), side="left")
    right = checkpoint.predict(np.stack(crops["right"]), side="right")
    frame_scores = np.maximum(left, right)
    return detect_events(frame_scores, threshold)


def _cmd_synth_session(args) -> int:
    from .synthdata import (
        SyntheticSessionSpec,
        alternating_profile,
        fixed_count_blink_times,
        gen_session,
    )

    profile = alternating_profile(args.duration, seed=args.seed)
    if args.blinks is not None:
        times = fixed_count_blink_times(
            args.duration, args.blinks, profile, args.coupling, args.seed
        )
    else:
        times = None
    spec = SyntheticSessionSpec(
        duration=args.duration,
        blink_times=times,
        attention_profile=profile,
        coupling=args.coupling,
        seed=args.seed,
        base_bpm=args.base_bpm,
        snap_to_seconds=args.snap,
    )
    artifacts = gen_session(
        spec,
        args.out,
        render_frames=args.render,
        frame_size=(args.frame_width, args.frame_height),
        stream_kinds=tuple(args.streams.split(",")),
    )
    _write_run_log(Path(args.out), "synth session", {
        "out": str(args.out), "duration": args.duration, "blinks": args.blinks,
        "coupling": args.coupling, "seed": args.seed, "base_bpm": args.base_bpm,
        "snap": args.snap, "render": args.render, "streams": args.streams,
        "frame_width": args.frame_width, "frame_height": args.frame_height,
    })
    print(json.dumps({
        "out": str(args.out),
        "events": len(artifacts.events),
        "manifest": str(artifacts.manifest_path),
    }))
    return 0


def _cmd_synth_eyes(args) -> int:
    import csv

    from PIL import Image

    from .synthdata import make_crop_set

    crops, labels = make_crop_set(args.count, seed=args.seed, open_fraction=args.open_fraction)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "labels.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["filename", "label"])
        for i, (crop, label) in enumerate(zip(crops, labels)):
            name = f"crop_{i:04d}.png"
            arr = (crop * 255.0).round().astype("uint8")
            Image.fromarray(arr).save(out / name)
            writer.writerow([name, "closed" if label == 1 else "open"])
    _write_run_log(out, "synth eyes", {
        "out": str(out), "count": args.count, "seed": args.seed,
        "open_fraction": args.open_fraction,
    })
    print(json.dumps({"out": str(out), "count": args.count}))
    return 0


def _cmd_synth_bench(args) -> int:
    from .synthdata import render_benchmark

    summary = render_benchmark(
        args.out,
        n_blink=args.blink,
        n_no_blink=args.no_blink,
        seed=args.seed,
        frame_size=(args.frame_width, args.frame_height),
    )
    _write_run_log(Path(args.out), "synth bench", {
        "out": str(args.out), "blink": args.blink, "no_blink": args.no_blink,
        "seed": args.seed, "frame_width": args.frame_width,
        "frame_height": args.frame_height,
    })
    print(json.dumps(summary))
    return 0


def _cmd_serve_review(args) -> int:
    from .review_service import serve

    serve(args.candidates, args.decisions, args.frames_root, args.ui_dir, args.port)
    return 0


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blinklab",
        description="Blink detection and attention estimation pipeline",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract-candidates", help="EEG blink-strength peaks -> candidates CSV")
    p.add_argument("--session", required=True, help="session.json manifest")
    p.add_argument("--out", required=True, help="candidates CSV to write")
    p.add_argument("--quantile", type=float, default=0.10)
    p.add_argument("--merge-gap", type=int, default=13, help="merge peaks closer than this many frames")
    p.set_defaults(func=_cmd_extract_candidates)

    p = sub.add_parser("build-dataset", help="accepted candidates -> labeled dataset on disk")
    p.add_argument("--session", required=True, action="append", help="session.json (repeatable)")
    p.add_argument("--candidates", required=True)
    p.add_argument("--decisions", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--adapter", default="blob")
    p.add_argument("--pad", type=float, default=0.5)
    p.add_argument("--margin", type=int, default=15)
    p.add_argument("--per-session-balance", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_build_dataset)

    p = sub.add_parser("train", help="train the blink CNN")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--dataset", help="build-dataset output directory")
    src.add_argument("--synthetic", type=int, help="train on N generated crops")
    p.add_argument("--stream", default="RGB")
    p.add_argument("--out", required=True, help="checkpoint file to write")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=50)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--val-fraction", type=float, default=0.2)
    p.add_argument("--patience", type=int, default=5)
    eyes_group = p.add_mutually_exclusive_group()
    eyes_group.add_argument("--shared-eyes", dest="per_eye", action="store_false", default=False)
    eyes_group.add_argument("--per-eye", dest="per_eye", action="store_true")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("calibrate", help="equal-error-rate threshold from a scores CSV")
    p.add_argument("--scores", required=True, help="CSV sample_id,frame_offset,score,label")
    p.add_argument("--out", required=True, help="threshold report JSON")
    p.add_argument(
        "--split-name",
        required=True,
        help="name of the data split the scores came from (recorded in the report)",
    )
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("evaluate", help="per-eye benchmark metrics")
    p.add_argument("--bench", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--threshold-report", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--adapter", default="blob")
    p.add_argument("--baselines", default=None, help="JSON list of pass-through baseline rows")
    p.add_argument("--emit-scores", default=None)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("attention-report", help="attention vs blink-rate correlation report")
    p.add_argument("--session", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--candidates", default=None)
    p.add_argument("--decisions", default=None)
    p.add_argument("--truth", default=None, help="ground-truth events CSV")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--threshold-report", default=None)
    p.add_argument("--adapter", default="blob")
    p.add_argument("--window", type=float, default=20.0)
    p.add_argument("--slide", type=float, default=5.0)
    p.add_argument("--bpm-window", type=float, default=5.0)
    p.set_defaults(func=_cmd_attention_report)

    p = sub.add_parser("synth", help="synthetic data generators")
    synth_sub = p.add_subparsers(dest="synth_command", required=True)

    s = synth_sub.add_parser("session", help="full synthetic session (EEG + truth + frames)")
    s.add_argument("--out", required=True)
    s.add_argument("--duration", type=float, default=240.0)
    s.add_argument("--blinks", type=int, default=None, help="exact blink count (default: rate-driven)")
    s.add_argument("--coupling", type=float, default=-0.8)
    s.add_argument("--base-bpm", type=float, default=30.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--snap", action="store_true", help="snap blinks to whole seconds")
    s.add_argument("--render", action="store_true", help="render face frames")
    s.add_argument("--streams", default="RGB")
    s.add_argument("--frame-width", type=int, default=320)
    s.add_argument("--frame-height", type=int, default=240)
    s.set_defaults(func=_cmd_synth_session)

    s = synth_sub.add_parser("eyes", help="labeled 50x50 eye crops")
    s.add_argument("--out", required=True)
    s.add_argument("--count", type=int, default=200)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--open-fraction", type=float, default=0.5)
    s.set_defaults(func=_cmd_synth_eyes)

    s = synth_sub.add_parser("bench", help="13-frame benchmark layout from rendered faces")
    s.add_argument("--out", required=True)
    s.add_argument("--blink", type=int, default=6)
    s.add_argument("--no-blink", type=int, default=6)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--frame-width", type=int, default=320)
    s.add_argument("--frame-height", type=int, default=240)
    s.set_defaults(func=_cmd_synth_bench)

    p = sub.add_parser("serve-review", help="HTTP service for the review UI")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--candidates", required=True)
    p.add_argument("--decisions", required=True)
    p.add_argument("--frames-root", default=None)
    p.add_argument("--ui-dir", default=None)
    p.set_defaults(func=_cmd_serve_review)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except BlinkLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
