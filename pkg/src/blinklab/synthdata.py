"""Synthetic ground truth: procedural eye/face renders, generated sessions
with known blink events, and brute-force oracles for the numeric pipeline.

Everything here is seeded and bit-deterministic. Sessions written by
gen_session use the exact on-disk formats of the ingest module, so the rest
of the pipeline cannot tell them from recorded data, while the generator
keeps the ground truth (event spans, latent attention coupling) on the side
for assertions.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from PIL import Image

from .errors import EmptyClass, OverlappingBlinks
from .ingest import time_to_frame
from .labeling import BlinkCandidate, DecisionRecord
from .eyes import EyeCrop

# Canonical geometry: in a 50x50 training crop the eye half-width is 12.5 px,
# matching what the landmark-crop path produces (hull width 2*rx padded by
# 0.5 * max side -> a 4*rx square box, so rx -> 50 * rx / (4 * rx) = 12.5).
CROP_EYE_RX = 12.5
EYE_ASPECT = 0.55  # ry / rx

SKIN = 0.70
BACKGROUND = 0.85
SCLERA = 0.93
OUTLINE = 0.12
IRIS = 0.11
PUPIL = 0.04
MOUTH = 0.45


# --------------------------------------------------------------------------
# eye and face rendering


@dataclass(frozen=True)
class SyntheticEyeSpec:
    state: str  # open | closed
    iris_position: tuple[float, float] = (0.0, 0.0)  # each in [-1, 1]
    noise_level: float = 0.0
    illumination: float = 1.0
    seed: int = 0
    scale: float = 1.0  # mild size jitter around the canonical geometry


def _draw_eye(
    img: np.ndarray,
    cx: float,
    cy: float,
    rx: float,
    ry: float,
    state: str,
    iris_dx: float = 0.0,
    iris_dy: float = 0.0,
    illumination: float = 1.0,
) -> None:
    """Paint one almond-shaped eye into img (in place).

    The dark outline ellipse has identical extent for open and closed
    states, which is what lets a simple dark-blob detector recover the eye
    box regardless of eyelid state. Open eyes get a sclera + iris + pupil
    fill, closed ones a lid with a lash line.
    """
    h, w = img.shape[:2]
    x0 = max(int(math.floor(cx - rx - 2)), 0)
    x1 = min(int(math.ceil(cx + rx + 2)), w)
    y0 = max(int(math.floor(cy - ry - 2)), 0)
    y1 = min(int(math.ceil(cy + ry + 2)), h)
    if x0 >= x1 or y0 >= y1:
        return
    ys, xs = np.mgrid[y0:y1, x0:x1]
    px = xs + 0.5
    py = ys + 0.5
    rho = np.sqrt(((px - cx) / rx) ** 2 + ((py - cy) / ry) ** 2)

    stroke = max(0.15, 1.2 / ry)
    inside = rho <= 1.0
    outline = inside & (rho >= 1.0 - stroke)
    interior = inside & ~outline

    patch = img[y0:y1, x0:x1, :]
    fill = np.full(rho.shape, np.nan)
    if state == "open":
        fill[interior] = SCLERA * illumination
        icx = cx + 0.30 * iris_dx * rx
        icy = cy + 0.30 * iris_dy * ry
        iris_r = 0.52 * ry
        dist = np.sqrt((px - icx) ** 2 + (py - icy) ** 2)
        fill[interior & (dist <= iris_r)] = IRIS * illumination
        fill[interior & (dist <= 0.45 * iris_r)] = PUPIL * illumination
    else:
        fill[interior] = SKIN * illumination
        lash = interior & (np.abs(py - cy) <= max(1.0, 0.16 * ry)) & (rho <= 0.92)
        fill[lash] = OUTLINE * illumination
    fill[outline] = OUTLINE * illumination

    mask = ~np.isnan(fill)
    for c in range(3):
        plane = patch[:, :, c]
        plane[mask] = fill[mask]


def render_eye(spec: SyntheticEyeSpec) -> tuple[EyeCrop, str]:
    """A 50x50 eye crop in the canonical training geometry, plus its label."""
    rng = np.random.default_rng(spec.seed)
    img = np.full((50, 50, 3), SKIN * spec.illumination, dtype=np.float64)
    rx = CROP_EYE_RX * spec.scale
    _draw_eye(
        img,
        25.0,
        25.0,
        rx,
        EYE_ASPECT * rx,
        spec.state,
        iris_dx=spec.iris_position[0],
        iris_dy=spec.iris_position[1],
        illumination=spec.illumination,
    )
    if spec.noise_level > 0:
        img = img + rng.normal(0.0, spec.noise_level, size=img.shape)
    pixels = np.clip(img, 0.0, 1.0).astype(np.float32)
    return EyeCrop(side="left", pixels=pixels), spec.state


def make_crop_set(
    n: int, seed: int = 0, open_fraction: float = 0.5, noise_level: float = 0.08
) -> tuple[np.ndarray, np.ndarray]:
    """n varied synthetic crops: X (n,50,50,3) float32, y (n,) 1 = closed."""
    rng = np.random.default_rng(seed)
    n_open = int(round(n * open_fraction))
    states = ["open"] * n_open + ["closed"] * (n - n_open)
    xs = np.empty((n, 50, 50, 3), dtype=np.float32)
    ys = np.empty(n, dtype=np.int64)
    for i, state in enumerate(states):
        spec = SyntheticEyeSpec(
            state=state,
            iris_position=(rng.uniform(-1, 1), rng.uniform(-1, 1)),
            noise_level=rng.uniform(0.0, noise_level),
            illumination=rng.uniform(0.9, 1.1),
            seed=int(rng.integers(2**31)),
            scale=rng.uniform(0.92, 1.08),
        )
        crop, _ = render_eye(spec)
        xs[i] = crop.pixels
        ys[i] = 1 if state == "closed" else 0
    return xs, ys


def render_face(
    state: str,
    width: int = 320,
    height: int = 240,
    *,
    iris_position: tuple[float, float] = (0.0, 0.0),
    noise_level: float = 0.02,
    illumination: float = 1.0,
    seed: int = 0,
) -> tuple[np.ndarray, dict]:
    """A frontal synthetic face frame and its geometry ground truth.

    Eye placement is fixed by proportion so every consumer (landmark
    detection, box math, crop checks) can be verified against the returned
    truth dict: exact eye boxes, centers, and radii.
    """
    rng = np.random.default_rng(seed)
    img = np.full((height, width, 3), BACKGROUND * illumination, dtype=np.float64)
    ys, xs = np.mgrid[0:height, 0:width]
    px, py = xs + 0.5, ys + 0.5

    fcx, fcy = width / 2.0, height * 0.52
    face = (((px - fcx) / (0.32 * width)) ** 2 + ((py - fcy) / (0.42 * height)) ** 2) <= 1.0
    for c in range(3):
        img[:, :, c][face] = SKIN * illumination

    eye_y = 0.40 * height
    eye_dx = 0.18 * width
    rx = 0.07 * width
    ry = EYE_ASPECT * rx
    centers = {"left": (fcx - eye_dx, eye_y), "right": (fcx + eye_dx, eye_y)}
    for cx, cy in centers.values():
        _draw_eye(img, cx, cy, rx, ry, state, iris_position[0], iris_position[1], illumination)

    mouth = (((px - fcx) / (0.10 * width)) ** 2 + ((py - height * 0.72) / (0.025 * height)) ** 2) <= 1.0
    for c in range(3):
        img[:, :, c][mouth] = MOUTH * illumination

    if noise_level > 0:
        img = img + rng.normal(0.0, noise_level, size=img.shape)
    img = np.clip(img, 0.0, 1.0).astype(np.float32)

    truth = {
        "state": state,
        "rx": rx,
        "ry": ry,
        "eye_centers": {k: list(v) for k, v in centers.items()},
        "eye_boxes": {
            k: [cx - rx, cy - ry, cx + rx, cy + ry] for k, (cx, cy) in centers.items()
        },
    }
    return img, truth


def save_frame(img: np.ndarray, path: str | Path) -> None:
    arr = (np.clip(img, 0.0, 1.0) * 255.0).round().astype(np.uint8)
    Image.fromarray(arr).save(path)


# --------------------------------------------------------------------------
# attention profiles


Profile = tuple[tuple[float, float], ...]  # ((start_t, value), ...) step function


def profile_value(profile: Profile | Callable[[float], float], t: float) -> float:
    if callable(profile):
        return float(min(max(profile(t), 0.0), 100.0))
    v = profile[0][1]
    for start, val in profile:
        if t >= start:
            v = val
        else:
            break
    return float(min(max(v, 0.0), 100.0))


def alternating_profile(
    duration: float,
    seed: int = 0,
    low: tuple[float, float] = (5.0, 15.0),
    high: tuple[float, float] = (85.0, 95.0),
    segment: tuple[float, float] = (30.0, 50.0),
) -> Profile:
    """Alternating low/high attention segments of 30-50 s; strong contrast
    makes the blink-rate coupling visible over Poisson noise."""
    rng = np.random.default_rng(seed)
    steps = []
    t = 0.0
    is_low = bool(rng.integers(2))
    while t < duration:
        rng_span = low if is_low else high
        steps.append((t, float(rng.uniform(*rng_span))))
        t += float(rng.uniform(*segment))
        is_low = not is_low
    return tuple(steps)


# --------------------------------------------------------------------------
# session generation


@dataclass(frozen=True)
class SyntheticSessionSpec:
    duration: float
    blink_times: tuple[float, ...] | None = None  # None -> derive from coupling
    attention_profile: Profile = ((0.0, 50.0),)
    coupling: float = -0.8  # attention-to-blink-rate link in [-1, 1]
    seed: int = 0
    base_bpm: float = 45.0
    snap_to_seconds: bool = False  # put blinks exactly on the EEG grid


@dataclass(frozen=True)
class TruthEvent:
    event_id: str
    start_frame: int
    end_frame: int

    @property
    def center_frame(self) -> int:
        return (self.start_frame + self.end_frame) // 2


@dataclass(frozen=True)
class SessionArtifacts:
    session_dir: Path
    manifest_path: Path
    eeg_path: Path
    truth_path: Path
    blink_times: tuple[float, ...]
    events: tuple[TruthEvent, ...] = field(default_factory=tuple)


def auto_blink_times(
    duration: float,
    profile: Profile,
    coupling: float,
    seed: int,
    base_bpm: float = 45.0,
    gain: float = 4.0,
    refractory: float = 2.0,
    edge_margin: float = 2.0,
) -> tuple[float, ...]:
    """Draw blink times from an attention-modulated point process.

    Instantaneous rate = base * exp(gain * coupling * z(t)) with
    z = (attention - 50) / 50, sampled by thinning a homogeneous process.
    The refractory gap keeps blinks at least 2 s apart, so neighbouring
    EEG bins never both carry a pulse and every pulse is a clean local
    maximum for the candidate extractor.
    """
    rng = np.random.default_rng(seed)
    base_rate = base_bpm / 60.0
    lam_max = base_rate * math.exp(abs(gain))
    times = []
    t = edge_margin
    last = -math.inf
    while True:
        t += float(rng.exponential(1.0 / lam_max))
        if t >= duration - edge_margin:
            break
        z = (profile_value(profile, t) - 50.0) / 50.0
        lam = base_rate * math.exp(gain * coupling * z)
        if rng.uniform() * lam_max <= lam and t - last >= refractory:
            times.append(t)
            last = t
    return tuple(times)


def fixed_count_blink_times(
    duration: float,
    count: int,
    profile: Profile,
    coupling: float,
    seed: int,
    gain: float = 4.0,
    refractory: float = 2.0,
    edge_margin: float = 2.0,
    max_tries: int = 10_000,
) -> tuple[float, ...]:
    """Exactly `count` blink times drawn from the coupled intensity.

    Times are sampled by inverse-CDF over the attention-modulated rate on
    a 0.1 s grid, redrawing any time that lands within the refractory gap
    of an already-kept one.
    """
    if count == 0:
        return ()
    rng = np.random.default_rng(seed)
    grid = np.arange(edge_margin, duration - edge_margin, 0.1)
    if len(grid) == 0:
        raise ValueError(f"duration {duration} too short for any blink")
    lam = np.array(
        [math.exp(gain * coupling * (profile_value(profile, t) - 50.0) / 50.0) for t in grid]
    )
    cdf = np.cumsum(lam)
    cdf = cdf / cdf[-1]
    kept: list[float] = []
    tries = 0
    while len(kept) < count:
        tries += 1
        if tries > max_tries:
            raise ValueError(
                f"could not place {count} blinks with a {refractory}s gap in {duration}s"
            )
        u = rng.uniform()
        t = float(grid[int(np.searchsorted(cdf, u))])
        if all(abs(t - k) >= refractory for k in kept):
            kept.append(t)
    return tuple(sorted(kept))


def gen_session(
    spec: SyntheticSessionSpec,
    out_dir: str | Path,
    *,
    fps: float = 30.0,
    render_frames: bool = False,
    frame_size: tuple[int, int] = (320, 240),
    stream_kinds: Sequence[str] = ("RGB",),
    noise_level: float = 0.02,
    subject_id: str = "synth",
    session_id: str | None = None,
) -> SessionArtifacts:
    """Write a full synthetic session: manifest, EEG trace, ground truth,
    and (optionally) rendered face frames for each stream.

    The EEG blink-strength channel carries a strong pulse in the second of
    each blink on top of a weak noise floor; attention follows the profile
    exactly. Blink spans on the frame grid must not collide.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sid = session_id or f"synth-{spec.seed:04d}"

    if spec.blink_times is not None:
        times = tuple(float(t) for t in spec.blink_times)
    else:
        times = auto_blink_times(
            spec.duration, spec.attention_profile, spec.coupling, spec.seed, spec.base_bpm
        )
    for t in times:
        if not 0.0 <= t < spec.duration:
            raise ValueError(f"blink time {t} outside [0, {spec.duration})")
    if spec.snap_to_seconds:
        times = tuple(float(int(math.floor(t + 0.5))) for t in times)

    n_rows = int(math.floor(spec.duration))
    n_frames = int(round(spec.duration * fps))

    rng_dur = np.random.default_rng([spec.seed, 1])
    rng_strength = np.random.default_rng([spec.seed, 2])
    rng_bands = np.random.default_rng([spec.seed, 3])
    rng_render = np.random.default_rng([spec.seed, 4])

    events = []
    spans = []
    for k, t in enumerate(sorted(times)):
        dur = int(rng_dur.integers(3, 14))
        center = time_to_frame(t, fps)
        # (start+end)//2 must equal `center` for odd and even spans alike
        start = max(center - (dur - 1) // 2, 0)
        end = min(start + dur - 1, n_frames - 1)
        spans.append((start, end))
        events.append(TruthEvent(event_id=f"e{k:04d}", start_frame=start, end_frame=end))
    for (s0, e0), (s1, e1) in zip(spans, spans[1:]):
        if s1 <= e0:
            raise OverlappingBlinks(
                f"blink spans [{s0},{e0}] and [{s1},{e1}] collide on the frame grid"
            )

    # EEG trace: noise floor + one strong pulse per blink second
    strength = np.abs(rng_strength.normal(0.0, 1.5, size=n_rows))
    for t in times:
        b = min(int(math.floor(t + 0.5)), n_rows - 1)
        strength[b] = max(strength[b], float(rng_strength.uniform(30.0, 100.0)))
    eeg_path = out / "eeg.csv"
    with open(eeg_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "alpha", "beta", "gamma", "delta", "theta", "blink_strength", "attention"])
        for tt in range(n_rows):
            bands = np.abs(rng_bands.normal(10.0, 3.0, size=5))
            att = profile_value(spec.attention_profile, float(tt))
            writer.writerow(
                [
                    float(tt),
                    *(f"{b:.4f}" for b in bands),
                    f"{strength[tt]:.4f}",
                    f"{att:.4f}",
                ]
            )

    truth_path = out / "ground_truth.csv"
    with open(truth_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["event_id", "start_frame", "end_frame"])
        for ev in events:
            writer.writerow([ev.event_id, ev.start_frame, ev.end_frame])

    closed = np.zeros(n_frames, dtype=bool)
    for s0, e0 in spans:
        closed[s0 : e0 + 1] = True
    streams_meta = []
    for kind in stream_kinds:
        frames_dir = out / "frames" / kind
        streams_meta.append({"kind": kind, "path": f"frames/{kind}", "frame_count": n_frames})
        if not render_frames:
            continue
        frames_dir.mkdir(parents=True, exist_ok=True)
        illum = 1.0 if kind == "RGB" else 0.95
        iris = np.zeros(2)
        for k in range(n_frames):
            iris = np.clip(iris + rng_render.normal(0.0, 0.08, size=2), -1.0, 1.0)
            img, _ = render_face(
                "closed" if closed[k] else "open",
                width=frame_size[0],
                height=frame_size[1],
                iris_position=(float(iris[0]), float(iris[1])),
                noise_level=noise_level,
                illumination=illum,
                seed=int(rng_render.integers(2**31)),
            )
            save_frame(img, frames_dir / f"{k:06d}.png")

    manifest = {
        "session_id": sid,
        "subject_id": subject_id,
        "wears_glasses": False,
        "fps": fps,
        "resolution": [frame_size[0], frame_size[1]],
        "eeg_path": "eeg.csv",
        "streams": streams_meta,
    }
    manifest_path = out / "session.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")

    return SessionArtifacts(
        session_dir=out,
        manifest_path=manifest_path,
        eeg_path=eeg_path,
        truth_path=truth_path,
        blink_times=tuple(sorted(times)),
        events=tuple(events),
    )


def read_ground_truth(path: str | Path) -> list[TruthEvent]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(
                TruthEvent(
                    event_id=row["event_id"],
                    start_frame=int(row["start_frame"]),
                    end_frame=int(row["end_frame"]),
                )
            )
    return out


def match_candidates(
    candidates: Sequence[BlinkCandidate],
    events: Sequence[TruthEvent],
    tol_frames: int = 15,
) -> tuple[dict[str, str], float]:
    """Greedy nearest matching of candidates to truth events.

    Returns {candidate_id: event_id} for matches within tol_frames of an
    event center (each event claimed once), plus the recall over events.
    """
    pairs = []
    for c in candidates:
        for ev in events:
            d = abs(c.center_frame - ev.center_frame)
            if d <= tol_frames:
                pairs.append((d, c.candidate_id, ev.event_id))
    pairs.sort()
    matched: dict[str, str] = {}
    used_events = set()
    for _, cid, eid in pairs:
        if cid in matched or eid in used_events:
            continue
        matched[cid] = eid
        used_events.add(eid)
    recall = len(used_events) / len(events) if events else 1.0
    return matched, recall


def simulate_review(
    candidates: Sequence[BlinkCandidate],
    events: Sequence[TruthEvent],
    tol_frames: int = 15,
    reviewer: str = "synthetic",
) -> list[DecisionRecord]:
    """Stand-in for the human pass: accept candidates near a true event,
    reject the rest. Produces ordinary DecisionRecords with deterministic
    timestamps."""
    matched, _ = match_candidates(candidates, events, tol_frames)
    base = datetime(2024, 1, 1, tzinfo=timezone.utc)
    out = []
    for k, c in enumerate(candidates):
        out.append(
            DecisionRecord(
                candidate_id=c.candidate_id,
                decision="accept" if c.candidate_id in matched else "reject",
                reviewer=reviewer,
                decided_at=base.replace(second=0) + _seconds(k),
            )
        )
    return out


def _seconds(k: int):
    from datetime import timedelta

    return timedelta(seconds=k)


def render_benchmark(
    out_dir: str | Path,
    n_blink: int = 6,
    n_no_blink: int = 6,
    seed: int = 0,
    frame_size: tuple[int, int] = (320, 240),
) -> dict:
    """Write a 13-frames-per-sample benchmark from rendered faces.

    Blink samples close the eyes for a 3-9 frame stretch around the middle
    frame; no-blink samples stay open throughout. Both eye sides are
    emitted for every sample (the faces carry both eyes anyway).
    """
    rng = np.random.default_rng(seed)
    out = Path(out_dir)
    rows = []
    for label, n in (("blink", n_blink), ("no_blink", n_no_blink)):
        for i in range(n):
            sample_id = f"{label[0]}{i:04d}"
            if label == "blink":
                dur = int(rng.integers(3, 10))
                start = int(rng.integers(max(1, 6 - dur // 2 - 1), 7 - dur // 2 + 1))
                closed = set(range(start, start + dur))
            else:
                closed = set()
            iris = np.zeros(2)
            frames = []
            for k in range(13):
                iris = np.clip(iris + rng.normal(0.0, 0.08, size=2), -1.0, 1.0)
                img, _ = render_face(
                    "closed" if k in closed else "open",
                    width=frame_size[0],
                    height=frame_size[1],
                    iris_position=(float(iris[0]), float(iris[1])),
                    noise_level=0.02,
                    seed=int(rng.integers(2**31)),
                )
                frames.append(img)
            for side in ("left", "right"):
                side_dir = out / label / sample_id / side
                side_dir.mkdir(parents=True, exist_ok=True)
                for k, img in enumerate(frames):
                    save_frame(img, side_dir / f"{k:02d}.png")
                rows.append((sample_id, side, label))
    with open(out / "labels.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "eye_side", "label"])
        writer.writerows(rows)
    return {"out": str(out), "blink": n_blink, "no_blink": n_no_blink, "samples": len(rows)}


# --------------------------------------------------------------------------
# brute-force oracles


def oracle_eer(pos: Sequence[float], neg: Sequence[float]) -> tuple[float, float, float]:
    """Literal exhaustive sweep for the equal-error-rate threshold.

    Independent from the production implementation on purpose: plain
    Python loops over every midpoint candidate. The two must agree
    exactly.
    """
    if len(pos) == 0 or len(neg) == 0:
        raise EmptyClass("oracle_eer needs both classes")
    values = sorted(set(float(v) for v in pos) | set(float(v) for v in neg))
    cands = [values[0] - 1.0]
    for a, b in zip(values, values[1:]):
        cands.append((a + b) / 2.0)
    cands.append(values[-1] + 1.0)
    best = None
    for thr in cands:
        fp = sum(1 for v in neg if v > thr) / len(neg)
        fn = sum(1 for v in pos if v <= thr) / len(pos)
        key = (abs(fp - fn), fp + fn, thr)
        if best is None or key < best[0]:
            best = (key, thr, fp, fn)
    return best[1], best[2], best[3]


def oracle_bpm(
    events, window: float, slide: float, duration: float, fps: float = 30.0
) -> tuple[list[float], list[float]]:
    """Literal per-window counting loop for blinks-per-minute.

    Returns (times, values); the production blink_rate_series must match
    exactly.
    """
    times = []
    values = []
    k = 0
    while k * slide + window <= duration:
        t = k * slide
        count = 0
        for ev in events:
            st = ev.start_frame / fps
            if t <= st < t + window:
                count += 1
        times.append(t)
        values.append(count * 60.0 / window)
        k += 1
    return times, values
