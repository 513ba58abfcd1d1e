"""Eye region extraction: 68-point landmarks -> padded eye boxes -> 50x50 crops.

Landmark detection itself is delegated to a pluggable adapter (anything that
maps an image to 68 (x, y) points). Three adapters ship here: a sidecar-file
reader for precomputed landmarks, a subprocess wrapper for external
detectors, and a self-contained blob detector that handles the synthetic
faces used in testing.

"Left" always means image-left (the subject's right eye). Eye landmarks
follow the 68-point convention: indices 36-41 are the left eye, 42-47 the
right eye.
"""
from __future__ import annotations

import json
import subprocess
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import AdapterFailure, DegenerateBox, EmptyIntersection, NoFaceFound
from .ingest import FrameRef

LEFT_EYE_IDX = tuple(range(36, 42))
RIGHT_EYE_IDX = tuple(range(42, 48))
CROP_SIZE = 50
DEFAULT_PAD = 0.5


def load_image(path: str | Path) -> np.ndarray:
    """Decode an image file to float32 HxWx3 in [0, 1]."""
    with Image.open(path) as im:
        rgb = im.convert("RGB")
        arr = np.asarray(rgb, dtype=np.float32) / 255.0
    return arr


def _as_image_array(source) -> np.ndarray:
    if isinstance(source, (str, Path)):
        return load_image(source)
    arr = np.asarray(source)
    if arr.ndim == 2:
        arr = np.stack([arr] * 3, axis=-1)
    if arr.dtype == np.uint8:
        arr = arr.astype(np.float32) / 255.0
    return arr.astype(np.float32, copy=False)


@dataclass(frozen=True)
class LandmarkSet:
    points: np.ndarray  # (68, 2) float
    confidence: float

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.shape != (68, 2):
            raise AdapterFailure(f"landmark set must be 68x2, got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise AdapterFailure("landmark coordinates must be finite")
        if not (0.0 <= self.confidence <= 1.0):
            raise AdapterFailure(f"confidence must be in [0,1], got {self.confidence}")
        object.__setattr__(self, "points", pts)

    def eye_points(self, side: str) -> np.ndarray:
        idx = LEFT_EYE_IDX if side == "left" else RIGHT_EYE_IDX
        return self.points[list(idx)]


@dataclass(frozen=True)
class EyeBox:
    side: str  # "left" | "right"
    x0: float
    y0: float
    x1: float
    y1: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x0, self.y0, self.x1, self.y1)

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0


@dataclass(frozen=True)
class EyeCrop:
    side: str
    pixels: np.ndarray  # (50, 50, 3) float32 in [0, 1]
    source: FrameRef | None = None


class LandmarkAdapter(Protocol):
    def detect(self, source) -> tuple[np.ndarray, float] | None:
        """Return ((68, 2) points, confidence) or None when no face found."""
        ...


def detect_landmarks(source, adapter: LandmarkAdapter) -> LandmarkSet:
    """Run an adapter and validate its output against the 68-point contract.

    source may be an image file path or a decoded image array, depending on
    what the adapter supports. Raises NoFaceFound when the adapter reports
    no face, AdapterFailure when it violates the contract.
    """
    result = adapter.detect(source)
    if result is None:
        raise NoFaceFound(f"no face found in {source if isinstance(source, (str, Path)) else 'image'}")
    points, confidence = result
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape != (68, 2):
        raise AdapterFailure(f"adapter returned shape {pts.shape}, expected (68, 2)")
    return LandmarkSet(points=pts, confidence=float(confidence))


def eye_boxes_from_landmarks(
    landmarks: LandmarkSet,
    pad: float = DEFAULT_PAD,
    frame_size: tuple[int, int] | None = None,
) -> tuple[EyeBox, EyeBox]:
    """Padded axis-aligned boxes around each eye's 6 landmarks.

    Each hull is expanded by pad * max(hull width, hull height) on every
    side, then clamped to the frame when frame_size=(width, height) is
    given. A zero-area hull (e.g. coincident points) is an error.
    """
    boxes = []
    for side in ("left", "right"):
        pts = landmarks.eye_points(side)
        x0, y0 = pts.min(axis=0)
        x1, y1 = pts.max(axis=0)
        w, h = x1 - x0, y1 - y0
        if w <= 0 or h <= 0:
            raise DegenerateBox(f"{side} eye hull has zero area ({w:g} x {h:g})")
        margin = pad * max(w, h)
        bx0, by0, bx1, by1 = x0 - margin, y0 - margin, x1 + margin, y1 + margin
        if frame_size is not None:
            fw, fh = frame_size
            bx0, by0 = max(bx0, 0.0), max(by0, 0.0)
            bx1, by1 = min(bx1, float(fw)), min(by1, float(fh))
            if bx0 >= bx1 or by0 >= by1:
                raise DegenerateBox(f"{side} eye box falls outside the frame")
        boxes.append(EyeBox(side=side, x0=float(bx0), y0=float(by0), x1=float(bx1), y1=float(by1)))
    return boxes[0], boxes[1]


def crop_and_resize(
    frame_image: np.ndarray,
    box: EyeBox,
    source: FrameRef | None = None,
    size: int = CROP_SIZE,
) -> EyeCrop:
    """Cut the box out of the frame and bilinear-resample it to size x size.

    The box is first expanded along its shorter axis to a square (about its
    center) so the resample never distorts aspect ratio, then clamped to
    the frame. Output values stay in [0, 1].
    """
    img = _as_image_array(frame_image)
    fh, fw = img.shape[:2]
    if box.x1 <= 0 or box.y1 <= 0 or box.x0 >= fw or box.y0 >= fh:
        raise EmptyIntersection(f"box {box.as_tuple()} lies outside the {fw}x{fh} frame")
    if box.x0 >= box.x1 or box.y0 >= box.y1:
        raise DegenerateBox(f"box {box.as_tuple()} has no area")

    side_len = max(box.width, box.height)
    cx = (box.x0 + box.x1) / 2.0
    cy = (box.y0 + box.y1) / 2.0
    x0, x1 = cx - side_len / 2.0, cx + side_len / 2.0
    y0, y1 = cy - side_len / 2.0, cy + side_len / 2.0
    x0, y0 = max(x0, 0.0), max(y0, 0.0)
    x1, y1 = min(x1, float(fw)), min(y1, float(fh))

    channels = []
    for c in range(3):
        plane = Image.fromarray(img[:, :, c], mode="F")
        out = plane.resize((size, size), resample=Image.BILINEAR, box=(x0, y0, x1, y1))
        channels.append(np.asarray(out, dtype=np.float32))
    pixels = np.clip(np.stack(channels, axis=-1), 0.0, 1.0)
    return EyeCrop(side=box.side, pixels=pixels, source=source)


def mirror_crop(pixels: np.ndarray) -> np.ndarray:
    """Flip a crop horizontally (right-eye crops -> left-eye orientation)."""
    return np.ascontiguousarray(pixels[:, ::-1, :])


# --------------------------------------------------------------------------
# adapters


class SidecarLandmarkAdapter:
    """Reads precomputed landmarks from `<frame>.landmarks.json` files.

    The sidecar sits next to the frame image (000042.png ->
    000042.landmarks.json) and holds either a bare list of 68 [x, y] pairs
    or {"points": [...], "confidence": c}. A missing sidecar means no face
    was found for that frame.
    """

    def detect(self, source):
        if not isinstance(source, (str, Path)):
            raise AdapterFailure("sidecar adapter needs a frame path, not a raw image")
        sidecar = Path(source).with_suffix(".landmarks.json")
        if not sidecar.is_file():
            return None
        try:
            raw = json.loads(sidecar.read_text())
        except json.JSONDecodeError as exc:
            raise AdapterFailure(f"{sidecar}: invalid JSON ({exc})") from exc
        if raw is None:
            return None
        if isinstance(raw, dict):
            points = raw.get("points")
            confidence = float(raw.get("confidence", 1.0))
        else:
            points, confidence = raw, 1.0
        if points is None:
            return None
        return np.asarray(points, dtype=np.float64), confidence


class CommandLandmarkAdapter:
    """Wraps an external detector executable.

    The command is invoked with the frame path appended and must print a
    JSON array of 68 [x, y] pairs (or null for no face) on stdout.
    """

    def __init__(self, command: list[str], timeout: float = 30.0):
        self.command = list(command)
        self.timeout = timeout

    def detect(self, source):
        if not isinstance(source, (str, Path)):
            raise AdapterFailure("command adapter needs a frame path, not a raw image")
        try:
            proc = subprocess.run(
                [*self.command, str(source)],
                capture_output=True,
                text=True,
                timeout=self.timeout,
            )
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise AdapterFailure(f"landmark command failed to run: {exc}") from exc
        if proc.returncode != 0:
            raise AdapterFailure(
                f"landmark command exited {proc.returncode}: {proc.stderr.strip()[:200]}"
            )
        try:
            raw = json.loads(proc.stdout)
        except json.JSONDecodeError as exc:
            raise AdapterFailure(f"landmark command wrote invalid JSON: {exc}") from exc
        if raw is None:
            return None
        if isinstance(raw, dict):
            points = raw.get("points")
            if points is None:
                return None
            return np.asarray(points, dtype=np.float64), float(raw.get("confidence", 1.0))
        return np.asarray(raw, dtype=np.float64), 1.0


class BlobLandmarkAdapter:
    """Self-contained detector for high-contrast frontal faces.

    Finds the two largest dark connected components in the upper image
    (the outlined eyes of the synthetic renderer, or any similarly stark
    face), takes their bounding boxes as the eye extents, and synthesizes
    the remaining 56 points from face geometry. Returns None when fewer
    than two usable blobs exist (e.g. a blank frame).
    """

    def __init__(self, dark_threshold: float = 0.35, min_blob_pixels: int = 12):
        self.dark_threshold = dark_threshold
        self.min_blob_pixels = min_blob_pixels

    def detect(self, source):
        img = _as_image_array(source)
        gray = img.mean(axis=2)
        mask = gray < self.dark_threshold
        if not mask.any():
            return None
        # Dilation fuses the iris into the eye outline so each eye is one
        # component; bboxes are then taken on the undilated mask.
        dilated = ndimage.binary_dilation(mask, structure=np.ones((5, 5), dtype=bool))
        labels, n = ndimage.label(dilated)
        if n < 2:
            return None
        sizes = ndimage.sum_labels(mask, labels, index=np.arange(1, n + 1))
        order = np.argsort(sizes)[::-1]
        picked = [int(order[i]) + 1 for i in range(min(2, len(order))) if sizes[order[i]] >= self.min_blob_pixels]
        if len(picked) < 2:
            return None
        bboxes = []
        for lab in picked:
            ys, xs = np.nonzero(mask & (labels == lab))
            bboxes.append((xs.min(), ys.min(), xs.max() + 1, ys.max() + 1))
        bboxes.sort(key=lambda b: (b[0] + b[2]) / 2.0)
        points = synthesize_landmarks(bboxes[0], bboxes[1])
        return points, 0.9


def _eye_hexagon(bbox) -> np.ndarray:
    x0, y0, x1, y1 = (float(v) for v in bbox)
    cy = (y0 + y1) / 2.0
    w = x1 - x0
    return np.array(
        [
            [x0, cy],
            [x0 + 0.3 * w, y0],
            [x0 + 0.7 * w, y0],
            [x1, cy],
            [x0 + 0.7 * w, y1],
            [x0 + 0.3 * w, y1],
        ]
    )


def synthesize_landmarks(left_eye_bbox, right_eye_bbox) -> np.ndarray:
    """Build a full 68-point set from two eye bounding boxes.

    The 12 eye points trace the given boxes exactly; the rest (jaw, brows,
    nose, mouth) are placed by proportion from the inter-eye geometry and
    only need to be plausible, not anatomically fitted.
    """
    left = _eye_hexagon(left_eye_bbox)
    right = _eye_hexagon(right_eye_bbox)
    lc = left.mean(axis=0)
    rc = right.mean(axis=0)
    mid = (lc + rc) / 2.0
    d = max(float(np.linalg.norm(rc - lc)), 1.0)

    points = np.zeros((68, 2))
    # jaw: half-ellipse under the eyes
    for i in range(17):
        ang = np.pi * i / 16.0
        points[i] = [mid[0] - 1.3 * d * np.cos(ang), mid[1] + 1.6 * d * np.sin(ang) + 0.1 * d]
    # brows: arcs above each eye
    for i in range(5):
        fx = (i - 2) / 2.0
        points[17 + i] = [lc[0] + fx * 0.45 * d, lc[1] - 0.35 * d - 0.05 * d * (1 - fx * fx)]
        points[22 + i] = [rc[0] + fx * 0.45 * d, rc[1] - 0.35 * d - 0.05 * d * (1 - fx * fx)]
    # nose bridge and base
    for i in range(4):
        points[27 + i] = [mid[0], mid[1] + 0.25 * d * i]
    for i in range(5):
        points[31 + i] = [mid[0] + (i - 2) * 0.12 * d, mid[1] + 0.8 * d]
    points[36:42] = left
    points[42:48] = right
    # mouth: outer ring of 12, inner ring of 8
    mouth_c = np.array([mid[0], mid[1] + 1.15 * d])
    for i in range(12):
        ang = 2 * np.pi * i / 12.0
        points[48 + i] = mouth_c + [0.45 * d * np.cos(ang), 0.2 * d * np.sin(ang)]
    for i in range(8):
        ang = 2 * np.pi * i / 8.0
        points[60 + i] = mouth_c + [0.3 * d * np.cos(ang), 0.1 * d * np.sin(ang)]
    return points
