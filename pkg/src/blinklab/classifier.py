"""From-scratch CNN blink classifier over 50x50 eye crops.

Architecture: three 3x3 conv+ReLU stages (32/32/64 filters) each followed
by 2x2 max pooling (50 -> 25 -> 12 -> 6 spatially), flatten, dense 64,
dropout 0.5, one sigmoid unit. Trained with Adam (lr 0.001) and batch size
50 under binary cross-entropy. Both eyes share one model by default:
right-eye crops are mirrored into left-eye orientation at train and
inference time (per-eye models remain available behind a flag).
"""
from __future__ import annotations

import hashlib
import io
import json
import logging
import zipfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from torch import nn

from .errors import (
    ConfigViolation,
    EmptyDataset,
    ShapeMismatch,
    SingleClassDataset,
)
from .eyes import mirror_crop

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    input_size: tuple[int, int, int] = (50, 50, 3)
    conv_filters: tuple[int, ...] = (32, 32, 64)
    kernel: int = 3
    pool_stages: int = 3
    dense_units: int = 64
    dropout_rate: float = 0.5


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 50
    lr: float = 0.001
    epochs: int = 30
    validation_fraction: float = 0.2
    seed: int = 0
    early_stop_patience: int = 5


class _EyeCNN(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        h, w, c = config.input_size
        pad = config.kernel // 2
        layers: list[nn.Module] = []
        in_ch = c
        for out_ch in config.conv_filters:
            layers.append(nn.Conv2d(in_ch, out_ch, config.kernel, padding=pad))
            layers.append(nn.ReLU())
            layers.append(nn.MaxPool2d(2, stride=2))
            h, w = h // 2, w // 2
            in_ch = out_ch
        self.features = nn.Sequential(*layers)
        self.classifier = nn.Sequential(
            nn.Flatten(),
            nn.Linear(in_ch * h * w, config.dense_units),
            nn.ReLU(),
            nn.Dropout(config.dropout_rate),
            nn.Linear(config.dense_units, 1),
            nn.Sigmoid(),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.classifier(self.features(x)).squeeze(-1)


def build_model(config: ModelConfig | None = None) -> nn.Module:
    """Assemble the CNN; rejects configs that break the fixed topology."""
    config = config or ModelConfig()
    if len(config.conv_filters) != 3:
        raise ConfigViolation(f"expected 3 conv stages, got {len(config.conv_filters)}")
    if config.pool_stages != len(config.conv_filters):
        raise ConfigViolation("each conv stage must be followed by exactly one pooling stage")
    if config.kernel % 2 != 1 or config.kernel < 1:
        raise ConfigViolation(f"kernel must be a positive odd size, got {config.kernel}")
    if not 0.0 <= config.dropout_rate < 1.0:
        raise ConfigViolation(f"dropout_rate must be in [0, 1), got {config.dropout_rate}")
    if config.dense_units < 1:
        raise ConfigViolation("dense_units must be >= 1")
    h, w, c = config.input_size
    if h < 2**config.pool_stages or w < 2**config.pool_stages or c < 1:
        raise ConfigViolation(f"input size {config.input_size} too small for 3 pooling stages")
    return _EyeCNN(config)


def _validate_crops(crops: np.ndarray) -> np.ndarray:
    arr = np.asarray(crops, dtype=np.float32)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[1:] != (50, 50, 3):
        raise ShapeMismatch(f"crops must be (n, 50, 50, 3), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ShapeMismatch("crops contain non-finite values")
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ShapeMismatch(
            f"crop values must lie in [0, 1], got [{arr.min():.3f}, {arr.max():.3f}]"
        )
    return arr


def _to_tensor(crops: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(crops.transpose(0, 3, 1, 2)))


def predict(model: nn.Module, crops) -> np.ndarray | float:
    """Scores in (0, 1) per crop; 1 means closed/blink. Dropout disabled."""
    single = np.asarray(crops).ndim == 3
    arr = _validate_crops(np.asarray(crops))
    model.eval()
    scores = []
    with torch.no_grad():
        for i in range(0, len(arr), 256):
            out = model(_to_tensor(arr[i : i + 256]))
            scores.append(out.reshape(-1).numpy())
    result = np.concatenate(scores) if scores else np.zeros(0, dtype=np.float32)
    return float(result[0]) if single else result


def dataset_fingerprint(crops: np.ndarray, labels: np.ndarray) -> str:
    digest = hashlib.sha256()
    digest.update(np.ascontiguousarray(crops).tobytes())
    digest.update(np.ascontiguousarray(labels).tobytes())
    return digest.hexdigest()


def _group_split(
    labels: np.ndarray, groups: np.ndarray, val_fraction: float, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """80/20-style split at group (sample) level, stratified by class.

    Frames of one 21-frame sample are near-duplicates; splitting them
    across train and validation would leak, so whole groups move together.
    """
    rng = np.random.default_rng(seed)
    val_mask = np.zeros(len(labels), dtype=bool)
    for cls in np.unique(labels):
        cls_groups = np.unique(groups[labels == cls])
        rng.shuffle(cls_groups)
        n_val = int(round(len(cls_groups) * val_fraction))
        chosen = set(cls_groups[:n_val].tolist())
        val_mask |= np.isin(groups, list(chosen)) & (labels == cls)
    train_idx = np.nonzero(~val_mask)[0]
    val_idx = np.nonzero(val_mask)[0]
    return train_idx, val_idx


@dataclass
class Checkpoint:
    model_config: ModelConfig
    train_config: TrainConfig
    mode: str  # shared | per_eye
    weights: dict[str, dict[str, np.ndarray]]
    history: list[dict] = field(default_factory=list)
    dataset_fingerprint: str = ""
    format_version: int = FORMAT_VERSION
    _models: dict = field(default_factory=dict, repr=False, compare=False)

    def model(self, side: str = "left") -> nn.Module:
        key = "shared" if self.mode == "shared" else side
        if key not in self._models:
            m = build_model(self.model_config)
            state = {k: torch.from_numpy(v.copy()) for k, v in self.weights[key].items()}
            m.load_state_dict(state)
            m.eval()
            self._models[key] = m
        return self._models[key]

    def predict(self, crops, side: str = "left") -> np.ndarray | float:
        """Score crops for one eye; in shared mode right crops are mirrored
        into the left-eye orientation first."""
        single = np.asarray(crops).ndim == 3
        arr = _validate_crops(np.asarray(crops))
        if self.mode == "shared" and side == "right":
            arr = np.stack([mirror_crop(c) for c in arr])
        result = predict(self.model(side), arr)
        return float(np.asarray(result).reshape(-1)[0]) if single else result

    def save(self, path: str | Path) -> None:
        meta = {
            "format_version": self.format_version,
            "mode": self.mode,
            "model_config": asdict(self.model_config),
            "train_config": asdict(self.train_config),
            "history": self.history,
            "dataset_fingerprint": self.dataset_fingerprint,
            "normalization": "unit_range",
            "weight_sets": sorted(self.weights.keys()),
        }
        buf = io.BytesIO()
        flat = {
            f"{set_name}/{k}": v
            for set_name, state in self.weights.items()
            for k, v in state.items()
        }
        np.savez(buf, **flat)
        with zipfile.ZipFile(path, "w", zipfile.ZIP_DEFLATED) as zf:
            zf.writestr("model.json", json.dumps(meta, indent=2))
            zf.writestr("weights.npz", buf.getvalue())

    @classmethod
    def load(cls, path: str | Path) -> "Checkpoint":
        with zipfile.ZipFile(path, "r") as zf:
            meta = json.loads(zf.read("model.json"))
            if meta["format_version"] > FORMAT_VERSION:
                raise ConfigViolation(
                    f"checkpoint format {meta['format_version']} is newer than supported {FORMAT_VERSION}"
                )
            npz = np.load(io.BytesIO(zf.read("weights.npz")))
            weights: dict[str, dict[str, np.ndarray]] = {}
            for key in npz.files:
                set_name, param = key.split("/", 1)
                weights.setdefault(set_name, {})[param] = npz[key]
        mc = meta["model_config"]
        model_config = ModelConfig(
            input_size=tuple(mc["input_size"]),
            conv_filters=tuple(mc["conv_filters"]),
            kernel=mc["kernel"],
            pool_stages=mc["pool_stages"],
            dense_units=mc["dense_units"],
            dropout_rate=mc["dropout_rate"],
        )
        train_config = TrainConfig(**meta["train_config"])
        return cls(
            model_config=model_config,
            train_config=train_config,
            mode=meta["mode"],
            weights=weights,
            history=meta["history"],
            dataset_fingerprint=meta.get("dataset_fingerprint", ""),
            format_version=meta["format_version"],
        )


def _state_to_numpy(model: nn.Module) -> dict[str, np.ndarray]:
    return {k: v.detach().cpu().numpy().copy() for k, v in model.state_dict().items()}


def _train_one(
    crops: np.ndarray,
    labels: np.ndarray,
    groups: np.ndarray,
    model_config: ModelConfig,
    config: TrainConfig,
) -> tuple[dict[str, np.ndarray], list[dict]]:
    torch.manual_seed(config.seed)
    model = build_model(model_config)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.lr)
    loss_fn = nn.BCELoss()

    train_idx, val_idx = _group_split(labels, groups, config.validation_fraction, config.seed)
    if len(train_idx) == 0:
        train_idx, val_idx = val_idx, train_idx
    x_train = _to_tensor(crops[train_idx])
    y_train = torch.from_numpy(labels[train_idx].astype(np.float32))
    x_val = _to_tensor(crops[val_idx]) if len(val_idx) else None
    y_val = torch.from_numpy(labels[val_idx].astype(np.float32)) if len(val_idx) else None

    gen = torch.Generator().manual_seed(config.seed)
    history: list[dict] = []
    best_metric = float("inf")
    best_state = _state_to_numpy(model)
    stale = 0
    for epoch in range(config.epochs):
        model.train()
        perm = torch.randperm(len(x_train), generator=gen)
        total = 0.0
        for i in range(0, len(perm), config.batch_size):
            idx = perm[i : i + config.batch_size]
            optimizer.zero_grad()
            out = model(x_train[idx])
            loss = loss_fn(out, y_train[idx])
            loss.backward()
            optimizer.step()
            total += loss.item() * len(idx)
        train_loss = total / len(x_train)

        entry = {"epoch": epoch, "train_loss": train_loss}
        if x_val is not None:
            model.eval()
            with torch.no_grad():
                val_out = model(x_val)
                val_loss = float(loss_fn(val_out, y_val))
                val_acc = float(((val_out > 0.5).float() == y_val).float().mean())
            entry["val_loss"] = val_loss
            entry["val_accuracy"] = val_acc
            metric = val_loss
        else:
            metric = train_loss
        history.append(entry)

        if metric < best_metric - 1e-9:
            best_metric = metric
            best_state = _state_to_numpy(model)
            stale = 0
        else:
            stale += 1
            if config.early_stop_patience > 0 and stale >= config.early_stop_patience:
                logger.info("early stop at epoch %d (best metric %.4f)", epoch, best_metric)
                break
    return best_state, history


def train(
    crops,
    labels,
    train_config: TrainConfig | None = None,
    model_config: ModelConfig | None = None,
    groups: Sequence | None = None,
    sides: Sequence[str] | None = None,
    mode: str = "shared",
) -> Checkpoint:
    """Train the blink CNN and return the best-validation-loss checkpoint.

    labels: 1 = closed/blink frame, 0 = open. groups tie frames belonging
    to one 21-frame sample together for splitting. In shared mode, crops
    marked side "right" are mirrored before training; in per_eye mode one
    model is trained per side.
    """
    config = train_config or TrainConfig()
    model_config = model_config or ModelConfig()
    if config.batch_size != 50 or config.lr != 0.001:
        logger.warning(
            "training deviates from the reference setup (batch_size=%d, lr=%g)",
            config.batch_size,
            config.lr,
        )
    arr = _validate_crops(np.asarray(crops))
    y = np.asarray(labels).astype(np.int64).reshape(-1)
    if len(arr) == 0 or len(y) == 0:
        raise EmptyDataset("no training crops supplied")
    if len(arr) != len(y):
        raise ShapeMismatch(f"{len(arr)} crops vs {len(y)} labels")
    if len(np.unique(y)) < 2:
        raise SingleClassDataset("training data must contain both open and closed eyes")
    g = np.asarray(groups) if groups is not None else np.arange(len(y))
    fingerprint = dataset_fingerprint(arr, y)

    if mode == "shared":
        if sides is not None:
            arr = np.stack(
                [mirror_crop(c) if s == "right" else c for c, s in zip(arr, sides)]
            )
        weights_state, history = _train_one(arr, y, g, model_config, config)
        weights = {"shared": weights_state}
        hist = history
    elif mode == "per_eye":
        if sides is None:
            raise ConfigViolation("per_eye mode requires a sides array")
        sides_arr = np.asarray(sides)
        weights = {}
        hist = []
        for side in ("left", "right"):
            m = sides_arr == side
            if not m.any():
                raise EmptyDataset(f"no crops for side {side}")
            if len(np.unique(y[m])) < 2:
                raise SingleClassDataset(f"side {side} has a single class")
            w, h = _train_one(arr[m], y[m], g[m], model_config, config)
            weights[side] = w
            hist.append({"side": side, "history": h})
    else:
        raise ConfigViolation(f"unknown mode {mode!r} (use 'shared' or 'per_eye')")

    return Checkpoint(
        model_config=model_config,
        train_config=config,
        mode=mode,
        weights=weights,
        history=hist,
        dataset_fingerprint=fingerprint,
    )


# --------------------------------------------------------------------------
# reading training frames back from a built dataset


def load_training_set(
    dataset_root: str | Path, stream: str = "RGB", center_halo: int = 1
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Frame-level training data from a build_dataset output directory.

    Blink samples contribute their center frame +/- center_halo as
    positives (the rest of the window has ambiguous eyelid state and is
    excluded); no-blink samples contribute every frame as a negative.
    Returns (crops, labels, groups, sides).
    """
    from .eyes import load_image  # local import to keep module load light

    root = Path(dataset_root)
    xs, ys, gs, sides = [], [], [], []
    center = 10
    for label_name, label in (("blink", 1), ("no_blink", 0)):
        for sample_dir in sorted((root / label_name).glob("*")):
            stream_dir = sample_dir / stream
            if not stream_dir.is_dir():
                continue
            if label == 1:
                offsets = range(center - center_halo, center + center_halo + 1)
            else:
                offsets = range(21)
            for off in offsets:
                for side in ("left", "right"):
                    p = stream_dir / f"{side}_eye_{off:02d}.png"
                    if not p.is_file():
                        continue
                    xs.append(load_image(p))
                    ys.append(label)
                    gs.append(sample_dir.name)
                    sides.append(side)
    if not xs:
        raise EmptyDataset(f"no crops found under {root}")
    return (
        np.stack(xs).astype(np.float32),
        np.asarray(ys, dtype=np.int64),
        np.asarray(gs),
        np.asarray(sides),
    )
