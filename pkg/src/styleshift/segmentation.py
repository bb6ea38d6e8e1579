"""U-net training, fine-tuning, tiled prediction, and IoU evaluation.

The downstream pipeline: train on real source-domain patches, then
continue optimization on restyled fakes paired with the original ground
truth, and score predictions with per-class intersection over union.
Background takes part in the training loss but is excluded from the
overall IoU, which is the unweighted mean over the foreground classes.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .data_pipeline import (
    DEFAULT_OVERLAP,
    DEFAULT_PATCH_SIZE,
    NUM_CLASSES,
    CLASS_NAMES,
    extract_patches,
    stitch_patches,
)
from .errors import InvalidInputError
from .translation import to_tensor

FOREGROUND_CLASSES = (1, 2, 3)


@dataclass(frozen=True)
class SegConfig:
    initial_iterations: int = 8000
    finetune_iterations: int = 2500
    batch_size: int = 32
    lr: float = 0.0001
    num_classes: int = NUM_CLASSES
    base_channels: int = 32
    depth: int = 4
    seed: int = 0

    def __post_init__(self):
        for name in ("batch_size", "num_classes", "base_channels", "depth"):
            if getattr(self, name) <= 0:
                raise InvalidInputError(f"{name} must be positive")
        if self.initial_iterations < 0 or self.finetune_iterations < 0:
            raise InvalidInputError("iteration counts must be non-negative")
        if self.lr <= 0:
            raise InvalidInputError("lr must be positive")

    def to_dict(self) -> dict:
        return {
            "initial_iterations": self.initial_iterations,
            "finetune_iterations": self.finetune_iterations,
            "batch_size": self.batch_size,
            "lr": self.lr,
            "num_classes": self.num_classes,
            "base_channels": self.base_channels,
            "depth": self.depth,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SegConfig":
        return cls(**d)


class DoubleConv(nn.Module):
    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        # the classic design: plain conv-relu pairs, no normalization
        self.net = nn.Sequential(
            nn.Conv2d(in_ch, out_ch, 3, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(out_ch, out_ch, 3, padding=1),
            nn.ReLU(inplace=True),
        )

    def forward(self, x):
        return self.net(x)


class UNet(nn.Module):
    """Classic encoder-decoder with long skip connections, reduced width."""

    def __init__(self, cfg: SegConfig):
        super().__init__()
        self.cfg = cfg
        ch = cfg.base_channels
        self.inc = DoubleConv(3, ch)
        self.downs = nn.ModuleList()
        for _ in range(cfg.depth):
            self.downs.append(DoubleConv(ch, ch * 2))
            ch *= 2
        self.ups = nn.ModuleList()
        self.up_convs = nn.ModuleList()
        for _ in range(cfg.depth):
            self.ups.append(nn.ConvTranspose2d(ch, ch // 2, 2, stride=2))
            self.up_convs.append(DoubleConv(ch, ch // 2))
            ch //= 2
        self.head = nn.Conv2d(ch, cfg.num_classes, 1)

    def forward(self, x):
        skips = [self.inc(x)]
        for down in self.downs:
            skips.append(down(F.max_pool2d(skips[-1], 2)))
        h = skips.pop()
        for up, conv in zip(self.ups, self.up_convs):
            h = conv(torch.cat([skips.pop(), up(h)], dim=1))
        return self.head(h)


def _as_batches(patches, labels, cfg: SegConfig, rng: np.random.Generator,
                iterations: int):
    images = torch.cat([to_tensor(p) for p in patches])
    targets = torch.stack(
        [torch.from_numpy(np.asarray(l, dtype=np.int64)) for l in labels]
    )
    if targets.min() < 0 or targets.max() >= cfg.num_classes:
        raise InvalidInputError(
            f"label ids outside 0..{cfg.num_classes - 1}"
        )
    n = images.shape[0]
    for _ in range(iterations):
        idx = rng.integers(n, size=min(cfg.batch_size, n))
        yield images[idx], targets[idx]


def _fit(model, patches, labels, cfg, iterations, rng):
    if len(patches) != len(labels):
        raise InvalidInputError(
            f"{len(patches)} patches but {len(labels)} label rasters"
        )
    for p, l in zip(patches, labels):
        if p.shape[:2] != l.shape[:2]:
            raise InvalidInputError("patch and label raster shapes disagree")
    history = []
    if iterations == 0:
        return history
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    model.train()
    for batch, target in _as_batches(patches, labels, cfg, rng, iterations):
        opt.zero_grad(set_to_none=True)
        loss = F.cross_entropy(model(batch), target)
        loss.backward()
        opt.step()
        history.append(float(loss.detach()))
    return history


def train_unet(
    patches: list[np.ndarray], labels: list[np.ndarray], cfg: SegConfig
) -> tuple[UNet, list[float]]:
    """Train a fresh U-net; returns the model and the per-step loss curve."""
    torch.manual_seed(cfg.seed)
    model = UNet(cfg)
    rng = np.random.default_rng(cfg.seed)
    history = _fit(model, patches, labels, cfg, cfg.initial_iterations, rng)
    return model, history


def finetune_unet(
    model: UNet,
    fake_patches: list[np.ndarray],
    original_labels: list[np.ndarray],
    cfg: SegConfig,
) -> tuple[UNet, list[float]]:
    """Continue optimization on restyled fakes with the original labels."""
    rng = np.random.default_rng(cfg.seed + 1)
    history = _fit(
        model, fake_patches, original_labels, cfg, cfg.finetune_iterations, rng
    )
    return model, history


def predict_map(
    model: UNet,
    raster: np.ndarray,
    patch_size: int = DEFAULT_PATCH_SIZE,
    overlap: int = DEFAULT_OVERLAP,
) -> np.ndarray:
    """Per-pixel argmax over tiled class probabilities (averaged in overlaps)."""
    h, w = raster.shape[:2]
    model.eval()
    with torch.no_grad():
        if h <= patch_size and w <= patch_size:
            probs = F.softmax(model(to_tensor(raster)), dim=1)
            scores = probs.squeeze(0).permute(1, 2, 0).numpy()
        else:
            patches, grid = extract_patches(raster, patch_size, overlap)
            prob_patches = [
                F.softmax(model(to_tensor(p)), dim=1)
                .squeeze(0)
                .permute(1, 2, 0)
                .numpy()
                for p in patches
            ]
            scores = stitch_patches(prob_patches, grid, (h, w))
    model.train()
    return np.argmax(scores, axis=2).astype(np.int64)


class ConfusionMatrix:
    """Pixel counts, rows = ground truth, columns = prediction."""

    def __init__(self, num_classes: int = NUM_CLASSES):
        self.num_classes = num_classes
        self.counts = np.zeros((num_classes, num_classes), dtype=np.int64)

    def update(self, pred: np.ndarray, gt: np.ndarray) -> None:
        if pred.shape != gt.shape:
            raise InvalidInputError(
                f"prediction shape {pred.shape} != ground truth {gt.shape}"
            )
        pred = np.asarray(pred).ravel().astype(np.int64)
        gt = np.asarray(gt).ravel().astype(np.int64)
        if pred.min(initial=0) < 0 or pred.max(initial=0) >= self.num_classes:
            raise InvalidInputError("prediction ids out of range")
        if gt.min(initial=0) < 0 or gt.max(initial=0) >= self.num_classes:
            raise InvalidInputError("ground-truth ids out of range")
        binned = np.bincount(
            gt * self.num_classes + pred, minlength=self.num_classes**2
        )
        self.counts += binned.reshape(self.num_classes, self.num_classes)

    def per_class_iou(self) -> np.ndarray:
        """IoU per class; NaN where a class is absent from both rasters."""
        tp = np.diag(self.counts).astype(np.float64)
        union = self.counts.sum(axis=0) + self.counts.sum(axis=1) - tp
        with np.errstate(invalid="ignore"):
            return np.where(union > 0, tp / np.where(union > 0, union, 1), np.nan)


def overall_iou(per_class: np.ndarray) -> float:
    """Unweighted mean over the defined foreground classes."""
    fg = np.asarray(per_class, dtype=np.float64)[list(FOREGROUND_CLASSES)]
    defined = fg[~np.isnan(fg)]
    if defined.size == 0:
        return float("nan")
    return float(defined.mean())


def evaluate_iou(pred: np.ndarray, gt: np.ndarray) -> dict:
    """Per-class and overall IoU of a predicted label raster."""
    matrix = ConfusionMatrix()
    matrix.update(pred, gt)
    per_class = matrix.per_class_iou()
    return {
        "per_class": {
            name: (None if np.isnan(v) else float(v))
            for name, v in zip(CLASS_NAMES, per_class)
        },
        "overall": overall_iou(per_class),
    }


def write_report(report: dict, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report, indent=2) + "\n")


def save_unet(path: str | Path, model: UNet) -> None:
    """Versioned npz archive: config JSON under ``meta``, one array per
    parameter under ``param/<name>``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {"meta": np.array(json.dumps({"format_version": 1,
                                           "config": model.cfg.to_dict()}))}
    for name, tensor in model.state_dict().items():
        arrays[f"param/{name}"] = tensor.detach().numpy()
    with path.open("wb") as fh:
        np.savez(fh, **arrays)


def load_unet(path: str | Path) -> UNet:
    from .errors import DataError

    path = Path(path)
    if not path.exists():
        raise DataError(f"model not found: {path}")
    with np.load(path, allow_pickle=False) as archive:
        arrays = {k: archive[k] for k in archive.files}
    if "meta" not in arrays:
        raise DataError(f"not a segmentation model archive: {path}")
    meta = json.loads(str(arrays["meta"]))
    if meta.get("format_version") != 1:
        raise DataError(f"unsupported model format version {meta.get('format_version')}")
    model = UNet(SegConfig.from_dict(meta["config"]))
    model.load_state_dict(
        {
            name[len("param/"):]: torch.from_numpy(arr)
            for name, arr in arrays.items()
            if name.startswith("param/")
        }
    )
    return model
