"""Raster/label I/O, normalization, patch tiling and stitching, sampling.

Images travel as H x W x C uint8 arrays on disk (lossless PNG) and as
[-1, 1] float tensors inside the networks. Label rasters are H x W
integer class-id arrays stored as single-channel indexed PNGs and are
never interpolated.

A dataset manifest is a JSON file of the form::

    {"items": [{"image": "img/a_000.png", "label": "lbl/a_000.png"}, ...]}

with paths resolved relative to the manifest's directory; ``label`` may
be null or absent.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError, InvalidInputError

CLASS_NAMES = ("background", "building", "road", "tree")
NUM_CLASSES = len(CLASS_NAMES)
# background, building, road, tree
CLASS_PALETTE = ((0, 0, 0), (255, 0, 0), (255, 255, 255), (0, 255, 0))

DEFAULT_PATCH_SIZE = 256
DEFAULT_OVERLAP = 32


@dataclass(frozen=True)
class PatchGrid:
    patch_size: int
    overlap: int
    origins: tuple[tuple[int, int], ...]

    @property
    def stride(self) -> int:
        return self.patch_size - self.overlap


def _axis_origins(dim: int, patch_size: int, stride: int) -> list[int]:
    origins = list(range(0, dim - patch_size + 1, stride))
    if origins[-1] != dim - patch_size:
        origins.append(dim - patch_size)  # clamp to the edge, no padding
    return origins


def extract_patches(
    image: np.ndarray,
    patch_size: int = DEFAULT_PATCH_SIZE,
    overlap: int = DEFAULT_OVERLAP,
) -> tuple[list[np.ndarray], PatchGrid]:
    """Tile an H x W[x C] raster into overlapping square patches."""
    if not 0 <= overlap < patch_size:
        raise InvalidInputError(
            f"overlap must lie in [0, patch_size), got {overlap}"
        )
    h, w = image.shape[:2]
    if h < patch_size or w < patch_size:
        raise InvalidInputError(
            f"image {h}x{w} smaller than patch size {patch_size}"
        )
    stride = patch_size - overlap
    origins = [
        (r, c)
        for r in _axis_origins(h, patch_size, stride)
        for c in _axis_origins(w, patch_size, stride)
    ]
    patches = [
        image[r : r + patch_size, c : c + patch_size].copy() for r, c in origins
    ]
    return patches, PatchGrid(patch_size, overlap, tuple(origins))


def stitch_patches(
    patches: list[np.ndarray], grid: PatchGrid, out_dims: tuple[int, int]
) -> np.ndarray:
    """Reassemble patches, averaging overlapping pixels uniformly."""
    if len(patches) != len(grid.origins):
        raise InvalidInputError(
            f"{len(patches)} patches for {len(grid.origins)} grid origins"
        )
    h, w = out_dims
    ps = grid.patch_size
    for r, c in grid.origins:
        if r + ps > h or c + ps > w:
            raise InvalidInputError("grid origin outside the output raster")
    extra = patches[0].shape[2:]
    acc = np.zeros((h, w) + extra, dtype=np.float64)
    count = np.zeros((h, w) + (1,) * len(extra), dtype=np.float64)
    for patch, (r, c) in zip(patches, grid.origins):
        if patch.shape[:2] != (ps, ps):
            raise InvalidInputError("patch shape inconsistent with grid")
        acc[r : r + ps, c : c + ps] += patch
        count[r : r + ps, c : c + ps] += 1.0
    if (count == 0).any():
        raise InvalidInputError("grid does not cover the output raster")
    out = acc / count
    return out.astype(patches[0].dtype)


def normalize(image: np.ndarray) -> np.ndarray:
    """Map 0..255 intensities to [-1, 1] float32."""
    return (image.astype(np.float32) / 127.5) - 1.0


def denormalize(image: np.ndarray) -> np.ndarray:
    """Inverse of :func:`normalize`, clamped and rounded to uint8."""
    x = (np.clip(image.astype(np.float64), -1.0, 1.0) + 1.0) * 127.5
    return np.rint(x).astype(np.uint8)


def sample_pair(
    dataset_a: list, dataset_b: list, rng: np.random.Generator
) -> tuple:
    """Draw one patch from each domain, independently and uniformly."""
    if len(dataset_a) == 0 or len(dataset_b) == 0:
        raise InvalidInputError("cannot sample from an empty dataset")
    return (
        dataset_a[int(rng.integers(len(dataset_a)))],
        dataset_b[int(rng.integers(len(dataset_b)))],
    )


def load_image(path: str | Path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise DataError(f"image not found: {path}")
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"))


def save_image(image: np.ndarray, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(image).save(path)


def load_labels(path: str | Path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise DataError(f"label raster not found: {path}")
    with Image.open(path) as img:
        labels = np.asarray(img.convert("P") if img.mode == "P" else img.convert("L"))
    labels = labels.astype(np.int64)
    if labels.max() >= NUM_CLASSES or labels.min() < 0:
        raise DataError(f"label ids outside 0..{NUM_CLASSES - 1} in {path}")
    return labels


def save_labels(labels: np.ndarray, path: str | Path) -> None:
    """Write a class-id raster as an indexed PNG with the class palette."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    img = Image.fromarray(labels.astype(np.uint8), mode="P")
    palette = []
    for rgb in CLASS_PALETTE:
        palette.extend(rgb)
    img.putpalette(palette + [0] * (768 - len(palette)))
    img.save(path)


@dataclass(frozen=True)
class ManifestItem:
    image: Path
    label: Path | None


def load_manifest(path: str | Path) -> list[ManifestItem]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    try:
        payload = json.loads(path.read_text())
        items = payload["items"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DataError(f"malformed manifest {path}: {exc}") from exc
    base = path.parent
    out = []
    for item in items:
        label = item.get("label")
        out.append(
            ManifestItem(
                image=base / item["image"],
                label=(base / label) if label else None,
            )
        )
    if not out:
        raise DataError(f"manifest {path} lists no items")
    return out


def write_manifest(items: list[dict], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps({"items": items}, indent=2) + "\n")
