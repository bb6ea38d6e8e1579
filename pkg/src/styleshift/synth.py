"""Synthetic two-domain benchmark generator.

Produces paired scenes of simple geometric content (building, road, and
tree proxies over a textured background) in two color domains. Domain B
shows the same content as domain A under a fixed nonlinear per-channel
color transform plus noise. The default transform is deliberately
non-monotone in the green channel (it swaps the rank order of the
building and road intensities), so monotone per-channel corrections such
as histogram matching cannot undo it. Labels are identical across the
shift, which makes held-out evaluation of adapted models possible.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data_pipeline import save_image, save_labels, write_manifest
from .errors import InvalidConfigError

# Class colors in domain A (background, building, road, tree). Building
# and road are deliberately close in red and blue, so the green channel
# carries most of their separation.
DOMAIN_A_COLORS = np.array(
    [(168, 148, 118), (115, 70, 100), (105, 95, 108), (60, 130, 70)],
    dtype=np.float64,
)

# Per-channel piecewise-linear intensity curves (control points (x, y)).
# The green curve descends between x=70 and x=95, swapping the rank order
# of the building and road intensities; a monotone map cannot mimic that,
# and since green is what separates those two classes, any monotone
# correction leaves them systematically confused.
DEFAULT_CURVES = (
    ((0, 0), (60, 52), (105, 98), (168, 155), (255, 230)),
    ((0, 60), (58, 118), (82, 142), (86, 76), (107, 97), (130, 140),
     (148, 162), (255, 210)),
    ((0, 5), (70, 78), (118, 140), (255, 235)),
)

Curve = tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class ShiftSpec:
    """Fixed per-channel appearance shift mapping domain A content to B."""

    curves: tuple[Curve, Curve, Curve] = DEFAULT_CURVES
    noise_sigma: float = 1.5

    def __post_init__(self):
        if len(self.curves) != 3:
            raise InvalidConfigError("curves must cover exactly 3 channels")
        for curve in self.curves:
            if len(curve) < 2:
                raise InvalidConfigError("each curve needs >= 2 control points")
            xs = [p[0] for p in curve]
            if any(b <= a for a, b in zip(xs, xs[1:])):
                raise InvalidConfigError(
                    "curve x coordinates must be strictly increasing")
            if any(not (0 <= p[1] <= 255) for p in curve):
                raise InvalidConfigError("curve values must lie in [0, 255]")
        if self.noise_sigma < 0:
            raise InvalidConfigError("noise_sigma must be non-negative")

    def to_dict(self) -> dict:
        return {
            "curves": [[list(p) for p in curve] for curve in self.curves],
            "noise_sigma": self.noise_sigma,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ShiftSpec":
        d = dict(d)
        if "curves" in d:
            d["curves"] = tuple(
                tuple(tuple(p) for p in curve) for curve in d["curves"])
        return cls(**d)


def apply_shift(image: np.ndarray, spec: ShiftSpec, rng: np.random.Generator) -> np.ndarray:
    x = image.astype(np.float64)
    y = np.empty_like(x)
    for c, curve in enumerate(spec.curves):
        xs = [p[0] for p in curve]
        ys = [p[1] for p in curve]
        y[..., c] = np.interp(x[..., c], xs, ys)
    y = y + rng.normal(0.0, spec.noise_sigma, size=y.shape)
    return np.clip(np.rint(y), 0, 255).astype(np.uint8)


def _draw_scene(size: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    labels = np.zeros((size, size), dtype=np.int64)
    image = np.empty((size, size, 3), dtype=np.float64)
    image[:] = DOMAIN_A_COLORS[0] + rng.normal(0, 4, size=3)

    rows, cols = np.mgrid[0:size, 0:size]

    # Roads: one or two axis-aligned stripes.
    for _ in range(rng.integers(1, 3)):
        width = int(rng.integers(3, 7))
        pos = int(rng.integers(0, size - width))
        color = DOMAIN_A_COLORS[2] + rng.normal(0, 4, size=3)
        if rng.random() < 0.5:
            labels[pos : pos + width, :] = 2
            image[pos : pos + width, :] = color
        else:
            labels[:, pos : pos + width] = 2
            image[:, pos : pos + width] = color

    # Buildings: axis-aligned rectangles.
    for _ in range(rng.integers(2, 5)):
        h = int(rng.integers(size // 8, size // 3))
        w = int(rng.integers(size // 8, size // 3))
        r = int(rng.integers(0, size - h))
        c = int(rng.integers(0, size - w))
        labels[r : r + h, c : c + w] = 1
        image[r : r + h, c : c + w] = DOMAIN_A_COLORS[1] + rng.normal(0, 4, size=3)

    # Trees: discs.
    for _ in range(rng.integers(3, 7)):
        radius = int(rng.integers(3, max(4, size // 9)))
        cr = int(rng.integers(radius, size - radius))
        cc = int(rng.integers(radius, size - radius))
        disc = (rows - cr) ** 2 + (cols - cc) ** 2 <= radius**2
        labels[disc] = 3
        image[disc] = DOMAIN_A_COLORS[3] + rng.normal(0, 8, size=3)

    image += rng.normal(0, 4.0, size=image.shape)
    return np.clip(np.rint(image), 0, 255).astype(np.uint8), labels


def generate_scenes(
    n_images: int,
    size: int = 64,
    seed: int = 0,
    shift: ShiftSpec | None = None,
) -> tuple[list[np.ndarray], list[np.ndarray], list[np.ndarray]]:
    """Returns (domain A images, domain B images, shared labels)."""
    if shift is None:
        shift = ShiftSpec()
    rng = np.random.default_rng(seed)
    images_a, images_b, labels = [], [], []
    for _ in range(n_images):
        img, lbl = _draw_scene(size, rng)
        images_a.append(img)
        images_b.append(apply_shift(img, shift, rng))
        labels.append(lbl)
    return images_a, images_b, labels


def write_dataset(
    out_dir: str | Path,
    n_images: int,
    size: int = 64,
    seed: int = 0,
    shift: ShiftSpec | None = None,
) -> dict:
    """Emit both domains plus manifests under ``out_dir``.

    Layout: ``domain_A/img_###.png`` + ``lbl_###.png`` + ``manifest.json``
    per domain. Returns summary statistics of the generated pair.
    """
    out_dir = Path(out_dir)
    images_a, images_b, labels = generate_scenes(n_images, size, seed, shift)
    for domain, images in (("A", images_a), ("B", images_b)):
        ddir = out_dir / f"domain_{domain}"
        items = []
        for i, (img, lbl) in enumerate(zip(images, labels)):
            save_image(img, ddir / f"img_{i:03d}.png")
            save_labels(lbl, ddir / f"lbl_{i:03d}.png")
            items.append({"image": f"img_{i:03d}.png", "label": f"lbl_{i:03d}.png"})
        write_manifest(items, ddir / "manifest.json")
    mean_a = np.mean([img.reshape(-1, 3).mean(axis=0) for img in images_a], axis=0)
    mean_b = np.mean([img.reshape(-1, 3).mean(axis=0) for img in images_b], axis=0)
    return {
        "n_images": n_images,
        "size": size,
        "seed": seed,
        "channel_means_A": mean_a.tolist(),
        "channel_means_B": mean_b.tolist(),
        "channel_mean_gap": float(np.linalg.norm(mean_a - mean_b)),
    }
