"""Classical color-transfer baselines: gray world and histogram matching.

Both operate per channel on intensities and never touch spatial
structure, so image dimensions and object layout are preserved exactly.
"""
from __future__ import annotations

import numpy as np

from .errors import InvalidInputError


def gray_world(image: np.ndarray) -> np.ndarray:
    """Scale each channel so all channel means equal their common mean."""
    if image.ndim != 3 or image.shape[2] < 1:
        raise InvalidInputError("expected an H x W x C image")
    means = image.reshape(-1, image.shape[2]).mean(axis=0)
    if (means == 0).any():
        raise InvalidInputError("zero channel mean: gray-world scale undefined")
    gray = means.mean()
    scaled = image.astype(np.float64) * (gray / means)
    if np.issubdtype(image.dtype, np.integer):
        info = np.iinfo(image.dtype)
        return np.clip(np.rint(scaled), info.min, info.max).astype(image.dtype)
    return scaled.astype(image.dtype)


def _channel_cdf(channel: np.ndarray, bins: int) -> np.ndarray:
    hist = np.bincount(channel.ravel(), minlength=bins).astype(np.float64)
    return hist.cumsum() / hist.sum()


def histogram_match_lut(
    source: np.ndarray, reference: np.ndarray, bins: int = 256
) -> np.ndarray:
    """Monotone intensity lookup table sending source CDF onto reference CDF.

    Each source intensity maps to the lowest reference intensity whose
    cumulative share reaches the source's; ties resolve to the lowest
    reference intensity.
    """
    src_cdf = _channel_cdf(source, bins)
    ref_cdf = _channel_cdf(reference, bins)
    lut = np.searchsorted(ref_cdf, src_cdf, side="left")
    return np.minimum(lut, bins - 1).astype(np.uint8)


def histogram_match(source: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Per-channel histogram matching of 8-bit images."""
    if source.ndim != 3 or reference.ndim != 3:
        raise InvalidInputError("expected H x W x C images")
    if source.shape[2] != reference.shape[2]:
        raise InvalidInputError(
            f"channel mismatch: source has {source.shape[2]}, reference "
            f"{reference.shape[2]}"
        )
    if source.dtype != np.uint8 or reference.dtype != np.uint8:
        raise InvalidInputError("histogram matching operates on uint8 images")
    out = np.empty_like(source)
    for c in range(source.shape[2]):
        lut = histogram_match_lut(source[..., c], reference[..., c])
        out[..., c] = lut[source[..., c]]
    return out
