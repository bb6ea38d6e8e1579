"""Closed-form numerical kernels used throughout the translation network.

Everything here is a pure function of its inputs: per-channel embedding
statistics, adaptive instance re-normalization, the exponential moving
average used to freeze global style statistics, and replicate-padded
Sobel gradients.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .errors import InvalidConfigError, InvalidInputError

DEFAULT_EPS = 1e-5

# Cross-correlation kernels; the vertical kernel is the transpose of the
# horizontal one.
_SOBEL_X = torch.tensor(
    [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]]
)
_SOBEL_Y = _SOBEL_X.t().contiguous()


@dataclass(frozen=True)
class ChannelStats:
    """Per-channel mean/std vectors of an embedding.

    Also used for the global running statistics maintained during
    training: the same container, updated by :func:`ema_update`.
    """

    mu: torch.Tensor
    sigma: torch.Tensor

    def __post_init__(self):
        if self.mu.ndim != 1 or self.sigma.ndim != 1:
            raise InvalidInputError("mu and sigma must be 1-D vectors")
        if self.mu.shape != self.sigma.shape:
            raise InvalidInputError(
                f"mu and sigma length mismatch: {self.mu.shape[0]} vs "
                f"{self.sigma.shape[0]}"
            )
        if (self.sigma.detach() < 0).any():
            raise InvalidInputError("sigma entries must be non-negative")

    @property
    def num_channels(self) -> int:
        return self.mu.shape[0]

    def detach(self) -> "ChannelStats":
        return ChannelStats(self.mu.detach().clone(), self.sigma.detach().clone())

    @classmethod
    def zeros(cls, num_channels: int) -> "ChannelStats":
        return cls(torch.zeros(num_channels), torch.zeros(num_channels))


def instance_stats(emb: torch.Tensor) -> ChannelStats:
    """Population mean/std per channel over batch and spatial positions.

    Uses the 1/N (population) standard deviation, matching the instance
    normalization convention.
    """
    if emb.ndim != 4:
        raise InvalidInputError(f"expected N,C,H,W tensor, got ndim={emb.ndim}")
    if emb.shape[0] == 0 or emb.shape[2] == 0 or emb.shape[3] == 0:
        raise InvalidInputError("embedding has no spatial elements")
    mu = emb.mean(dim=(0, 2, 3))
    var = emb.var(dim=(0, 2, 3), unbiased=False)
    return ChannelStats(mu, torch.sqrt(var))


def adain(
    emb: torch.Tensor, target: ChannelStats, eps: float = DEFAULT_EPS
) -> torch.Tensor:
    """Re-normalize each channel of ``emb`` to the target mean/std.

    out[c] = target.sigma[c] * (emb[c] - mu_c) / (sigma_c + eps) + target.mu[c]
    """
    if eps <= 0:
        raise InvalidConfigError(f"eps must be positive, got {eps}")
    if target.num_channels != emb.shape[1]:
        raise InvalidInputError(
            f"channel count mismatch: embedding has {emb.shape[1]}, "
            f"target stats have {target.num_channels}"
        )
    stats = instance_stats(emb)
    mu = stats.mu.view(1, -1, 1, 1)
    sigma = stats.sigma.view(1, -1, 1, 1)
    t_mu = target.mu.view(1, -1, 1, 1).to(emb.dtype)
    t_sigma = target.sigma.view(1, -1, 1, 1).to(emb.dtype)
    return t_sigma * (emb - mu) / (sigma + eps) + t_mu


def ema_update(
    global_stats: ChannelStats, current: ChannelStats, d_rate: float
) -> ChannelStats:
    """One exponential-moving-average step of the global style statistics.

    Returns d_rate * global + (1 - d_rate) * current, elementwise.
    """
    if not 0.0 < d_rate < 1.0:
        raise InvalidConfigError(f"d_rate must lie in (0, 1), got {d_rate}")
    if global_stats.num_channels != current.num_channels:
        raise InvalidInputError(
            f"channel count mismatch: {global_stats.num_channels} vs "
            f"{current.num_channels}"
        )
    return ChannelStats(
        d_rate * global_stats.mu + (1.0 - d_rate) * current.mu,
        d_rate * global_stats.sigma + (1.0 - d_rate) * current.sigma,
    )


def sobel_gradients(image: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Per-channel Sobel gradients with edge replication at the borders.

    Returns (gx, gy), each the same shape as the input. Channels are not
    mixed and no magnitude is taken; the gradient loss consumes both
    components directly.
    """
    if image.ndim != 4:
        raise InvalidInputError(f"expected N,C,H,W tensor, got ndim={image.ndim}")
    if image.shape[2] < 3 or image.shape[3] < 3:
        raise InvalidInputError(
            f"spatial size {image.shape[2]}x{image.shape[3]} smaller than the "
            "3x3 kernel"
        )
    channels = image.shape[1]
    kx = _SOBEL_X.to(image.dtype).expand(channels, 1, 3, 3)
    ky = _SOBEL_Y.to(image.dtype).expand(channels, 1, 3, 3)
    padded = F.pad(image, (1, 1, 1, 1), mode="replicate")
    gx = F.conv2d(padded, kx, groups=channels)
    gy = F.conv2d(padded, ky, groups=channels)
    return gx, gy
