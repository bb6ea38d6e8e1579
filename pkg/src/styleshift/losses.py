"""Loss terms for the translation network.

All L1 terms are per-element means rather than sums so the default
weights stay meaningful regardless of patch resolution. The adversarial
terms follow the least-squares GAN formulation with labels a=0 (fake),
b=1 (real), c=1 (generator target) and the conventional 1/2 factor on
the discriminator side.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch

from .core_math import sobel_gradients
from .errors import InvalidConfigError, InvalidInputError


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 10.0  # cross reconstruction
    lambda2: float = 10.0  # self reconstruction
    lambda3: float = 10.0  # gradient
    lambda4: float = 1.0   # adversarial

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda3", "lambda4"):
            if getattr(self, name) < 0:
                raise InvalidConfigError(f"{name} must be non-negative")

    def to_dict(self) -> dict:
        return {
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "lambda3": self.lambda3,
            "lambda4": self.lambda4,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LossWeights":
        return cls(**d)


@dataclass
class LossReport:
    cross: torch.Tensor
    self_: torch.Tensor
    grad: torch.Tensor
    adv_g: torch.Tensor
    adv_d: torch.Tensor
    total_g: torch.Tensor
    total_d: torch.Tensor

    # Field order of the line-delimited training log.
    FIELDS = ("cross", "self", "grad", "adv_g", "adv_d", "total_g", "total_d")

    def as_floats(self) -> dict[str, float]:
        def to_float(x):
            return float(x.detach()) if isinstance(x, torch.Tensor) else float(x)

        return {
            "cross": to_float(self.cross),
            "self": to_float(self.self_),
            "grad": to_float(self.grad),
            "adv_g": to_float(self.adv_g),
            "adv_d": to_float(self.adv_d),
            "total_g": to_float(self.total_g),
            "total_d": to_float(self.total_d),
        }

    def first_nan_term(self) -> str | None:
        for name, value in self.as_floats().items():
            if value != value or abs(value) == float("inf"):
                return name
        return None


def _check_pair(x: torch.Tensor, y: torch.Tensor, what: str) -> None:
    if x.shape != y.shape:
        raise InvalidInputError(
            f"{what}: shape mismatch {tuple(x.shape)} vs {tuple(y.shape)}"
        )


def _mean_l1(x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    return (x - y).abs().mean()


def cross_reconstruction_loss(a, a_cross, b, b_cross) -> torch.Tensor:
    """Mean L1 between each original and its twice-translated version."""
    _check_pair(a, a_cross, "cross reconstruction A")
    _check_pair(b, b_cross, "cross reconstruction B")
    return _mean_l1(a, a_cross) + _mean_l1(b, b_cross)


def self_reconstruction_loss(a, a_self, b, b_self) -> torch.Tensor:
    """Mean L1 between each original and its within-domain reconstruction."""
    _check_pair(a, a_self, "self reconstruction A")
    _check_pair(b, b_self, "self reconstruction B")
    return _mean_l1(a, a_self) + _mean_l1(b, b_self)


def gradient_loss(a, fake_a, b, fake_b) -> torch.Tensor:
    """Mean L1 between Sobel gradients of each real image and its fake.

    Both gradient components enter the mean, per channel, without a
    magnitude reduction.
    """
    _check_pair(a, fake_a, "gradient pair A")
    _check_pair(b, fake_b, "gradient pair B")
    total = a.new_zeros(())
    for real, fake in ((a, fake_a), (b, fake_b)):
        gx_r, gy_r = sobel_gradients(real)
        gx_f, gy_f = sobel_gradients(fake)
        total = total + (gx_r - gx_f).abs().mean() + (gy_r - gy_f).abs().mean()
    return total


def adversarial_losses(
    d_real_a: torch.Tensor,
    d_fake_a: torch.Tensor,
    d_real_b: torch.Tensor,
    d_fake_b: torch.Tensor,
    d_fake_a_detached: torch.Tensor | None = None,
    d_fake_b_detached: torch.Tensor | None = None,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Least-squares adversarial losses for generator and discriminator.

    ``d_fake_*_detached`` are score maps of the same fakes computed on a
    generator-detached forward; they feed the discriminator loss so that
    it carries no generator gradient. When omitted, the attached maps are
    reused (fine for pure numeric evaluation).
    """
    if d_fake_a_detached is None:
        d_fake_a_detached = d_fake_a
    if d_fake_b_detached is None:
        d_fake_b_detached = d_fake_b
    adv_g = ((d_fake_a - 1.0) ** 2).mean() + ((d_fake_b - 1.0) ** 2).mean()
    adv_d = 0.5 * (
        ((d_real_a - 1.0) ** 2).mean() + (d_fake_a_detached**2).mean()
    ) + 0.5 * (((d_real_b - 1.0) ** 2).mean() + (d_fake_b_detached**2).mean())
    return adv_g, adv_d


def total_losses(
    cross: torch.Tensor,
    self_: torch.Tensor,
    grad: torch.Tensor,
    adv_g: torch.Tensor,
    adv_d: torch.Tensor,
    weights: LossWeights,
) -> LossReport:
    total_g = (
        weights.lambda1 * cross
        + weights.lambda2 * self_
        + weights.lambda3 * grad
        + weights.lambda4 * adv_g
    )
    total_d = weights.lambda4 * adv_d
    return LossReport(cross, self_, grad, adv_g, adv_d, total_g, total_d)
