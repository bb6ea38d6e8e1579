"""Semantically consistent style transfer for cross-domain segmentation."""

from .core_math import ChannelStats, adain, ema_update, instance_stats, sobel_gradients
from .losses import LossReport, LossWeights
from .networks import NetworkConfig, TranslationModel
from .translation import TrainingConfig, TranslationState, lr_schedule, train, train_step

__all__ = [
    "ChannelStats",
    "adain",
    "ema_update",
    "instance_stats",
    "sobel_gradients",
    "LossReport",
    "LossWeights",
    "NetworkConfig",
    "TranslationModel",
    "TrainingConfig",
    "TranslationState",
    "lr_schedule",
    "train",
    "train_step",
]

__version__ = "0.1.0"
