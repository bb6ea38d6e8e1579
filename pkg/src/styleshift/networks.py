"""Encoder / decoder / discriminator definitions and their composition.

Two encoders, two decoders, and two patch discriminators are trained
jointly. Every (encoder, decoder) pairing is a generator: six such
pairings are exercised per training step over the four shared parameter
sets (the two translation paths, the two self-reconstruction paths, and
the two cross-reconstruction paths).

Architecture notes:
  * The first encoder convolution carries no normalization; its
    activation is the low-level skip source fed to the decoder.
  * The final encoder stage carries no normalization either, so the
    embedding's per-channel mean/std survive to act as the style code.
  * Skip features are bilinearly resized and concatenated before every
    transposed convolution in the decoder.
  * The discriminator is the 70x70-receptive-field patch discriminator
    (three stride-2 4x4 convs, one stride-1 4x4 conv, then a 1-channel
    head) emitting an unbounded spatial score map.
"""
from __future__ import annotations

from dataclasses import dataclass, asdict

import torch
import torch.nn as nn
import torch.nn.functional as F

from .core_math import ChannelStats, DEFAULT_EPS, adain
from .errors import InvalidConfigError, InvalidInputError


@dataclass(frozen=True)
class NetworkConfig:
    in_channels: int = 3
    base_channels: int = 64
    num_downsamples: int = 2
    num_res_blocks: int = 2
    negative_slope: float = 0.2
    disc_base_channels: int = 64
    disc_num_layers: int = 3

    def __post_init__(self):
        if self.num_downsamples < 1:
            raise InvalidConfigError("num_downsamples must be >= 1")
        if self.base_channels < 4:
            raise InvalidConfigError("base_channels must be >= 4")
        if self.num_res_blocks < 1:
            raise InvalidConfigError("num_res_blocks must be >= 1")
        if not 0.0 < self.negative_slope < 1.0:
            raise InvalidConfigError("negative_slope must lie in (0, 1)")
        if self.disc_num_layers < 1:
            raise InvalidConfigError("disc_num_layers must be >= 1")

    @property
    def embedding_channels(self) -> int:
        return self.base_channels * 2**self.num_downsamples

    @property
    def downsample_factor(self) -> int:
        return 2**self.num_downsamples

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        return cls(**d)


def init_weights(module: nn.Module) -> None:
    """Zero-mean Gaussian init with std 0.02, zero biases."""
    if isinstance(module, (nn.Conv2d, nn.ConvTranspose2d)):
        nn.init.normal_(module.weight, 0.0, 0.02)
        if module.bias is not None:
            nn.init.zeros_(module.bias)


class ResidualBlock(nn.Module):
    def __init__(self, channels: int, negative_slope: float, normalize: bool):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)
        self.norm1 = nn.InstanceNorm2d(channels) if normalize else nn.Identity()
        self.norm2 = nn.InstanceNorm2d(channels) if normalize else nn.Identity()
        self.act = nn.LeakyReLU(negative_slope)

    def forward(self, x):
        h = self.act(self.norm1(self.conv1(x)))
        h = self.norm2(self.conv2(h))
        return x + h


class Encoder(nn.Module):
    def __init__(self, cfg: NetworkConfig):
        super().__init__()
        self.cfg = cfg
        act = nn.LeakyReLU(cfg.negative_slope)
        # Skip source: no normalization so raw low-level structure survives.
        self.stem = nn.Sequential(
            nn.Conv2d(cfg.in_channels, cfg.base_channels, 7, padding=3), act
        )
        downs = []
        ch = cfg.base_channels
        for _ in range(cfg.num_downsamples):
            downs += [
                nn.Conv2d(ch, ch * 2, 3, stride=2, padding=1),
                nn.InstanceNorm2d(ch * 2),
                act,
            ]
            ch *= 2
        self.down = nn.Sequential(*downs)
        # Last block is norm-free: the embedding's mean/std are the style
        # code and must not be normalized away.
        blocks = [
            ResidualBlock(ch, cfg.negative_slope, normalize=(i < cfg.num_res_blocks - 1))
            for i in range(cfg.num_res_blocks)
        ]
        self.blocks = nn.Sequential(*blocks)
        self.apply(init_weights)

    def forward(self, image: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        lowlevel = self.stem(image)
        emb = self.blocks(self.down(lowlevel))
        return emb, lowlevel


class Decoder(nn.Module):
    def __init__(self, cfg: NetworkConfig):
        super().__init__()
        self.cfg = cfg
        self.act = nn.LeakyReLU(cfg.negative_slope)
        ch = cfg.embedding_channels
        self.blocks = nn.Sequential(
            *[
                ResidualBlock(ch, cfg.negative_slope, normalize=True)
                for _ in range(cfg.num_res_blocks)
            ]
        )
        ups, norms = [], []
        for _ in range(cfg.num_downsamples):
            # Each transposed conv also consumes the resized skip features.
            ups.append(
                nn.ConvTranspose2d(
                    ch + cfg.base_channels, ch // 2, 3, stride=2, padding=1,
                    output_padding=1,
                )
            )
            norms.append(nn.InstanceNorm2d(ch // 2))
            ch //= 2
        self.ups = nn.ModuleList(ups)
        self.norms = nn.ModuleList(norms)
        self.head = nn.Conv2d(ch, cfg.in_channels, 7, padding=3)
        self.apply(init_weights)

    def forward(self, emb: torch.Tensor, lowlevel: torch.Tensor) -> torch.Tensor:
        h = self.blocks(emb)
        for up, norm in zip(self.ups, self.norms):
            skip = F.interpolate(
                lowlevel, size=h.shape[2:], mode="bilinear", align_corners=False
            )
            h = self.act(norm(up(torch.cat([h, skip], dim=1))))
        return torch.tanh(self.head(h))


class PatchDiscriminator(nn.Module):
    def __init__(self, cfg: NetworkConfig):
        super().__init__()
        d = cfg.disc_base_channels
        slope = 0.2
        layers = [
            nn.Conv2d(cfg.in_channels, d, 4, stride=2, padding=1),
            nn.LeakyReLU(slope),
        ]
        for _ in range(cfg.disc_num_layers - 1):
            layers += [
                nn.Conv2d(d, d * 2, 4, stride=2, padding=1),
                nn.InstanceNorm2d(d * 2),
                nn.LeakyReLU(slope),
            ]
            d *= 2
        layers += [
            nn.Conv2d(d, d * 2, 4, stride=1, padding=1),
            nn.InstanceNorm2d(d * 2),
            nn.LeakyReLU(slope),
            nn.Conv2d(d * 2, 1, 4, stride=1, padding=1),
        ]
        self.net = nn.Sequential(*layers)
        self.apply(init_weights)

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        # No sigmoid: the least-squares objective works on raw scores.
        return self.net(image)


class TranslationModel(nn.Module):
    """The four generator parameter sets plus the two discriminators."""

    def __init__(self, cfg: NetworkConfig):
        super().__init__()
        self.cfg = cfg
        self.encoder_A = Encoder(cfg)
        self.encoder_B = Encoder(cfg)
        self.decoder_A = Decoder(cfg)
        self.decoder_B = Decoder(cfg)
        self.discriminator_A = PatchDiscriminator(cfg)
        self.discriminator_B = PatchDiscriminator(cfg)

    def generator_parameters(self):
        for net in (self.encoder_A, self.encoder_B, self.decoder_A, self.decoder_B):
            yield from net.parameters()

    def discriminator_parameters(self):
        for net in (self.discriminator_A, self.discriminator_B):
            yield from net.parameters()


def encode(
    encoder: Encoder, image: torch.Tensor
) -> tuple[torch.Tensor, torch.Tensor]:
    """Run the encoder; returns (embedding, low-level skip features)."""
    if image.ndim != 4:
        raise InvalidInputError(f"expected N,C,H,W image, got ndim={image.ndim}")
    factor = encoder.cfg.downsample_factor
    if image.shape[2] % factor or image.shape[3] % factor:
        raise InvalidInputError(
            f"spatial size {image.shape[2]}x{image.shape[3]} not divisible by "
            f"{factor}; pad the input first"
        )
    return encoder(image)


def decode(
    decoder: Decoder, emb: torch.Tensor, lowlevel: torch.Tensor
) -> torch.Tensor:
    if emb.shape[1] != decoder.cfg.embedding_channels:
        raise InvalidInputError(
            f"embedding has {emb.shape[1]} channels, decoder expects "
            f"{decoder.cfg.embedding_channels}"
        )
    if lowlevel.shape[1] != decoder.cfg.base_channels:
        raise InvalidInputError(
            f"skip features have {lowlevel.shape[1]} channels, expected "
            f"{decoder.cfg.base_channels}"
        )
    return decoder(emb, lowlevel)


def translate(
    content_image: torch.Tensor,
    src_encoder: Encoder,
    tgt_decoder: Decoder,
    style: ChannelStats,
    eps: float = DEFAULT_EPS,
) -> torch.Tensor:
    """Restyle ``content_image`` to the given style statistics.

    The low-level skip features come from the content encoder, so the
    decoder keeps a footprint of the source objects.
    """
    emb, lowlevel = encode(src_encoder, content_image)
    return decode(tgt_decoder, adain(emb, style, eps), lowlevel)


def discriminate(disc: PatchDiscriminator, image: torch.Tensor) -> torch.Tensor:
    if image.ndim != 4:
        raise InvalidInputError(f"expected N,C,H,W image, got ndim={image.ndim}")
    return disc(image)


def parameter_count(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())
