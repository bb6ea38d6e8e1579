"""Training loop for the translation network and deterministic generation.

One training iteration wires the full graph: encode both domains, swap
styles via adaptive instance re-normalization, decode the two fakes, the
two self reconstructions and the two cross reconstructions, score the
fakes with the patch discriminators, then apply one Adam step to the
generator parameters and one to the discriminator parameters. After the
updates the per-domain global style statistics are advanced by one EMA
step from the current patch embeddings.

Checkpoint format (version 1): a single ``.npz`` archive with keys

  meta                      JSON string: format_version, network config,
                            training config, epoch counter
  param/<name>              one array per model parameter/buffer, names
                            are the flat model state-dict keys
  stats/{A,B}/{mu,sigma}    global style statistics per domain
  opt/{g,d}/state/<i>/<k>   Adam state tensors per parameter index
  opt/{g,d}/groups          JSON string: optimizer param-group settings
  rng/numpy                 JSON string: sampler bit-generator state
  rng/torch                 uint8 array: torch RNG state

Training log: one JSON object per line with keys, in order:
iteration, epoch, lr, cross, self, grad, adv_g, adv_d, total_g, total_d.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .core_math import ChannelStats, DEFAULT_EPS, adain, ema_update, instance_stats
from .data_pipeline import (
    DEFAULT_OVERLAP,
    DEFAULT_PATCH_SIZE,
    denormalize,
    extract_patches,
    normalize,
    sample_pair,
    stitch_patches,
)
from .errors import DataError, InvalidConfigError, InvalidInputError, NumericalError
from .losses import LossReport, LossWeights, adversarial_losses, total_losses
from .losses import cross_reconstruction_loss, gradient_loss, self_reconstruction_loss
from .networks import NetworkConfig, TranslationModel, translate

CHECKPOINT_FORMAT_VERSION = 1

ADAM_BETAS = (0.5, 0.999)


@dataclass(frozen=True)
class TrainingConfig:
    num_epochs: int = 25
    base_lr: float = 0.001
    decay_epoch: int = 15
    weights: LossWeights = field(default_factory=LossWeights)
    d_rate: float = 0.95
    patches_per_iteration: int = 1
    eps: float = DEFAULT_EPS
    rng_seed: int = 0
    network: NetworkConfig = field(default_factory=NetworkConfig)

    def __post_init__(self):
        if not 0 < self.decay_epoch < self.num_epochs:
            raise InvalidConfigError(
                f"decay_epoch must lie in (0, num_epochs), got {self.decay_epoch}"
            )
        if not 0.0 < self.d_rate < 1.0:
            raise InvalidConfigError(f"d_rate must lie in (0, 1), got {self.d_rate}")
        if self.base_lr <= 0 or self.eps <= 0:
            raise InvalidConfigError("base_lr and eps must be positive")

    def to_dict(self) -> dict:
        d = {
            "num_epochs": self.num_epochs,
            "base_lr": self.base_lr,
            "decay_epoch": self.decay_epoch,
            "weights": self.weights.to_dict(),
            "d_rate": self.d_rate,
            "patches_per_iteration": self.patches_per_iteration,
            "eps": self.eps,
            "rng_seed": self.rng_seed,
            "network": self.network.to_dict(),
        }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingConfig":
        d = dict(d)
        if "weights" in d:
            d["weights"] = LossWeights.from_dict(d["weights"])
        if "network" in d:
            d["network"] = NetworkConfig.from_dict(d["network"])
        return cls(**d)


class TranslationState:
    """Model, optimizers, global style statistics, and epoch counter."""

    def __init__(self, cfg: TrainingConfig):
        torch.manual_seed(cfg.rng_seed)
        self.model = TranslationModel(cfg.network)
        self.opt_g = torch.optim.Adam(
            self.model.generator_parameters(), lr=cfg.base_lr, betas=ADAM_BETAS
        )
        self.opt_d = torch.optim.Adam(
            self.model.discriminator_parameters(), lr=cfg.base_lr, betas=ADAM_BETAS
        )
        channels = cfg.network.embedding_channels
        self.global_stats_A = ChannelStats.zeros(channels)
        self.global_stats_B = ChannelStats.zeros(channels)
        self.epoch = 0

    def set_lr(self, lr: float) -> None:
        for opt in (self.opt_g, self.opt_d):
            for group in opt.param_groups:
                group["lr"] = lr


def lr_schedule(epoch_no: int, cfg: TrainingConfig) -> float:
    """Constant base rate, then linear decay to reach
    base_lr / (num_epochs - decay_epoch) in the final epoch."""
    if not 0 <= epoch_no < cfg.num_epochs:
        raise InvalidInputError(
            f"epoch {epoch_no} outside [0, {cfg.num_epochs})"
        )
    if epoch_no < cfg.decay_epoch:
        return cfg.base_lr
    return cfg.base_lr * (cfg.num_epochs - epoch_no) / (
        cfg.num_epochs - cfg.decay_epoch
    )


def to_tensor(patch: np.ndarray) -> torch.Tensor:
    """H x W x C uint8 (or [-1,1] float) array -> 1 x C x H x W tensor."""
    if patch.dtype == np.uint8:
        patch = normalize(patch)
    arr = np.ascontiguousarray(np.transpose(patch, (2, 0, 1))[None])
    return torch.from_numpy(arr.astype(np.float32))


def to_array(image: torch.Tensor) -> np.ndarray:
    """1 x C x H x W tensor in [-1,1] -> H x W x C uint8 array."""
    arr = image.detach().squeeze(0).permute(1, 2, 0).numpy()
    return denormalize(arr)


def train_step(
    patch_a: torch.Tensor,
    patch_b: torch.Tensor,
    state: TranslationState,
    cfg: TrainingConfig,
) -> tuple[LossReport, TranslationState]:
    """One optimization step over the full six-path graph."""
    model = state.model
    eps = cfg.eps

    emb_a, low_a = model.encoder_A(patch_a)
    emb_b, low_b = model.encoder_B(patch_b)
    stats_a = instance_stats(emb_a)
    stats_b = instance_stats(emb_b)

    # Style swap: fake A carries B's style and is judged against real B.
    fake_a = model.decoder_B(adain(emb_a, stats_b, eps), low_a)
    fake_b = model.decoder_A(adain(emb_b, stats_a, eps), low_b)

    # Self reconstructions (style identity).
    rec_a = model.decoder_A(adain(emb_a, stats_a, eps), low_a)
    rec_b = model.decoder_B(adain(emb_b, stats_b, eps), low_b)

    # Cross reconstructions: swap the styles of the fakes back. Fake A is
    # B-styled, so it goes through encoder B.
    emb_fa, low_fa = model.encoder_B(fake_a)
    emb_fb, low_fb = model.encoder_A(fake_b)
    cross_a = model.decoder_A(adain(emb_fa, stats_a, eps), low_fa)
    cross_b = model.decoder_B(adain(emb_fb, stats_b, eps), low_fb)

    d_real_a = model.discriminator_A(patch_a)
    d_real_b = model.discriminator_B(patch_b)
    d_fake_b = model.discriminator_A(fake_b)
    d_fake_a = model.discriminator_B(fake_a)
    d_fake_b_det = model.discriminator_A(fake_b.detach())
    d_fake_a_det = model.discriminator_B(fake_a.detach())

    cross = cross_reconstruction_loss(patch_a, cross_a, patch_b, cross_b)
    self_ = self_reconstruction_loss(patch_a, rec_a, patch_b, rec_b)
    grad = gradient_loss(patch_a, fake_a, patch_b, fake_b)
    adv_g, adv_d = adversarial_losses(
        d_real_a, d_fake_a, d_real_b, d_fake_b, d_fake_a_det, d_fake_b_det
    )
    report = total_losses(cross, self_, grad, adv_g, adv_d, cfg.weights)

    bad = report.first_nan_term()
    if bad is not None:
        raise NumericalError(f"non-finite loss term: {bad}")

    state.opt_g.zero_grad(set_to_none=True)
    report.total_g.backward()
    state.opt_g.step()

    state.opt_d.zero_grad(set_to_none=True)
    report.total_d.backward()
    state.opt_d.step()

    # Generator backward leaves stale gradients on discriminator params.
    state.opt_g.zero_grad(set_to_none=True)

    state.global_stats_A = ema_update(
        state.global_stats_A, stats_a.detach(), cfg.d_rate
    )
    state.global_stats_B = ema_update(
        state.global_stats_B, stats_b.detach(), cfg.d_rate
    )
    return report, state


def train(
    dataset_a: list[np.ndarray],
    dataset_b: list[np.ndarray],
    cfg: TrainingConfig,
    out_dir: str | Path | None = None,
    checkpoint_every_epoch: bool = False,
    progress: bool = False,
) -> TranslationState:
    """Full training run; iterations per epoch = min(|A|, |B|)."""
    if not dataset_a or not dataset_b:
        raise InvalidInputError("both domains must provide at least one patch")
    tensors_a = [to_tensor(p) for p in dataset_a]
    tensors_b = [to_tensor(p) for p in dataset_b]

    state = TranslationState(cfg)
    rng = np.random.default_rng(cfg.rng_seed)
    iters_per_epoch = min(len(tensors_a), len(tensors_b))

    log_file = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        (out_dir / "logs").mkdir(parents=True, exist_ok=True)
        log_file = (out_dir / "logs" / "training_log.jsonl").open("w")

    iteration = 0
    try:
        for epoch in range(cfg.num_epochs):
            state.epoch = epoch
            lr = lr_schedule(epoch, cfg)
            state.set_lr(lr)
            for _ in range(iters_per_epoch):
                patch_a, patch_b = sample_pair(tensors_a, tensors_b, rng)
                report, state = train_step(patch_a, patch_b, state, cfg)
                iteration += 1
                if log_file is not None:
                    entry = {"iteration": iteration, "epoch": epoch, "lr": lr}
                    entry.update(report.as_floats())
                    log_file.write(json.dumps(entry) + "\n")
            if progress:
                print(
                    f"epoch {epoch + 1}/{cfg.num_epochs} lr={lr:.6f} "
                    f"total_g={float(report.total_g):.4f} "
                    f"total_d={float(report.total_d):.4f}"
                )
            if checkpoint_every_epoch and out_dir is not None:
                save_checkpoint(
                    out_dir / "checkpoints" / f"epoch_{epoch:03d}.npz",
                    state,
                    cfg,
                    rng,
                )
        state.epoch = cfg.num_epochs
        if out_dir is not None:
            save_checkpoint(out_dir / "checkpoints" / "final.npz", state, cfg, rng)
    finally:
        if log_file is not None:
            log_file.close()
    return state


def save_checkpoint(
    path: str | Path,
    state: TranslationState,
    cfg: TrainingConfig,
    rng: np.random.Generator | None = None,
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays: dict[str, np.ndarray] = {}
    meta = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "training": cfg.to_dict(),
        "epoch": state.epoch,
    }
    arrays["meta"] = np.array(json.dumps(meta))
    for name, tensor in state.model.state_dict().items():
        arrays[f"param/{name}"] = tensor.detach().numpy()
    for domain, stats in (("A", state.global_stats_A), ("B", state.global_stats_B)):
        arrays[f"stats/{domain}/mu"] = stats.mu.numpy()
        arrays[f"stats/{domain}/sigma"] = stats.sigma.numpy()
    for tag, opt in (("g", state.opt_g), ("d", state.opt_d)):
        sd = opt.state_dict()
        arrays[f"opt/{tag}/groups"] = np.array(json.dumps(sd["param_groups"]))
        for idx, entry in sd["state"].items():
            for key, value in entry.items():
                arrays[f"opt/{tag}/state/{idx}/{key}"] = (
                    value.detach().numpy()
                    if isinstance(value, torch.Tensor)
                    else np.asarray(value)
                )
    if rng is not None:
        arrays["rng/numpy"] = np.array(json.dumps(rng.bit_generator.state))
    arrays["rng/torch"] = torch.get_rng_state().numpy()
    with path.open("wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(
    path: str | Path,
) -> tuple[TranslationState, TrainingConfig, np.random.Generator | None]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}")
    with np.load(path, allow_pickle=False) as archive:
        arrays = {k: archive[k] for k in archive.files}
    if "meta" not in arrays:
        raise DataError(f"not a translation checkpoint: {path}")
    meta = json.loads(str(arrays["meta"]))
    if meta.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise DataError(
            f"unsupported checkpoint format version {meta.get('format_version')}"
        )
    cfg = TrainingConfig.from_dict(meta["training"])
    state = TranslationState(cfg)
    state.epoch = meta["epoch"]
    params = {
        name[len("param/"):]: torch.from_numpy(arr)
        for name, arr in arrays.items()
        if name.startswith("param/")
    }
    state.model.load_state_dict(params)
    state.global_stats_A = ChannelStats(
        torch.from_numpy(arrays["stats/A/mu"]),
        torch.from_numpy(arrays["stats/A/sigma"]),
    )
    state.global_stats_B = ChannelStats(
        torch.from_numpy(arrays["stats/B/mu"]),
        torch.from_numpy(arrays["stats/B/sigma"]),
    )
    for tag, opt in (("g", state.opt_g), ("d", state.opt_d)):
        groups = json.loads(str(arrays[f"opt/{tag}/groups"]))
        opt_state: dict[int, dict] = {}
        prefix = f"opt/{tag}/state/"
        for name, arr in arrays.items():
            if not name.startswith(prefix):
                continue
            _, idx, key = name[len(prefix) - 1 :].split("/")[0:3]
            entry = opt_state.setdefault(int(idx), {})
            entry[key] = torch.from_numpy(arr)
        if opt_state:
            opt.load_state_dict({"state": opt_state, "param_groups": groups})
    rng = None
    if "rng/numpy" in arrays:
        rng = np.random.default_rng()
        rng.bit_generator.state = json.loads(str(arrays["rng/numpy"]))
    torch.set_rng_state(torch.from_numpy(arrays["rng/torch"]))
    return state, cfg, rng


def _stats_for_target(state: TranslationState, target_domain: str) -> ChannelStats:
    stats = {"A": state.global_stats_A, "B": state.global_stats_B}.get(target_domain)
    if stats is None:
        raise InvalidInputError(f"unknown domain {target_domain!r}, expected A or B")
    if (stats.mu == 0).all() and (stats.sigma == 0).all():
        raise DataError(
            f"checkpoint carries no finalized global stats for domain {target_domain}"
        )
    return stats


def generate_fake_dataset(
    state: TranslationState,
    images: list[np.ndarray],
    content_domain: str = "A",
    eps: float | None = None,
    patch_size: int = DEFAULT_PATCH_SIZE,
    overlap: int = DEFAULT_OVERLAP,
) -> list[np.ndarray]:
    """Restyle whole rasters of one domain with the other's global style.

    Deterministic by construction: a pure forward pass using the frozen
    global statistics, so repeated invocations are bit-identical.
    """
    if content_domain not in ("A", "B"):
        raise InvalidInputError(f"unknown domain {content_domain!r}, expected A or B")
    target_domain = "B" if content_domain == "A" else "A"
    style = _stats_for_target(state, target_domain)
    encoder = getattr(state.model, f"encoder_{content_domain}")
    decoder = getattr(state.model, f"decoder_{target_domain}")
    if eps is None:
        eps = DEFAULT_EPS

    state.model.eval()
    results = []
    try:
        with torch.no_grad():
            for image in images:
                h, w = image.shape[:2]
                if h <= patch_size and w <= patch_size:
                    out = to_array(
                        translate(to_tensor(image), encoder, decoder, style, eps)
                    )
                else:
                    patches, grid = extract_patches(image, patch_size, overlap)
                    fake_patches = [
                        translate(to_tensor(p), encoder, decoder, style, eps)
                        .squeeze(0)
                        .permute(1, 2, 0)
                        .numpy()
                        for p in patches
                    ]
                    stitched = stitch_patches(fake_patches, grid, (h, w))
                    out = denormalize(stitched)
                results.append(out)
    finally:
        state.model.train()
    return results
