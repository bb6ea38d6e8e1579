"""Command-line surface tying the pipeline together.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
All randomness flows from the ``--seed`` of each command; the effective
configuration is echoed into every output directory as ``config.json``.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import baselines as baselines_mod
from . import data_pipeline as dp
from . import segmentation as seg
from . import synth as synth_mod
from . import translation as tr
from .errors import DataError, InvalidConfigError, InvalidInputError, NumericalError
from .losses import LossWeights
from .networks import NetworkConfig


def _echo_config(out_dir: Path, config: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_text(json.dumps(config, indent=2) + "\n")


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise DataError(f"config file not found: {p}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed config file {p}: {exc}") from exc


def _manifest_patches(
    manifest: str, patch_size: int, overlap: int, with_labels: bool = False
):
    """Load every manifest image and tile it into training patches."""
    items = dp.load_manifest(manifest)
    patches, label_patches = [], []
    for item in items:
        image = dp.load_image(item.image)
        if image.shape[0] == patch_size and image.shape[1] == patch_size:
            img_patches, grid = [image], None
        else:
            img_patches, grid = dp.extract_patches(image, patch_size, overlap)
        patches.extend(img_patches)
        if with_labels:
            if item.label is None:
                raise DataError(f"manifest item {item.image} has no label")
            labels = dp.load_labels(item.label)
            if grid is None:
                label_patches.append(labels)
            else:
                label_patches.extend(
                    labels[r : r + patch_size, c : c + patch_size]
                    for r, c in grid.origins
                )
    if with_labels:
        return patches, label_patches
    return patches


@click.group()
def cli():
    """Cross-domain restyling and segmentation adaptation pipeline."""


@cli.command("synth-data")
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--seed", default=0, show_default=True)
@click.option("--n-images", default=32, show_default=True)
@click.option("--size", default=64, show_default=True)
@click.option("--shift-spec", default=None, help="JSON shift spec (inline or @file).")
@click.option("--min-gap", default=0.0, show_default=True,
              help="Fail if the inter-domain channel-mean gap is below this.")
def synth_data(out_dir, seed, n_images, size, shift_spec, min_gap):
    """Generate the paired synthetic two-domain benchmark."""
    if shift_spec is None:
        spec = synth_mod.ShiftSpec()
    else:
        raw = Path(shift_spec[1:]).read_text() if shift_spec.startswith("@") else shift_spec
        spec = synth_mod.ShiftSpec.from_dict(json.loads(raw))
    summary = synth_mod.write_dataset(out_dir, n_images, size, seed, spec)
    summary["shift"] = spec.to_dict()
    _echo_config(Path(out_dir), summary)
    if summary["channel_mean_gap"] < min_gap:
        raise DataError(
            f"channel-mean gap {summary['channel_mean_gap']:.2f} below "
            f"required {min_gap}"
        )
    click.echo(json.dumps(summary, indent=2))


def _training_config(config_file, overrides: dict) -> tr.TrainingConfig:
    base = tr.TrainingConfig().to_dict()
    file_cfg = _load_config_file(config_file)
    for key, value in file_cfg.items():
        if key not in base:
            raise DataError(f"unknown config key: {key}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            base[key].update(value)
        else:
            base[key] = value
    for key, value in overrides.items():
        if value is None:
            continue
        if "." in key:
            outer, inner = key.split(".")
            base[outer][inner] = value
        else:
            base[key] = value
    return tr.TrainingConfig.from_dict(base)


@cli.command("translate-train")
@click.argument("manifest_a", type=click.Path())
@click.argument("manifest_b", type=click.Path())
@click.option("--config", "config_file", default=None, type=click.Path())
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--out-checkpoint", default=None, type=click.Path())
@click.option("--epochs", default=None, type=int)
@click.option("--base-lr", default=None, type=float)
@click.option("--decay-epoch", default=None, type=int)
@click.option("--d-rate", default=None, type=float)
@click.option("--seed", default=None, type=int)
@click.option("--base-channels", default=None, type=int)
@click.option("--num-downsamples", default=None, type=int)
@click.option("--disc-base-channels", default=None, type=int)
@click.option("--patch-size", default=dp.DEFAULT_PATCH_SIZE, show_default=True)
@click.option("--overlap", default=dp.DEFAULT_OVERLAP, show_default=True)
@click.option("--checkpoint-every-epoch", is_flag=True, default=False)
@click.option("--quiet", is_flag=True, default=False)
def translate_train(
    manifest_a, manifest_b, config_file, out_dir, out_checkpoint, epochs,
    base_lr, decay_epoch, d_rate, seed, base_channels, num_downsamples,
    disc_base_channels, patch_size, overlap, checkpoint_every_epoch, quiet,
):
    """Train the style-transfer network on two domain manifests."""
    cfg = _training_config(
        config_file,
        {
            "num_epochs": epochs,
            "base_lr": base_lr,
            "decay_epoch": decay_epoch,
            "d_rate": d_rate,
            "rng_seed": seed,
            "network.base_channels": base_channels,
            "network.num_downsamples": num_downsamples,
            "network.disc_base_channels": disc_base_channels,
        },
    )
    out_dir = Path(out_dir)
    _echo_config(out_dir, {"training": cfg.to_dict(),
                           "patch_size": patch_size, "overlap": overlap})
    patches_a = _manifest_patches(manifest_a, patch_size, overlap)
    patches_b = _manifest_patches(manifest_b, patch_size, overlap)
    state = tr.train(patches_a, patches_b, cfg, out_dir,
                     checkpoint_every_epoch=checkpoint_every_epoch,
                     progress=not quiet)
    target = Path(out_checkpoint) if out_checkpoint else out_dir / "checkpoints" / "final.npz"
    tr.save_checkpoint(target, state, cfg)
    click.echo(f"checkpoint written to {target}")


@cli.command("translate-apply")
@click.argument("checkpoint", type=click.Path())
@click.argument("manifest", type=click.Path())
@click.option("--content-domain", type=click.Choice(["A", "B"]), default="A",
              show_default=True)
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--patch-size", default=dp.DEFAULT_PATCH_SIZE, show_default=True)
@click.option("--overlap", default=dp.DEFAULT_OVERLAP, show_default=True)
def translate_apply(checkpoint, manifest, content_domain, out_dir, patch_size, overlap):
    """Restyle every manifest image with the other domain's global style.

    Writes the fakes under ``out-dir/fakes`` plus a manifest whose label
    entries point back at the original label rasters, ready for
    fine-tuning.
    """
    state, cfg, _ = tr.load_checkpoint(checkpoint)
    items = dp.load_manifest(manifest)
    images = [dp.load_image(item.image) for item in items]
    fakes = tr.generate_fake_dataset(
        state, images, content_domain, cfg.eps, patch_size, overlap
    )
    out_dir = Path(out_dir)
    fake_dir = out_dir / "fakes"
    manifest_items = []
    for item, fake in zip(items, fakes):
        name = Path(item.image).name
        dp.save_image(fake, fake_dir / name)
        manifest_items.append(
            {
                "image": name,
                "label": str(Path(item.label).resolve()) if item.label else None,
            }
        )
    dp.write_manifest(manifest_items, fake_dir / "manifest.json")
    _echo_config(out_dir, {"checkpoint": str(checkpoint),
                           "content_domain": content_domain,
                           "patch_size": patch_size, "overlap": overlap})
    click.echo(f"{len(fakes)} fakes written to {fake_dir}")


def _seg_config(config_file, overrides: dict) -> seg.SegConfig:
    base = seg.SegConfig().to_dict()
    file_cfg = _load_config_file(config_file)
    for key, value in file_cfg.items():
        if key not in base:
            raise DataError(f"unknown config key: {key}")
        base[key] = value
    for key, value in overrides.items():
        if value is not None:
            base[key] = value
    return seg.SegConfig.from_dict(base)


_seg_shared = [
    click.option("--config", "config_file", default=None, type=click.Path()),
    click.option("--iterations", default=None, type=int),
    click.option("--batch-size", default=None, type=int),
    click.option("--lr", default=None, type=float),
    click.option("--unet-base-channels", default=None, type=int),
    click.option("--unet-depth", default=None, type=int),
    click.option("--seed", default=None, type=int),
    click.option("--patch-size", default=dp.DEFAULT_PATCH_SIZE, show_default=True),
    click.option("--overlap", default=dp.DEFAULT_OVERLAP, show_default=True),
]


def _apply_options(options):
    def deco(f):
        for option in reversed(options):
            f = option(f)
        return f
    return deco


@cli.command("segment-train")
@click.argument("manifest", type=click.Path())
@click.option("--out-dir", required=True, type=click.Path())
@_apply_options(_seg_shared)
def segment_train(manifest, out_dir, config_file, iterations, batch_size, lr,
                  unet_base_channels, unet_depth, seed, patch_size, overlap):
    """Train a segmentation U-net on real labeled patches."""
    cfg = _seg_config(config_file, {
        "initial_iterations": iterations, "batch_size": batch_size, "lr": lr,
        "base_channels": unet_base_channels, "depth": unet_depth, "seed": seed,
    })
    patches, labels = _manifest_patches(manifest, patch_size, overlap, with_labels=True)
    model, history = seg.train_unet(patches, labels, cfg)
    out_dir = Path(out_dir)
    _echo_config(out_dir, {"segmentation": cfg.to_dict(),
                           "patch_size": patch_size, "overlap": overlap})
    target = out_dir / "checkpoints" / "unet.npz"
    seg.save_unet(target, model)
    (out_dir / "logs").mkdir(parents=True, exist_ok=True)
    (out_dir / "logs" / "loss_history.json").write_text(json.dumps(history) + "\n")
    click.echo(f"model written to {target}")


@cli.command("segment-finetune")
@click.argument("model_path", type=click.Path())
@click.argument("fake_manifest", type=click.Path())
@click.option("--out-dir", required=True, type=click.Path())
@_apply_options(_seg_shared)
def segment_finetune(model_path, fake_manifest, out_dir, config_file, iterations,
                     batch_size, lr, unet_base_channels, unet_depth, seed,
                     patch_size, overlap):
    """Fine-tune a trained U-net on restyled fakes + original labels."""
    model = seg.load_unet(model_path)
    cfg = _seg_config(config_file, {
        "finetune_iterations": iterations, "batch_size": batch_size, "lr": lr,
        "seed": seed,
    })
    patches, labels = _manifest_patches(fake_manifest, patch_size, overlap,
                                        with_labels=True)
    model, history = seg.finetune_unet(model, patches, labels, cfg)
    out_dir = Path(out_dir)
    _echo_config(out_dir, {"segmentation": cfg.to_dict(),
                           "base_model": str(model_path),
                           "patch_size": patch_size, "overlap": overlap})
    target = out_dir / "checkpoints" / "unet_finetuned.npz"
    seg.save_unet(target, model)
    (out_dir / "logs").mkdir(parents=True, exist_ok=True)
    (out_dir / "logs" / "loss_history.json").write_text(json.dumps(history) + "\n")
    click.echo(f"model written to {target}")


@cli.command("segment-predict")
@click.argument("model_path", type=click.Path())
@click.argument("manifest", type=click.Path())
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--patch-size", default=dp.DEFAULT_PATCH_SIZE, show_default=True)
@click.option("--overlap", default=dp.DEFAULT_OVERLAP, show_default=True)
def segment_predict(model_path, manifest, out_dir, patch_size, overlap):
    """Predict class maps for every manifest image."""
    model = seg.load_unet(model_path)
    items = dp.load_manifest(manifest)
    out_dir = Path(out_dir)
    pred_dir = out_dir / "predictions"
    manifest_items = []
    for item in items:
        image = dp.load_image(item.image)
        pred = seg.predict_map(model, image, patch_size, overlap)
        name = "pred_" + Path(item.image).stem + ".png"
        dp.save_labels(pred, pred_dir / name)
        manifest_items.append({"image": str(Path(item.image).resolve()),
                               "label": name})
    dp.write_manifest(manifest_items, pred_dir / "manifest.json")
    _echo_config(out_dir, {"model": str(model_path),
                           "patch_size": patch_size, "overlap": overlap})
    click.echo(f"{len(items)} prediction maps written to {pred_dir}")


@cli.command("evaluate")
@click.argument("pred_manifest", type=click.Path())
@click.argument("gt_manifest", type=click.Path())
@click.option("--report", default=None, type=click.Path())
def evaluate(pred_manifest, gt_manifest, report):
    """Per-class + overall IoU of predictions against ground truth."""
    preds = dp.load_manifest(pred_manifest)
    gts = dp.load_manifest(gt_manifest)
    if len(preds) != len(gts):
        raise DataError(
            f"{len(preds)} predictions but {len(gts)} ground-truth items"
        )
    matrix = seg.ConfusionMatrix()
    for p, g in zip(preds, gts):
        if p.label is None or g.label is None:
            raise DataError("both manifests must provide label rasters")
        matrix.update(dp.load_labels(p.label), dp.load_labels(g.label))
    per_class = matrix.per_class_iou()
    overall = seg.overall_iou(per_class)
    result = {
        "per_class": {
            name: (None if np.isnan(v) else float(v))
            for name, v in zip(dp.CLASS_NAMES, per_class)
        },
        "overall": overall,
    }
    for name in ("building", "road", "tree"):
        v = result["per_class"][name]
        click.echo(f"{name:>10}: " + ("  n/a" if v is None else f"{100 * v:6.2f}"))
    click.echo(f"{'Overall':>10}: {100 * overall:6.2f}")
    if report:
        seg.write_report(result, report)
    return result


@cli.command("baseline-apply")
@click.argument("manifest", type=click.Path())
@click.option("--method", type=click.Choice(["gray-world", "histogram-matching"]),
              required=True)
@click.option("--reference", default=None, type=click.Path(),
              help="Reference-domain manifest (histogram matching only).")
@click.option("--out-dir", required=True, type=click.Path())
def baseline_apply(manifest, method, reference, out_dir):
    """Apply a classical color-transfer baseline to every manifest image."""
    items = dp.load_manifest(manifest)
    ref_image = None
    if method == "histogram-matching":
        if reference is None:
            raise DataError("histogram matching needs --reference")
        ref_items = dp.load_manifest(reference)
        ref_image = np.concatenate(
            [dp.load_image(it.image).reshape(-1, 3) for it in ref_items]
        ).reshape(1, -1, 3)
    out_dir = Path(out_dir)
    fake_dir = out_dir / "fakes"
    manifest_items = []
    for item in items:
        image = dp.load_image(item.image)
        if method == "gray-world":
            fake = baselines_mod.gray_world(image)
        else:
            fake = baselines_mod.histogram_match(image, ref_image)
        name = Path(item.image).name
        dp.save_image(fake, fake_dir / name)
        manifest_items.append(
            {"image": name,
             "label": str(Path(item.label).resolve()) if item.label else None}
        )
    dp.write_manifest(manifest_items, fake_dir / "manifest.json")
    _echo_config(out_dir, {"method": method, "reference": reference})
    click.echo(f"{len(items)} images written to {fake_dir}")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.Abort:
        return 1
    except (DataError, InvalidInputError, InvalidConfigError) as exc:
        click.echo(f"data error: {exc}", err=True)
        return 2
    except NumericalError as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        return 3


if __name__ == "__main__":
    sys.exit(main())
