"""Evaluation over paired manifests and the ablation runner."""

from __future__ import annotations

import functools
import logging
from pathlib import Path
from typing import Callable

import numpy as np

from ..dataprep import read_manifest
from ..errors import ConfigError, DataError
from ..imagecore import YCbCr, read_png, rgb_to_ycbcr, ycbcr_to_rgb
from ..metrics import MetricReport, NiqeModel, delta_e, gamma_align, loe, niqe, psnr, ssim
from .bundle import BreadBundle, enhance, load_bundle
from .config import VARIANTS, RunConfig
from .train import train_stage

log = logging.getLogger(__name__)

Enhancer = Callable[[np.ndarray], np.ndarray]


def score_pair(low, out, high, niqe_model: NiqeModel | None = None, gamma: bool = True) -> dict[str, float]:
    scores = {
        "psnr": psnr(out, high),
        "ssim": ssim(out, high),
        "delta_e": delta_e(out, high),
        "loe": loe(low, out),
    }
    if niqe_model is not None:
        scores["niqe"] = niqe(out, niqe_model)
    if gamma:
        ycc = rgb_to_ycbcr(np.asarray(out, dtype=np.float64))
        ref_y = rgb_to_ycbcr(np.asarray(high, dtype=np.float64)).y
        g, aligned = gamma_align(ycc.y, ref_y)
        out_c = ycbcr_to_rgb(YCbCr(aligned, ycc.cb, ycc.cr))
        scores.update(
            gamma=g,
            psnr_c=psnr(out_c, high),
            ssim_c=ssim(out_c, high),
            delta_e_c=delta_e(out_c, high),
        )
        if niqe_model is not None:
            scores["niqe_c"] = niqe(out_c, niqe_model)
    return scores


def evaluate(
    bundle: BreadBundle | Enhancer,
    manifest,
    out_dir: str | Path | None = None,
    niqe_model: NiqeModel | str | Path | None = None,
    variant: str = "none",
    gamma: bool = True,
    save_images: bool = False,
) -> MetricReport:
    """Enhance every low image of ``manifest`` and score it against its reference.

    ``bundle`` may also be any callable mapping an RGB image to an RGB image.
    Unreadable pairs are recorded in ``report.errors`` and skipped.
    """
    enhancer = functools.partial(enhance, bundle, variant=variant) if isinstance(bundle, BreadBundle) else bundle
    if niqe_model is not None and not isinstance(niqe_model, NiqeModel):
        niqe_model = NiqeModel.load(niqe_model)
    manifest = read_manifest(manifest, split="eval") if not hasattr(manifest, "entries") else manifest
    report = MetricReport(variants={"plain": True, "gamma_aligned": gamma})
    if save_images and out_dir is not None:
        (Path(out_dir) / "images").mkdir(parents=True, exist_ok=True)
    for entry in sorted(manifest.entries, key=lambda e: (e[0].name, str(e[0]))):
        image_id = entry[0].stem
        try:
            if len(entry) != 2:
                raise DataError(f"expected low<TAB>high, got {len(entry)} field(s)")
            low, high = read_png(entry[0]), read_png(entry[1])
            if low.shape != high.shape:
                raise DataError(f"low {low.shape} and high {high.shape} differ")
        except (DataError, OSError) as exc:
            report.errors[image_id] = str(exc)
            log.warning("skipping %s: %s", image_id, exc)
            continue
        out = enhancer(low)
        report.add(image_id, score_pair(low, out, high, niqe_model, gamma))
        if save_images and out_dir is not None:
            from ..imagecore import write_png

            write_png(Path(out_dir) / "images" / f"{image_id}.png", out)
    if out_dir is not None:
        report.write(out_dir)
    return report


def run_ablation(variant: str, config: RunConfig) -> MetricReport:
    """Evaluate one ablation variant, retraining its denoiser when it needs one."""
    if variant not in VARIANTS:
        raise ConfigError(f"unknown ablation variant {variant!r}; choose from {', '.join(VARIANTS)}")
    if variant in ("fgn", "pn", "no_sep"):
        train_stage("ansn", config.with_(variant=variant))
    manifest = config.eval_manifest or config.train_manifest
    if manifest is None:
        raise ConfigError("ablation needs eval_manifest or train_manifest")
    bundle = load_bundle(config.workdir, variants=(variant,))
    out_dir = Path(config.workdir) / f"ablation_{variant}"
    return evaluate(bundle, manifest, out_dir=out_dir, niqe_model=config.niqe_model, variant=variant)
