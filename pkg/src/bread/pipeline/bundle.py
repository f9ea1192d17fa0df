"""Trained-stage bundles and the end-to-end enhancement graph."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
import torch

from ..can import ChromaPair, adapt_color
from ..errors import BundleError, DependencyError, ShapeError
from ..ian import EPS, adjust_luminance, estimate_illumination
from ..imagecore import YCbCr, clamp01, crop_to, pad_to_multiple, rgb_to_ycbcr, ycbcr_to_rgb
from ..nnkit import STAGE_SPECS, UNet, load_checkpoint
from ..noise import FIXED_SIGMA, StrengthLadder, denoise, fuse, noise_level_map

# Checkpoint files for the retrained denoisers used by some ablations.
VARIANT_FILES = {"fgn": "ansn_fgn.ckpt", "pn": "ansn_pn.ckpt", "no_sep": "ansn_no_sep.ckpt"}
NEEDS = {
    "none": ("ian", "ansn", "nfm"),
    "no_dn": ("ian",),
    "no_nfm": ("ian", "ansn"),
    "no_sep": ("ian",),
    "fgn": ("ian",),
    "pn": ("ian",),
}


def checkpoint_path(workdir: str | Path, stage: str, variant: str = "none") -> Path:
    if stage == "ansn" and variant in VARIANT_FILES:
        return Path(workdir) / VARIANT_FILES[variant]
    return Path(workdir) / f"{stage}.ckpt"


def _load(workdir: Path, stage: str, variant: str = "none") -> UNet:
    path = checkpoint_path(workdir, stage, variant)
    if not path.is_file():
        raise DependencyError("enhance", stage if variant == "none" else f"{stage} (variant {variant})")
    ckpt = load_checkpoint(path)
    if ckpt.stage != stage:
        raise BundleError(f"{path.name} holds stage {ckpt.stage!r}, expected {stage!r}")
    if ckpt.spec != STAGE_SPECS[stage]:
        raise BundleError(f"{path.name} has spec {ckpt.spec}, expected {STAGE_SPECS[stage]}")
    return ckpt.to_network()


@dataclass
class BreadBundle:
    ian: UNet
    can: UNet
    ansn: UNet | None = None
    nfm: UNet | None = None
    color_stage: str = "can"
    eps: float = EPS
    ladder: StrengthLadder = field(default_factory=StrengthLadder)
    extras: dict[str, UNet] = field(default_factory=dict)

    def __post_init__(self):
        expected = {"ian": self.ian, "ansn": self.ansn, "nfm": self.nfm, self.color_stage: self.can}
        if self.color_stage not in ("can", "can_me"):
            raise BundleError(f"colour stage must be 'can' or 'can_me', got {self.color_stage!r}")
        for stage, net in expected.items():
            if net is not None and net.spec != STAGE_SPECS[stage]:
                raise BundleError(f"{stage} network has spec {net.spec}, expected {STAGE_SPECS[stage]}")
        for variant, net in self.extras.items():
            if net.spec != STAGE_SPECS["ansn"]:
                raise BundleError(f"{variant} denoiser must use the ansn spec")
        if len(self.ladder.scales) != 3:
            raise BundleError("strength ladder must have 3 entries")

    def require(self, variant: str) -> None:
        for stage in NEEDS[variant]:
            if getattr(self, stage) is None:
                raise DependencyError(f"enhance/{variant}", stage)
        if variant in VARIANT_FILES and variant not in self.extras:
            raise DependencyError(f"enhance/{variant}", f"ansn (variant {variant})")


def load_bundle(workdir: str | Path, me: bool = False, variants: tuple[str, ...] = ("none",)) -> BreadBundle:
    """Load the checkpoints needed to run every variant in ``variants``."""
    workdir = Path(workdir)
    color = "can_me" if me else "can"
    needed = {s for v in variants for s in NEEDS[v]}
    nets = {stage: _load(workdir, stage) for stage in ("ian", "ansn", "nfm") if stage in needed}
    extras = {v: _load(workdir, "ansn", v) for v in variants if v in VARIANT_FILES}
    return BreadBundle(
        ian=nets["ian"],
        can=_load(workdir, color),
        ansn=nets.get("ansn"),
        nfm=nets.get("nfm"),
        color_stage=color,
        extras=extras,
    )


class Trace(NamedTuple):
    y_low: torch.Tensor
    l_hat: torch.Tensor
    y_ia: torch.Tensor
    noise_map: torch.Tensor
    candidates: list[torch.Tensor]
    y_nf: torch.Tensor
    chroma: ChromaPair


def fused_luminance(bundle: BreadBundle, y_ia, noise_map, variant: str = "none"):
    """Denoised luminance for ``variant``; returns ``(y_nf, candidates)``."""
    if variant == "no_dn":
        return clamp01(y_ia), []
    if variant == "no_nfm":
        cand = denoise(bundle.ansn, y_ia, bundle.ladder.scales[1] * noise_map)
        return clamp01(cand), [cand]
    if variant == "fgn":
        cand = denoise(bundle.extras["fgn"], y_ia, torch.full_like(y_ia, FIXED_SIGMA))
        return clamp01(cand), [cand]
    if variant in ("pn", "no_sep"):
        cand = denoise(bundle.extras[variant], y_ia, noise_map)
        return clamp01(cand), [cand]
    maps = bundle.ladder.maps(noise_map)
    candidates = [denoise(bundle.ansn, y_ia, m) for m in maps]
    return fuse(bundle.nfm, candidates, maps), candidates


def run_graph(bundle: BreadBundle, ycc: YCbCr, variant: str = "none") -> Trace:
    """Run all stages on ``(N, 1, H, W)`` planes whose sides are multiples of 8."""
    bundle.require(variant)
    with torch.no_grad():
        l_hat = estimate_illumination(bundle.ian, ycc.y)
        y_ia = adjust_luminance(ycc.y, l_hat, bundle.eps)
        noise_map = noise_level_map(l_hat)
        y_nf, candidates = fused_luminance(bundle, y_ia, noise_map, variant)
        chroma = adapt_color(bundle.can, ycc.y, ycc.cb, ycc.cr, y_nf)
    return Trace(ycc.y, l_hat, y_ia, noise_map, candidates, y_nf, chroma)


def enhance(bundle: BreadBundle, img: np.ndarray, variant: str = "none", trace: bool = False):
    """Enhance a ``(3, H, W)`` RGB image in ``[0, 1]``.

    The image is reflect-padded to a multiple of 8 and cropped back. With
    ``trace=True`` the intermediate planes are returned as well.
    """
    img = np.asarray(img, dtype=np.float32)
    if img.ndim != 3 or img.shape[0] != 3:
        raise ShapeError(f"expected a (3, H, W) image, got {img.shape}")
    bundle.require(variant)
    padded, size = pad_to_multiple(img, 8)
    ycc = rgb_to_ycbcr(torch.from_numpy(np.ascontiguousarray(padded))[None])
    ycc = YCbCr(*(p[:, None] for p in ycc))
    tr = run_graph(bundle, ycc, variant)
    rgb = ycbcr_to_rgb(YCbCr(tr.y_nf[:, 0], tr.chroma.cb[:, 0], tr.chroma.cr[:, 0]))
    out = crop_to(rgb[0].numpy(), size)
    out = np.ascontiguousarray(clamp01(out))
    return (out, tr) if trace else out
