"""Luminance-guided chrominance regeneration.

The colour net sees the low-light Y/Cb/Cr planes plus a guide luminance and
predicts the chrominance that fits the guide's exposure. Training guides
with the reference luminance; inference guides with the fused luminance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import torch

from .errors import DataError, NumericError, ShapeError
from .imagecore import YCbCr, check_same_shape, rgb_to_ycbcr
from .nnkit import UNet, forward


class ChromaPair(NamedTuple):
    cb: torch.Tensor
    cr: torch.Tensor


@dataclass
class ExposureSequence:
    scene_id: str
    frames: list[np.ndarray]

    def __post_init__(self):
        if len(self.frames) < 2:
            raise DataError(f"scene {self.scene_id!r} has {len(self.frames)} exposure(s); need at least 2")
        shapes = {f.shape for f in self.frames}
        if len(shapes) != 1:
            raise ShapeError(f"scene {self.scene_id!r} mixes frame sizes {sorted(shapes)}")


class MEPair(NamedTuple):
    source: YCbCr
    guide: np.ndarray
    target: YCbCr
    indices: tuple[int, int]


def adapt_color(net: UNet, y_low, cb_low, cr_low, y_guide) -> ChromaPair:
    """Predict Cb/Cr for the guide's exposure from ``(N, 1, H, W)`` planes."""
    check_same_shape(y_low, cb_low, cr_low, y_guide, what="colour-adaptation inputs")
    out = forward(net, torch.cat([y_low, cb_low, cr_low, y_guide], dim=1))
    return ChromaPair(out[:, 0:1], out[:, 1:2])


def can_loss(pred: ChromaPair, ref: ChromaPair) -> torch.Tensor:
    """Sum of the Cb and Cr mean squared errors."""
    check_same_shape(pred.cb, pred.cr, ref.cb, ref.cr, what="chroma planes")
    loss = ((pred.cb - ref.cb) ** 2).mean() + ((pred.cr - ref.cr) ** 2).mean()
    if not torch.isfinite(loss):
        raise NumericError("can.mse")
    return loss


def sample_me_pair(seq: ExposureSequence, rng: np.random.Generator) -> MEPair:
    """Draw two distinct exposures ``(e1, e2)``; either order is equally likely."""
    if len(seq.frames) < 2:
        raise DataError(f"scene {seq.scene_id!r} needs at least 2 exposures")
    e1, e2 = (int(i) for i in rng.choice(len(seq.frames), size=2, replace=False))
    src = rgb_to_ycbcr(seq.frames[e1])
    tgt = rgb_to_ycbcr(seq.frames[e2])
    return MEPair(source=src, guide=tgt.y, target=tgt, indices=(e1, e2))
