"""Illumination adjustment: estimate the relative illumination map and brighten Y.

``l_hat`` is the per-pixel ratio between low-light and normal-light
illumination, so dividing the low-light luminance by it brightens it.
"""

from __future__ import annotations

import torch

from .errors import NumericError
from .imagecore import check_same_shape, spatial_gradients
from .nnkit import UNet, forward

EPS = 1e-4
SMOOTH_WEIGHT = 4.0  # weight of the edge-aware smoothness term
GRAD_WEIGHT = 0.5  # weight of the gradient-consistency term


def estimate_illumination(net: UNet, y_low: torch.Tensor) -> torch.Tensor:
    """Predict ``l_hat`` in (0, 1) for an ``(N, 1, H, W)`` luminance batch."""
    return forward(net, y_low)


def adjust_luminance(y_low, l_hat, eps: float = EPS):
    """``y_low / (l_hat + eps)``, left unclamped."""
    check_same_shape(y_low, l_hat, what="luminance and illumination")
    return y_low / (l_hat + eps)


def ian_loss_terms(y_low: torch.Tensor, y_high: torch.Tensor, l_hat: torch.Tensor, eps: float = EPS) -> dict:
    """The three loss terms, keyed ``fidelity``, ``smoothness``, ``consistency``.

    Every reduction is a mean; the two directional maps are averaged so the
    weights do not depend on patch size.
    """
    check_same_shape(y_low, y_high, l_hat, what="IAN loss inputs")
    fidelity = ((y_low / (l_hat + eps) - y_high) ** 2).mean()
    lx, ly = spatial_gradients(l_hat)
    yx, yy = spatial_gradients(y_low)
    wx = 1.0 / (yx.abs() + eps)
    wy = 1.0 / (yy.abs() + eps)
    smoothness = 0.5 * ((wx * lx).abs().mean() + (wy * ly).abs().mean())
    consistency = 0.5 * ((lx - yx).abs().mean() + (ly - yy).abs().mean())
    return {
        "fidelity": fidelity,
        "smoothness": SMOOTH_WEIGHT * smoothness,
        "consistency": GRAD_WEIGHT * consistency,
    }


def ian_loss(y_low: torch.Tensor, y_high: torch.Tensor, l_hat: torch.Tensor, eps: float = EPS) -> torch.Tensor:
    terms = ian_loss_terms(y_low, y_high, l_hat, eps)
    for name, value in terms.items():
        if not torch.isfinite(value):
            raise NumericError(f"ian.{name}")
    return terms["fidelity"] + terms["smoothness"] + terms["consistency"]
