"""Illumination-guided noise synthesis, the noise-suppression net and fusion.

Noise level maps hold per-pixel *standard deviations* in image units. The
suppression net predicts the noise residual, which is subtracted from its
input; the fusion net merges the candidates denoised at each ladder
strength.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .errors import ArityError, DomainError, NumericError
from .imagecore import check_same_shape
from .nnkit import UNet, forward, ssim

EPS = 1e-4
FIXED_SIGMA = 25.0 / 255.0
POISSON_PEAK = 255.0


@dataclass(frozen=True)
class StrengthLadder:
    scales: tuple[float, ...] = (0.0, 0.05, 0.1)

    def __post_init__(self):
        s = tuple(float(v) for v in self.scales)
        if len(s) != 3:
            raise ArityError(f"a strength ladder has exactly 3 entries, got {len(s)}")
        if s[0] < 0 or any(b <= a for a, b in zip(s, s[1:])):
            raise DomainError(f"ladder scales must be nonnegative and strictly increasing: {s}")
        object.__setattr__(self, "scales", s)

    def maps(self, noise_map):
        return [scale * noise_map for scale in self.scales]


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def noise_level_map(l_hat):
    """``exp(-l_hat)``: darker regions get larger noise levels."""
    if isinstance(l_hat, torch.Tensor):
        return torch.exp(-l_hat)
    return np.exp(-np.asarray(l_hat))


def gaussian_noise(sigma_map: np.ndarray, seed) -> np.ndarray:
    """Zero-mean Gaussian noise with per-pixel standard deviation ``sigma_map``."""
    sigma_map = np.asarray(sigma_map)
    if (sigma_map < 0).any():
        raise DomainError("noise standard deviation must be nonnegative")
    return _rng(seed).standard_normal(sigma_map.shape) * sigma_map


def synthesize_noisy(y_high: np.ndarray, sigma_map: np.ndarray, seed) -> np.ndarray:
    check_same_shape(y_high, sigma_map, what="luminance and noise map")
    return y_high + gaussian_noise(sigma_map, seed)


def synthesize_fixed_gaussian(y_high: np.ndarray, sigma: float = FIXED_SIGMA, seed=None) -> np.ndarray:
    if sigma < 0:
        raise DomainError(f"sigma must be nonnegative, got {sigma}")
    return synthesize_noisy(y_high, np.full_like(y_high, sigma), seed)


def synthesize_poisson(
    y_high: np.ndarray,
    l_hat: np.ndarray,
    peak: float = POISSON_PEAK,
    seed=None,
    eps: float = EPS,
) -> np.ndarray:
    """Darken by ``l_hat``, draw photon counts at ``peak``, then re-brighten."""
    if peak <= 0:
        raise DomainError(f"Poisson peak must be positive, got {peak}")
    check_same_shape(y_high, l_hat, what="luminance and illumination")
    dark = np.clip(y_high * l_hat, 0.0, None)
    counts = _rng(seed).poisson(dark * peak)
    return (counts / peak) / (l_hat + eps)


def ansn_predict(net: UNet, y_noisy: torch.Tensor, sigma_map: torch.Tensor) -> torch.Tensor:
    """Noise residual predicted from ``(N, 1, H, W)`` luminance and level map."""
    check_same_shape(y_noisy, sigma_map, what="luminance and noise map")
    return forward(net, torch.cat([y_noisy, sigma_map], dim=1))


def denoise(net: UNet, y_ia: torch.Tensor, sigma_map: torch.Tensor) -> torch.Tensor:
    return y_ia - ansn_predict(net, y_ia, sigma_map)


def ansn_loss(pred_noise: torch.Tensor, true_noise: torch.Tensor) -> torch.Tensor:
    check_same_shape(pred_noise, true_noise, what="predicted and true noise")
    loss = ((pred_noise - true_noise) ** 2).mean()
    if not torch.isfinite(loss):
        raise NumericError("ansn.mse")
    return loss


def fuse(net: UNet, candidates: list[torch.Tensor], ladders: list[torch.Tensor]) -> torch.Tensor:
    """Fuse k denoised candidates with their level maps.

    Channel order is ``[cand_1 .. cand_k, map_1 .. map_k]``.
    """
    k = net.spec.in_channels // 2
    if len(candidates) != k or len(ladders) != k:
        raise ArityError(f"fusion expects {k} candidates and {k} maps, got {len(candidates)} and {len(ladders)}")
    check_same_shape(*candidates, *ladders, what="fusion inputs")
    return forward(net, torch.cat([*candidates, *ladders], dim=1))


def nfm_loss_terms(y_nf: torch.Tensor, y_high: torch.Tensor) -> dict:
    check_same_shape(y_nf, y_high, what="fused and reference luminance")
    return {"mse": ((y_nf - y_high) ** 2).mean(), "dssim": 1.0 - ssim(y_nf, y_high)}


def nfm_loss(y_nf: torch.Tensor, y_high: torch.Tensor) -> torch.Tensor:
    """MSE plus SSIM dissimilarity ``1 - SSIM``."""
    terms = nfm_loss_terms(y_nf, y_high)
    for name, value in terms.items():
        if not torch.isfinite(value):
            raise NumericError(f"nfm.{name}")
    return terms["mse"] + terms["dssim"]
