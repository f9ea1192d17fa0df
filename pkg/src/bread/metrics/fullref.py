"""Full-reference fidelity metrics and gamma alignment."""

from __future__ import annotations

import math

import numpy as np
from scipy.ndimage import correlate1d

from ..errors import ShapeError, SizeError

PSNR_CAP = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1, SSIM_K2 = 0.01, 0.03
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"images differ in shape: {a.shape} vs {b.shape}")
    return a, b


def mse(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean((a - b) ** 2))


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB for data range 1, capped at 99 dB."""
    err = mse(a, b)
    if err == 0.0:
        return PSNR_CAP
    return min(10.0 * math.log10(1.0 / err), PSNR_CAP)


def _gaussian_taps(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x**2) / (2 * sigma**2))
    return g / g.sum()


def ssim_plane(a: np.ndarray, b: np.ndarray, data_range: float = 1.0) -> float:
    """Mean SSIM over the valid (fully covered) window positions of two planes."""
    a, b = _pair(a, b)
    if min(a.shape) < SSIM_WINDOW:
        raise SizeError(f"SSIM needs both sides >= {SSIM_WINDOW}, got {a.shape}")
    taps = _gaussian_taps()
    half = SSIM_WINDOW // 2

    def blur(x):
        x = correlate1d(correlate1d(x, taps, axis=0, mode="reflect"), taps, axis=1, mode="reflect")
        return x[half:-half, half:-half]

    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mu_a, mu_b = blur(a), blur(b)
    var_a = blur(a * a) - mu_a**2
    var_b = blur(b * b) - mu_b**2
    cov = blur(a * b) - mu_a * mu_b
    smap = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2))
    return float(smap.mean())


def ssim(a, b) -> float:
    """SSIM of two ``(3, H, W)`` images, averaged over the RGB channels."""
    a, b = _pair(a, b)
    if a.ndim == 2:
        return ssim_plane(a, b)
    return float(np.mean([ssim_plane(a[c], b[c]) for c in range(a.shape[0])]))


def gamma_align(y_out, y_ref, lo: float = 0.1, hi: float = 10.0, tol: float = 1e-4) -> tuple[float, np.ndarray]:
    """Exponent ``g`` in ``[lo, hi]`` minimising ``MSE(y_out**g, y_ref)``.

    Golden-section search to ``tol``; falls back to ``g = 1`` if the search
    lands somewhere worse than leaving the image alone.
    """
    y_out, y_ref = _pair(y_out, y_ref)
    y_out = np.clip(y_out, 0.0, 1.0)

    def cost(g):
        return float(np.mean((y_out**g - y_ref) ** 2))

    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = cost(c), cost(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = cost(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = cost(d)
    gamma = (a + b) / 2
    if cost(gamma) > cost(1.0):
        gamma = 1.0
    return gamma, y_out**gamma
