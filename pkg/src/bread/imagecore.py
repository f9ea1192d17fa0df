"""Image containers, YCbCr conversion and spatial differences.

Layout conventions used throughout the package:

* an image plane is a 2-D float array ``(H, W)``, row-major;
* an RGB image is a float array ``(3, H, W)`` with values in ``[0, 1]``;
* a YCbCr image is a :class:`YCbCr` tuple of three planes, chroma centred
  on 0.5.

The colour functions are written against plain arithmetic and slicing, so
they accept numpy arrays or torch tensors (with any leading batch
dimensions) and return the same kind of object. Losses rely on that to stay
differentiable.

The colour matrix is full-range BT.601 on normalised values::

    Y  = 0.299 R + 0.587 G + 0.114 B
    Cb = 0.564 (B - Y) + 0.5
    Cr = 0.713 (R - Y) + 0.5
"""

from __future__ import annotations

from pathlib import Path
from typing import NamedTuple

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

from .errors import ShapeError, SizeError

KR, KG, KB = 0.299, 0.587, 0.114
CB_SCALE = 0.564
CR_SCALE = 0.713


class YCbCr(NamedTuple):
    y: np.ndarray
    cb: np.ndarray
    cr: np.ndarray


def _is_torch(x) -> bool:
    return isinstance(x, torch.Tensor)


def clamp01(p):
    """Elementwise ``min(max(v, 0), 1)``."""
    if _is_torch(p):
        return p.clamp(0.0, 1.0)
    return np.clip(p, 0.0, 1.0)


def _stack(planes, axis):
    if _is_torch(planes[0]):
        return torch.stack(planes, dim=axis)
    return np.stack(planes, axis=axis)


def rgb_to_ycbcr(img) -> YCbCr:
    """Split an RGB image ``(..., 3, H, W)`` into clamped Y, Cb, Cr planes."""
    if img.ndim < 3 or img.shape[-3] != 3:
        raise ShapeError(f"expected an image with 3 colour planes on axis -3, got shape {tuple(img.shape)}")
    r, g, b = img[..., 0, :, :], img[..., 1, :, :], img[..., 2, :, :]
    y = KR * r + KG * g + KB * b
    cb = CB_SCALE * (b - y) + 0.5
    cr = CR_SCALE * (r - y) + 0.5
    return YCbCr(clamp01(y), clamp01(cb), clamp01(cr))


def ycbcr_to_rgb(img: YCbCr):
    """Inverse of :func:`rgb_to_ycbcr`; returns a clamped ``(..., 3, H, W)`` image."""
    y, cb, cr = img
    if not (y.shape == cb.shape == cr.shape):
        raise ShapeError(f"Y/Cb/Cr shapes differ: {tuple(y.shape)}, {tuple(cb.shape)}, {tuple(cr.shape)}")
    r = y + (cr - 0.5) / CR_SCALE
    b = y + (cb - 0.5) / CB_SCALE
    g = (y - KR * r - KB * b) / KG
    return clamp01(_stack([r, g, b], axis=-3))


def spatial_gradients(p):
    """Forward differences along columns (dx) and rows (dy).

    The trailing column of ``dx`` and the trailing row of ``dy`` are zero.
    Works on the last two axes, so batches of planes are fine.
    """
    if _is_torch(p):
        dx = F.pad(p[..., :, 1:] - p[..., :, :-1], (0, 1))
        dy = F.pad(p[..., 1:, :] - p[..., :-1, :], (0, 0, 0, 1))
        return dx, dy
    pad_x = [(0, 0)] * (p.ndim - 1) + [(0, 1)]
    pad_y = [(0, 0)] * (p.ndim - 2) + [(0, 1), (0, 0)]
    dx = np.pad(p[..., :, 1:] - p[..., :, :-1], pad_x)
    dy = np.pad(p[..., 1:, :] - p[..., :-1, :], pad_y)
    return dx, dy


def check_same_shape(*arrays, what: str = "inputs") -> None:
    shapes = {tuple(a.shape) for a in arrays}
    if len(shapes) != 1:
        raise ShapeError(f"{what} must share a shape, got {sorted(shapes)}")


def pad_to_multiple(img: np.ndarray, multiple: int = 8) -> tuple[np.ndarray, tuple[int, int]]:
    """Reflect-pad the last two axes up to a multiple of ``multiple``.

    Returns the padded array and the original ``(H, W)`` for cropping back.
    """
    h, w = img.shape[-2:]
    ph, pw = -h % multiple, -w % multiple
    if ph >= h or pw >= w:
        raise SizeError(f"image {h}x{w} too small to reflect-pad to a multiple of {multiple}")
    widths = [(0, 0)] * (img.ndim - 2) + [(0, ph), (0, pw)]
    return np.pad(img, widths, mode="reflect"), (h, w)


def crop_to(img, size: tuple[int, int]):
    h, w = size
    return img[..., :h, :w]


def read_png(path: str | Path) -> np.ndarray:
    """Load an 8-bit image as a float32 ``(3, H, W)`` array in ``[0, 1]``."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32)
    return np.ascontiguousarray(arr.transpose(2, 0, 1)) / 255.0


def write_png(path: str | Path, img: np.ndarray) -> None:
    """Save a ``(3, H, W)`` image in ``[0, 1]`` as 8-bit RGB PNG."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ShapeError(f"expected (3, H, W), got {arr.shape}")
    u8 = np.rint(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(u8.transpose(1, 2, 0)).save(path)
