"""Lightness-order error.

Lightness is the per-pixel max over RGB. Both maps are nearest-sampled down
to at most 50x50, then every ordered pixel pair (self-pairs included) is
checked for whether ``L(x) >= L(y)`` holds in one image but not the other.
The score is the mismatching fraction times 1000.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError

LOE_SIDE = 50
LOE_SCALE = 1000.0


def _nearest_indices(n: int, m: int) -> np.ndarray:
    return np.minimum(((np.arange(m) + 0.5) * n / m).astype(int), n - 1)


def lightness_map(img: np.ndarray, side: int = LOE_SIDE) -> np.ndarray:
    light = np.asarray(img, dtype=np.float64).max(axis=0)
    h, w = light.shape
    rows = _nearest_indices(h, min(h, side))
    cols = _nearest_indices(w, min(w, side))
    return light[np.ix_(rows, cols)]


def loe(inp: np.ndarray, out: np.ndarray) -> float:
    if np.shape(inp) != np.shape(out):
        raise ShapeError(f"images differ in shape: {np.shape(inp)} vs {np.shape(out)}")
    li = lightness_map(inp).ravel()
    lo = lightness_map(out).ravel()
    order_in = li[:, None] >= li[None, :]
    order_out = lo[:, None] >= lo[None, :]
    return float(np.mean(order_in != order_out) * LOE_SCALE)
