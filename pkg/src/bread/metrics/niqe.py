"""Naturalness Image Quality Evaluator (NIQE).

Features: luminance is scaled to [0, 255] and turned into mean-subtracted
contrast-normalised (MSCN) coefficients with a 7x7 Gaussian window. Each
non-overlapping patch yields 18 AGGD statistics: shape and mean scale of
the MSCN coefficients, then shape, mean, left and right scale of the four
neighbour products (horizontal, vertical, two diagonals). The same is done
on a half-resolution copy with half-size patches, giving 36 features.

Fitting keeps only the sharp patches, those whose mean local deviation
exceeds ``threshold`` times the sharpest patch. Scoring uses every patch of
the test image, like the original method.

Model file layout (little-endian)::

    b"NIQEMODL" | u32 version | u32 dim | u32 patch | f64 threshold
    | f64[dim] mean | f64[dim*dim] covariance (row-major)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import correlate1d
from scipy.special import gamma as gamma_fn

from ..errors import FormatError, ModelError, ShapeError, SizeError
from ..imagecore import rgb_to_ycbcr

FEATURES = 36
DEFAULT_PATCH = 96
SHARPNESS_THRESHOLD = 0.75
MAGIC = b"NIQEMODL"
VERSION = 1
DEFAULT_MODEL_PATH = Path(__file__).resolve().parent.parent / "data" / "pristine.niqe"

_ALPHAS = np.arange(0.2, 10.0 + 1e-9, 0.001)
_R_ALPHA = gamma_fn(2.0 / _ALPHAS) ** 2 / (gamma_fn(1.0 / _ALPHAS) * gamma_fn(3.0 / _ALPHAS))


@dataclass
class NiqeModel:
    mean: np.ndarray
    cov: np.ndarray
    patch: int = DEFAULT_PATCH
    threshold: float = SHARPNESS_THRESHOLD

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.cov = np.asarray(self.cov, dtype=np.float64)
        d = self.mean.shape[0]
        if self.mean.shape != (d,) or self.cov.shape != (d, d):
            raise ModelError(f"mean {self.mean.shape} and covariance {self.cov.shape} do not match")

    def check(self) -> None:
        if not np.allclose(self.cov, self.cov.T, atol=1e-12, rtol=1e-9):
            raise ModelError("NIQE covariance is not symmetric")
        eig = np.linalg.eigvalsh(self.cov)
        if eig.min() < -1e-10 * max(1.0, abs(eig.max())):
            raise ModelError(f"NIQE covariance is not positive semi-definite (min eigenvalue {eig.min():.3g})")

    def save(self, path: str | Path) -> None:
        d = self.mean.shape[0]
        blob = (
            MAGIC
            + struct.pack("<III", VERSION, d, self.patch)
            + struct.pack("<d", self.threshold)
            + self.mean.astype("<f8").tobytes()
            + self.cov.astype("<f8").tobytes()
        )
        Path(path).write_bytes(blob)

    @classmethod
    def load(cls, path: str | Path) -> "NiqeModel":
        blob = Path(path).read_bytes()
        head = len(MAGIC) + 12 + 8
        if blob[: len(MAGIC)] != MAGIC:
            raise FormatError(f"{path}: expected magic {MAGIC!r}")
        if len(blob) < head:
            raise FormatError(f"{path}: truncated NIQE model header")
        version, d, patch = struct.unpack_from("<III", blob, len(MAGIC))
        if version != VERSION:
            raise FormatError(f"{path}: unsupported NIQE model version {version}")
        (threshold,) = struct.unpack_from("<d", blob, len(MAGIC) + 12)
        if len(blob) != head + 8 * (d + d * d):
            raise FormatError(f"{path}: NIQE model body has the wrong length")
        mean = np.frombuffer(blob, "<f8", d, head)
        cov = np.frombuffer(blob, "<f8", d * d, head + 8 * d).reshape(d, d)
        return cls(mean.copy(), cov.copy(), patch, threshold)


def _gauss_taps(radius: int = 3, sigma: float = 7.0 / 6.0) -> np.ndarray:
    x = np.arange(-radius, radius + 1)
    g = np.exp(-0.5 * x**2 / sigma**2)
    return g / g.sum()


def mscn(gray: np.ndarray, c: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """MSCN coefficients and the local deviation map of a [0, 255] plane."""
    taps = _gauss_taps()

    def blur(x):
        return correlate1d(correlate1d(x, taps, axis=0, mode="nearest"), taps, axis=1, mode="nearest")

    mu = blur(gray)
    sigma = np.sqrt(np.abs(blur(gray * gray) - mu * mu))
    return (gray - mu) / (sigma + c), sigma


def aggd_fit(x: np.ndarray) -> tuple[float, float, float]:
    """Moment-matched AGGD shape and left/right scales."""
    x = np.asarray(x, dtype=np.float64).ravel()
    left, right = x[x < 0], x[x > 0]
    if left.size == 0 or right.size == 0:
        return np.nan, np.nan, np.nan
    lstd = np.sqrt(np.mean(left**2))
    rstd = np.sqrt(np.mean(right**2))
    g_hat = lstd / rstd
    r_hat = np.mean(np.abs(x)) ** 2 / np.mean(x**2)
    r_norm = r_hat * (g_hat**3 + 1) * (g_hat + 1) / (g_hat**2 + 1) ** 2
    alpha = _ALPHAS[np.argmin((_R_ALPHA - r_norm) ** 2)]
    scale = np.sqrt(gamma_fn(1.0 / alpha) / gamma_fn(3.0 / alpha))
    return float(alpha), float(lstd * scale), float(rstd * scale)


def patch_features(coef: np.ndarray) -> np.ndarray:
    """The 18 AGGD statistics of one MSCN patch."""
    alpha, bl, br = aggd_fit(coef)
    feats = [alpha, (bl + br) / 2]
    for shift in ((0, 1), (1, 0), (1, 1), (-1, 1)):
        pair = coef * np.roll(coef, shift, axis=(0, 1))
        alpha, bl, br = aggd_fit(pair)
        mean = (br - bl) * gamma_fn(2.0 / alpha) / gamma_fn(1.0 / alpha) if np.isfinite(alpha) else np.nan
        feats += [alpha, mean, bl, br]
    return np.array(feats)


def _luma255(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3:
        if img.shape[0] != 3:
            raise ShapeError(f"expected (3, H, W) image, got {img.shape}")
        img = rgb_to_ycbcr(img).y
    return img * 255.0


def _half(gray: np.ndarray) -> np.ndarray:
    h, w = gray.shape
    im = Image.fromarray(gray.astype(np.float32))
    return np.asarray(im.resize((w // 2, h // 2), Image.Resampling.BICUBIC), dtype=np.float64)


def image_features(img: np.ndarray, patch: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-patch 36-feature rows and per-patch sharpness for one image."""
    gray = _luma255(img)
    rows, cols = gray.shape[0] // patch, gray.shape[1] // patch
    if rows * cols == 0:
        raise SizeError(f"image {gray.shape} smaller than one {patch}px patch")
    gray = gray[: rows * patch, : cols * patch]
    feats, sharp = [], []
    coef1, sigma1 = mscn(gray)
    coef2, _ = mscn(_half(gray))
    p2 = patch // 2
    for i in range(rows):
        for j in range(cols):
            f1 = patch_features(coef1[i * patch : (i + 1) * patch, j * patch : (j + 1) * patch])
            f2 = patch_features(coef2[i * p2 : (i + 1) * p2, j * p2 : (j + 1) * p2])
            feats.append(np.concatenate([f1, f2]))
            sharp.append(sigma1[i * patch : (i + 1) * patch, j * patch : (j + 1) * patch].mean())
    return np.array(feats), np.array(sharp)


def fit_niqe_model(
    corpus: list[np.ndarray],
    patch: int = DEFAULT_PATCH,
    threshold: float = SHARPNESS_THRESHOLD,
) -> NiqeModel:
    """Fit the pristine multivariate Gaussian on the sharp patches of ``corpus``."""
    if not corpus:
        raise ModelError("NIQE corpus is empty")
    selected = []
    for img in corpus:
        feats, sharp = image_features(img, patch)
        if sharp.max() <= 0:
            continue
        keep = sharp > threshold * sharp.max()
        selected.append(feats[keep])
    feats = np.concatenate(selected) if selected else np.empty((0, FEATURES))
    feats = feats[np.isfinite(feats).all(axis=1)]
    if feats.shape[0] < 2:
        raise ModelError("NIQE corpus has fewer than two usable patches (is it constant?)")
    mean = feats.mean(axis=0)
    cov = np.cov(feats, rowvar=False) + 1e-6 * np.eye(feats.shape[1])
    model = NiqeModel(mean, (cov + cov.T) / 2, patch, threshold)
    model.check()
    return model


def niqe(img: np.ndarray, model: NiqeModel) -> float:
    model.check()
    h, w = np.shape(img)[-2:]
    if (h // model.patch) * (w // model.patch) < 4:
        raise SizeError(f"NIQE needs at least 4 patches of {model.patch}px; image is {h}x{w}")
    feats, _ = image_features(img, model.patch)
    feats = feats[np.isfinite(feats).all(axis=1)]
    if feats.shape[0] < 2:
        raise SizeError("image has fewer than two patches with usable statistics")
    mu = feats.mean(axis=0)
    cov = np.cov(feats, rowvar=False)
    diff = model.mean - mu
    dist = diff @ np.linalg.pinv((model.cov + cov) / 2) @ diff
    return float(np.sqrt(max(dist, 0.0)))


def load_default_model() -> NiqeModel:
    return NiqeModel.load(DEFAULT_MODEL_PATH)
