"""Dataset manifests, exposure augmentation and patch sampling.

Manifest format: a UTF-8 text file with one sample per line. Paired data
uses ``low<TAB>high``; exposure sequences list one scene directory per
line. Paths are relative to the manifest's directory. Blank lines and lines
starting with ``#`` are ignored.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .can import ExposureSequence
from .errors import DataError, DomainError, SizeError
from .imagecore import clamp01, read_png

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}
MAX_GAIN = 100.0


@dataclass
class PairedSample:
    low: np.ndarray
    high: np.ndarray
    scene_id: str

    def __post_init__(self):
        if self.low.shape != self.high.shape:
            raise DataError(f"pair {self.scene_id!r}: low {self.low.shape} and high {self.high.shape} differ")


@dataclass
class DatasetManifest:
    root: Path
    split: str = "train"
    entries: list[tuple[Path, ...]] = field(default_factory=list)


def read_manifest(path: str | Path, split: str = "train") -> DatasetManifest:
    path = Path(path)
    if path.is_dir():
        scenes = sorted(p for p in path.iterdir() if p.is_dir())
        return DatasetManifest(root=path, split=split, entries=[(p,) for p in scenes])
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    root = path.parent
    entries = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        entries.append(tuple(root / part for part in line.split("\t")))
    return DatasetManifest(root=root, split=split, entries=entries)


def _as_manifest(manifest) -> DatasetManifest:
    return manifest if isinstance(manifest, DatasetManifest) else read_manifest(manifest)


def load_paired_dataset(manifest) -> list[PairedSample]:
    """Load every ``low/high`` pair, ordered by the low image's filename."""
    manifest = _as_manifest(manifest)
    missing = [str(p) for entry in manifest.entries for p in entry if not p.is_file()]
    if missing:
        raise DataError("missing files: " + ", ".join(missing))
    bad = [entry for entry in manifest.entries if len(entry) != 2]
    if bad:
        raise DataError(f"paired manifest lines need exactly two tab-separated paths: {bad[0]}")
    samples = []
    for low, high in sorted(manifest.entries, key=lambda e: (e[0].name, str(e[0]))):
        samples.append(PairedSample(read_png(low), read_png(high), scene_id=low.stem))
    return samples


def max_exposure_gain(img: np.ndarray, frac: float = 0.25, cap: float = MAX_GAIN) -> float:
    """Largest gain leaving at most ``frac`` of pixels strictly above 1.

    Brightness is the per-pixel max over RGB. The gain is floored at 1 and
    capped at ``cap``; an all-black image returns ``cap``.
    """
    if not 0.0 < frac < 1.0:
        raise DomainError(f"frac must lie in (0, 1), got {frac}")
    value = np.asarray(img, dtype=np.float64).max(axis=0).ravel()
    # "higher" keeps q on an actual pixel value so the bound holds exactly
    q = float(np.quantile(value, 1.0 - frac, method="higher"))
    if q <= 0.0:
        return float(cap)
    gain = 1.0 / q
    while gain * q > 1.0:
        gain = np.nextafter(gain, 0.0)
    return float(min(max(gain, 1.0), cap))


def exposure_gains(low: np.ndarray, count: int = 8, frac: float = 0.25) -> np.ndarray:
    if count < 1:
        raise DomainError(f"count must be >= 1, got {count}")
    return np.linspace(1.0, max_exposure_gain(low, frac), count)


def synthesize_exposures(low: np.ndarray, count: int = 8, frac: float = 0.25) -> list[np.ndarray]:
    """``count`` brightened copies, gains evenly spaced from 1 to the max gain."""
    return [clamp01(g * low).astype(low.dtype) for g in exposure_gains(low, count, frac)]


def random_patch(sample: PairedSample, size: int, rng: np.random.Generator, flip: bool = True) -> PairedSample:
    """Crop the same window from low and high, then maybe flip horizontally."""
    h, w = sample.low.shape[-2:]
    if size > min(h, w):
        raise SizeError(f"patch {size} exceeds image {h}x{w}")
    if size % 8:
        raise SizeError(f"patch size must be divisible by 8, got {size}")
    top = int(rng.integers(0, h - size + 1))
    left = int(rng.integers(0, w - size + 1))
    window = (..., slice(top, top + size), slice(left, left + size))
    low, high = sample.low[window], sample.high[window]
    if flip and rng.random() < 0.5:
        low, high = low[..., ::-1], high[..., ::-1]
    return PairedSample(np.ascontiguousarray(low), np.ascontiguousarray(high), sample.scene_id)


def _natural_key(path: Path):
    return [int(tok) if tok.isdigit() else tok.lower() for tok in re.split(r"(\d+)", path.name)]


def load_exposure_sequences(manifest) -> list[ExposureSequence]:
    """One sequence per scene directory, frames in exposure-index order.

    Scenes with fewer than two usable images are skipped with a warning.
    """
    manifest = _as_manifest(manifest)
    sequences = []
    for (scene,) in sorted(manifest.entries, key=lambda e: e[0].name):
        if not scene.is_dir():
            raise DataError(f"missing scene directory: {scene}")
        files = sorted((p for p in scene.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES), key=_natural_key)
        frames = [read_png(p) for p in files]
        if len(frames) < 2:
            log.warning("skipping scene %s: %d usable image(s)", scene.name, len(frames))
            continue
        if len({f.shape for f in frames}) != 1:
            log.warning("skipping scene %s: frames differ in size", scene.name)
            continue
        sequences.append(ExposureSequence(scene.name, frames))
    return sequences
