"""Regenerate the bundled test fixtures and the default NIQE model.

    python3 scripts/make_fixtures.py

Needs scikit-image for its sample photographs. Outputs (committed):

* tests/data/lol8/{low,high}/*.png  synthetic low/normal-light pairs, 200x300
* tests/data/lol8/train.txt         all 8 pairs
* tests/data/lol8/cli4.txt          the first 4 pairs, used by the CLI tests
* tests/data/sice_mini/<scene>/*    exposure sequences (one single-frame scene)
* src/bread/data/pristine.niqe      NIQE model fitted on full-size photographs

A low-light image is the reference times a smooth illumination field in
[0.06, 0.3] and a small per-channel colour cast, followed by Poisson-Gaussian
sensor noise and 8-bit quantisation.
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter
from skimage import data as skdata

from bread.imagecore import write_png
from bread.metrics.niqe import DEFAULT_MODEL_PATH, fit_niqe_model

ROOT = Path(__file__).resolve().parent.parent
SCENES = [
    "astronaut",
    "coffee",
    "chelsea",
    "rocket",
    "hubble_deep_field",
    "immunohistochemistry",
    "retina",
    "colorwheel",
]
NIQE_CORPUS = ["astronaut", "coffee", "chelsea", "rocket", "immunohistochemistry", "camera", "brick", "grass", "gravel"]
SIZE = (200, 300)


def load(name: str, size: tuple[int, int] | None = None) -> np.ndarray:
    arr = getattr(skdata, name)()
    if arr.ndim == 2:
        arr = np.stack([arr] * 3, axis=-1)
    im = Image.fromarray(arr[..., :3])
    if size is not None:
        h, w = size
        # centre crop to the target aspect ratio, then resize
        sw, sh = im.size
        scale = min(sw / w, sh / h)
        cw, ch = int(w * scale), int(h * scale)
        left, top = (sw - cw) // 2, (sh - ch) // 2
        im = im.crop((left, top, left + cw, top + ch)).resize((w, h), Image.Resampling.LANCZOS)
    return np.asarray(im, dtype=np.float64).transpose(2, 0, 1) / 255.0


def quantise(img: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(img, 0.0, 1.0) * 255.0) / 255.0


def darken(high: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    _, h, w = high.shape
    field = gaussian_filter(rng.standard_normal((h, w)), sigma=min(h, w) / 4, mode="reflect")
    field = (field - field.min()) / (np.ptp(field) + 1e-12)
    lo = rng.uniform(0.06, 0.12)
    hi = rng.uniform(0.2, 0.3)
    illum = lo + (hi - lo) * field
    cast = 1.0 + rng.uniform(-0.08, 0.08, size=(3, 1, 1))
    clean = high * illum[None] * cast
    peak = rng.uniform(300.0, 1000.0)
    read = rng.uniform(0.004, 0.01)
    noisy = rng.poisson(clean * peak) / peak + rng.normal(0.0, read, clean.shape)
    return quantise(noisy)


def make_pairs(out: Path, rng: np.random.Generator) -> None:
    (out / "low").mkdir(parents=True, exist_ok=True)
    (out / "high").mkdir(parents=True, exist_ok=True)
    lines = []
    for i, name in enumerate(SCENES):
        high = quantise(load(name, SIZE))
        low = darken(high, rng)
        fname = f"{i:02d}_{name}.png"
        write_png(out / "high" / fname, high)
        write_png(out / "low" / fname, low)
        lines.append(f"low/{fname}\thigh/{fname}")
    header = "# synthetic low/normal-light pairs (scripts/make_fixtures.py)\n"
    (out / "train.txt").write_text(header + "\n".join(lines) + "\n", encoding="utf-8")
    (out / "cli4.txt").write_text(header + "\n".join(lines[:4]) + "\n", encoding="utf-8")


def make_sequences(out: Path) -> None:
    gains = [0.25, 0.5, 1.0, 2.0]
    for scene in ("coffee", "astronaut"):
        img = load(scene, (160, 200))
        d = out / scene
        d.mkdir(parents=True, exist_ok=True)
        for k, g in enumerate(gains, 1):
            # names sort naturally (2 before 10) but not lexically
            write_png(d / f"frame{k * 4}.png", quantise(img * g))
    lone = out / "lonely"
    lone.mkdir(parents=True, exist_ok=True)
    write_png(lone / "frame1.png", quantise(load("rocket", (160, 200))))


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=20240)
    parser.add_argument("--skip-niqe", action="store_true")
    args = parser.parse_args()
    rng = np.random.default_rng(args.seed)
    make_pairs(ROOT / "tests" / "data" / "lol8", rng)
    make_sequences(ROOT / "tests" / "data" / "sice_mini")
    if not args.skip_niqe:
        model = fit_niqe_model([load(name) for name in NIQE_CORPUS])
        DEFAULT_MODEL_PATH.parent.mkdir(parents=True, exist_ok=True)
        model.save(DEFAULT_MODEL_PATH)
        print(f"NIQE model: {DEFAULT_MODEL_PATH}")
    print("fixtures written under", ROOT / "tests" / "data")


if __name__ == "__main__":
    main()
