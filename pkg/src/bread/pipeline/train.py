"""Stage-by-stage training.

Each stage optimises one network with the others frozen:

* ``ian``    illumination loss on exposure-augmented low/high luminance;
* ``ansn``   noise-residual MSE on references corrupted with Gaussian noise
             whose level is ``s * exp(-l_hat)``, ``s ~ U[0, 0.1]`` per sample;
* ``nfm``    MSE + (1 - SSIM) of the fused ladder candidates against Y_high;
* ``can``    chroma MSE, guided by the reference luminance;
* ``can_me`` the same loss on multi-exposure pairs, optionally finetuned
             with the paired data appended (``finetune = true``, lr 1e-4).

Ablation variants retrain only the denoiser (``stage = ansn``).
Runs are bit-reproducible for a fixed config in single-process mode.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
import torch

from ..can import ChromaPair, can_loss, sample_me_pair
from ..dataprep import PairedSample, load_exposure_sequences, load_paired_dataset, random_patch, synthesize_exposures
from ..errors import ConfigError, DataError, DependencyError
from ..ian import adjust_luminance, ian_loss_terms
from ..imagecore import rgb_to_ycbcr
from ..nnkit import (
    STAGE_SPECS,
    Checkpoint,
    OptimizerState,
    adam_step,
    build_network,
    gradients,
    load_checkpoint,
    save_checkpoint,
)
from ..noise import StrengthLadder, ansn_loss, gaussian_noise, nfm_loss_terms, noise_level_map, synthesize_poisson
from .bundle import checkpoint_path
from .config import RunConfig

log = logging.getLogger(__name__)

STAGE_INDEX = {"ian": 1, "ansn": 2, "nfm": 3, "can": 4, "can_me": 5}
VARIANT_INDEX = {"none": 0, "no_dn": 1, "no_nfm": 2, "no_sep": 3, "fgn": 4, "pn": 5}
MAX_TRAIN_STRENGTH = 0.1


def prerequisites(stage: str, config: RunConfig) -> list[str]:
    if stage == "ansn":
        return ["ian"]
    if stage == "nfm":
        return ["ian", "ansn"]
    if stage == "can_me" and config.finetune:
        return ["can_me"]
    return []


def _frozen(workdir: Path, stage: str, for_stage: str):
    path = checkpoint_path(workdir, stage)
    if not path.is_file():
        raise DependencyError(for_stage, stage)
    return load_checkpoint(path).to_network()


def _to_tensor(planes: list[np.ndarray]) -> torch.Tensor:
    return torch.from_numpy(np.stack(planes)[:, None].astype(np.float32))


class _Pool:
    """Exposure-augmented paired patches, converted to YCbCr on demand."""

    def __init__(self, samples: list[PairedSample], config: RunConfig):
        self.items = []
        for s in samples:
            for low in synthesize_exposures(s.low, config.exposures, config.over_exposed):
                self.items.append(PairedSample(low, s.high, s.scene_id))
        if not self.items:
            raise DataError("training manifest is empty")
        self.patch = config.patch_size

    def draw(self, rng: np.random.Generator):
        item = self.items[int(rng.integers(len(self.items)))]
        p = random_patch(item, self.patch, rng)
        return rgb_to_ycbcr(p.low), rgb_to_ycbcr(p.high)


class _MEPool:
    """Multi-exposure pairs, optionally mixed with the original paired data."""

    def __init__(self, sequences, pairs: list[PairedSample], patch: int):
        if not sequences and not pairs:
            raise DataError("no exposure sequences or pairs to train the colour net on")
        self.sequences = sequences
        self.pairs = pairs
        self.patch = patch

    def draw(self, rng: np.random.Generator):
        k = int(rng.integers(len(self.sequences) + len(self.pairs)))
        if k < len(self.sequences):
            me = sample_me_pair(self.sequences[k], rng)
            src = np.stack(me.source)
            tgt = np.stack(me.target)
        else:
            pair = self.pairs[k - len(self.sequences)]
            src = np.stack(rgb_to_ycbcr(pair.low))
            tgt = np.stack(rgb_to_ycbcr(pair.high))
        p = random_patch(PairedSample(src, tgt, ""), self.patch, rng)
        return tuple(p.low), tuple(p.high)


def _load_pairs(config: RunConfig) -> list[PairedSample]:
    if config.train_manifest is None:
        raise ConfigError("train_manifest is required for this stage")
    return load_paired_dataset(config.train_manifest)


def _ian_batch(pool, rng, config, frozen):
    lows, highs = zip(*(pool.draw(rng) for _ in range(config.batch_size)))
    return {"y_low": _to_tensor([l.y for l in lows]), "y_high": _to_tensor([h.y for h in highs])}


def _ian_loss(net, batch):
    return ian_loss_terms(batch["y_low"], batch["y_high"], net(batch["y_low"]))


def _illumination(frozen, y_low: torch.Tensor) -> np.ndarray:
    with torch.no_grad():
        return frozen["ian"](y_low).numpy().astype(np.float64)


def _ansn_batch(pool, rng, config, frozen):
    lows, highs = zip(*(pool.draw(rng) for _ in range(config.batch_size)))
    y_low = _to_tensor([l.y for l in lows])
    y_high = np.stack([h.y for h in highs])[:, None].astype(np.float64)
    l_hat = _illumination(frozen, y_low)
    level = noise_level_map(l_hat)
    variant = config.variant
    if variant == "fgn":
        sigma = np.full_like(y_high, config.fixed_sigma)
        noisy = y_high + gaussian_noise(sigma, rng)
    elif variant == "pn":
        sigma = level
        noisy = synthesize_poisson(y_high, l_hat, config.poisson_peak, rng)
    elif variant == "no_sep":
        sigma = level
        noisy = adjust_luminance(y_low.numpy().astype(np.float64), l_hat)
    else:
        strength = rng.uniform(0.0, MAX_TRAIN_STRENGTH, size=(len(y_high), 1, 1, 1))
        sigma = strength * level
        noisy = y_high + gaussian_noise(sigma, rng)
    as_t = lambda a: torch.from_numpy(a.astype(np.float32))  # noqa: E731
    return {"noisy": as_t(noisy), "sigma": as_t(sigma), "noise": as_t(noisy - y_high)}


def _ansn_loss(net, batch):
    pred = net(torch.cat([batch["noisy"], batch["sigma"]], dim=1))
    return {"mse": ansn_loss(pred, batch["noise"])}


def _nfm_batch(pool, rng, config, frozen):
    lows, highs = zip(*(pool.draw(rng) for _ in range(config.batch_size)))
    y_low = _to_tensor([l.y for l in lows])
    y_high = np.stack([h.y for h in highs])[:, None].astype(np.float64)
    level = noise_level_map(_illumination(frozen, y_low))
    hidden = rng.uniform(0.0, MAX_TRAIN_STRENGTH, size=(len(y_high), 1, 1, 1))
    noisy = torch.from_numpy((y_high + gaussian_noise(hidden * level, rng)).astype(np.float32))
    level = torch.from_numpy(level.astype(np.float32))
    maps = StrengthLadder().maps(level)
    with torch.no_grad():
        cands = [noisy - frozen["ansn"](torch.cat([noisy, m], dim=1)) for m in maps]
    return {"inputs": torch.cat([*cands, *maps], dim=1), "y_high": torch.from_numpy(y_high.astype(np.float32))}


def _nfm_loss(net, batch):
    return nfm_loss_terms(net(batch["inputs"]), batch["y_high"])


def _can_batch(pool, rng, config, frozen):
    lows, highs = zip(*(pool.draw(rng) for _ in range(config.batch_size)))
    t = lambda planes: _to_tensor(list(planes))  # noqa: E731
    return {
        # the reference luminance is the guide during training
        "inputs": torch.cat(
            [t(l[0] for l in lows), t(l[1] for l in lows), t(l[2] for l in lows), t(h[0] for h in highs)], dim=1
        ),
        "cb": t(h[1] for h in highs),
        "cr": t(h[2] for h in highs),
    }


def _can_loss(net, batch):
    out = net(batch["inputs"])
    return {"mse": can_loss(ChromaPair(out[:, 0:1], out[:, 1:2]), ChromaPair(batch["cb"], batch["cr"]))}


STEPS = {
    "ian": (_ian_batch, _ian_loss),
    "ansn": (_ansn_batch, _ansn_loss),
    "nfm": (_nfm_batch, _nfm_loss),
    "can": (_can_batch, _can_loss),
    "can_me": (_can_batch, _can_loss),
}


def output_path(stage: str, config: RunConfig) -> Path:
    return checkpoint_path(config.workdir, stage, config.variant)


def train_stage(stage: str, config: RunConfig, resume: str | Path | None = None) -> Checkpoint:
    """Train one stage for ``config.iterations`` Adam steps and save its checkpoint."""
    if stage not in STAGE_INDEX:
        raise ConfigError(f"unknown stage {stage!r}")
    if config.variant in ("fgn", "pn", "no_sep") and stage != "ansn":
        raise ConfigError(f"variant {config.variant!r} only changes the ansn stage")
    workdir = Path(config.workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    resume = resume or config.resume
    if stage == "can_me" and config.finetune and resume is None:
        resume = checkpoint_path(workdir, "can_me")
    for need in prerequisites(stage, config):
        if need == stage:
            if resume is None or not Path(resume).is_file():
                raise DependencyError(f"{stage} finetune", stage)
        elif not checkpoint_path(workdir, need).is_file():
            raise DependencyError(stage, need)
    frozen = {need: _frozen(workdir, need, stage) for need in prerequisites(stage, config) if need != stage}

    if stage == "can_me":
        if config.sequence_manifest is None:
            raise ConfigError("can_me needs sequence_manifest")
        sequences = load_exposure_sequences(config.sequence_manifest)
        pairs = _load_pairs(config) if config.finetune else []
        pool = _MEPool(sequences, pairs, config.patch_size)
    else:
        augment = config.with_(exposures=config.ian_exposures) if stage == "ian" and config.ian_exposures else config
        pool = _Pool(_load_pairs(config), augment)

    seed = [config.seed, STAGE_INDEX[stage], VARIANT_INDEX[config.variant]]
    rng = np.random.default_rng(seed)
    start_step = 0
    if resume is not None:
        ckpt = load_checkpoint(resume)
        if ckpt.stage != stage:
            raise DependencyError(stage, stage)
        net = ckpt.to_network()
        start_step = ckpt.step
        rng = np.random.default_rng(seed + [start_step])
    else:
        init_seed = config.seed * 1000 + STAGE_INDEX[stage] * 10 + VARIANT_INDEX[config.variant]
        net = build_network(STAGE_SPECS[stage], seed=init_seed)
    net.train()
    for f in frozen.values():
        f.eval()

    make_batch, loss_fn = STEPS[stage]
    state = OptimizerState(lr=config.learning_rate(stage))
    params = dict(net.named_parameters())
    out = output_path(stage, config)
    log_path = out.with_suffix(".log")
    seen: dict[str, float] = {}

    def recorded(net_, batch):
        terms = loss_fn(net_, batch)
        seen["loss"] = float(sum(v.detach() for v in terms.values()))
        return terms

    with open(log_path, "a" if resume else "w", encoding="utf-8") as log_file:
        for it in range(config.iterations):
            batch = make_batch(pool, rng, config, frozen)
            grads = gradients(net, recorded, batch)
            adam_step(params, grads, state)
            step = start_step + it + 1
            if it % config.log_every == 0 or it == config.iterations - 1:
                log_file.write(f"{step} {seen['loss']:.8g}\n")
                log.info("%s step %d loss %.6g", stage, step, seen["loss"])

    net.eval()
    ckpt = Checkpoint.from_network(stage, net, step=start_step + config.iterations)
    save_checkpoint(ckpt, out)
    return ckpt


def read_log(path: str | Path) -> list[tuple[int, float]]:
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        step, loss = line.split()
        rows.append((int(step), float(loss)))
    return rows


def train_all(config: RunConfig, stages: tuple[str, ...] = ("ian", "ansn", "nfm", "can")) -> dict[str, Checkpoint]:
    """Train ``stages`` in order, each against the checkpoints of the earlier ones."""
    return {stage: train_stage(stage, config) for stage in stages}
