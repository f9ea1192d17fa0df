"""Run configuration: ``key = value`` text files with named presets.

A ``preset`` line, if present, is applied first and other keys override it
regardless of their position. Relative paths resolve against the config
file's directory. Unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from ..errors import ConfigError
from ..noise import FIXED_SIGMA, POISSON_PEAK

VARIANTS = ("none", "no_dn", "no_nfm", "no_sep", "fgn", "pn")
TRAIN_STAGES = ("ian", "ansn", "nfm", "can", "can_me")

PRESETS = {
    # Full-scale schedule.
    "full": {"iterations": 100_000, "patch_size": 128, "batch_size": 8, "log_every": 100},
    # Single-CPU overfit schedule. The IAN sees no exposure augmentation: with it,
    # the best smooth illumination map under the IAN loss is ~1 and nothing brightens.
    "desk": {"iterations": 2_000, "patch_size": 128, "batch_size": 1, "log_every": 50, "ian_exposures": 1},
}

_PATH_KEYS = {"workdir", "train_manifest", "eval_manifest", "sequence_manifest", "resume", "niqe_model"}
_VARIANT_KEYS = {"poisson_peak": "pn", "fixed_sigma": "fgn"}


@dataclass(frozen=True)
class RunConfig:
    workdir: Path = Path("bread_run")
    stage: str | None = None
    train_manifest: Path | None = None
    eval_manifest: Path | None = None
    sequence_manifest: Path | None = None
    patch_size: int = 128
    batch_size: int = 8
    iterations: int = 100_000
    lr: float | None = None
    seed: int = 0
    variant: str = "none"
    log_every: int = 100
    exposures: int = 8
    ian_exposures: int | None = None  # overrides ``exposures`` for the ian stage
    over_exposed: float = 0.25
    finetune: bool = False
    resume: Path | None = None
    niqe_model: Path | None = None
    poisson_peak: float = POISSON_PEAK
    fixed_sigma: float = FIXED_SIGMA
    preset: str | None = None

    def __post_init__(self):
        if self.stage is not None and self.stage not in TRAIN_STAGES:
            raise ConfigError(f"unknown stage {self.stage!r}; choose from {', '.join(TRAIN_STAGES)}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; choose from {', '.join(VARIANTS)}")
        for name in ("patch_size", "batch_size", "exposures", "log_every"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.ian_exposures is not None and self.ian_exposures < 1:
            raise ConfigError("ian_exposures must be >= 1")
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")
        if self.patch_size % 8:
            raise ConfigError(f"patch_size must be divisible by 8, got {self.patch_size}")
        if not 0.0 < self.over_exposed < 1.0:
            raise ConfigError("over_exposed must lie in (0, 1)")
        if self.lr is not None and self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.poisson_peak <= 0:
            raise ConfigError("poisson_peak must be positive")
        if self.fixed_sigma < 0:
            raise ConfigError("fixed_sigma must be nonnegative")

    def with_(self, **changes) -> "RunConfig":
        return replace(self, **changes)

    def learning_rate(self, stage: str) -> float:
        if self.lr is not None:
            return self.lr
        return 1e-4 if stage == "can_me" and self.finetune else 1e-3


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _convert(key: str, raw: str, base: Path):
    kind = _FIELD_TYPES[key]
    try:
        if key in _PATH_KEYS:
            return (base / raw).resolve() if raw else None
        if kind.startswith("int"):
            return int(raw)
        if kind.startswith("float"):
            num, _, den = raw.partition("/")
            return float(num) / float(den) if den else float(num)
        if kind == "bool":
            lowered = raw.lower()
            if lowered not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return lowered in ("true", "1", "yes")
        return raw or None
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc


def parse_config_text(text: str, base: Path = Path("."), source: str = "<config>") -> RunConfig:
    values: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if not sep:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = _convert(key, raw, base)

    merged: dict[str, object] = {}
    preset = values.get("preset")
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {', '.join(PRESETS)}")
        merged.update(PRESETS[preset])
    merged.update(values)
    variant = merged.get("variant", "none")
    for key, owner in _VARIANT_KEYS.items():
        if key in values and variant != owner:
            raise ConfigError(f"{key} only applies to variant {owner!r} (variant is {variant!r})")
    if variant in ("fgn", "pn", "no_sep") and merged.get("train_manifest") is None:
        raise ConfigError(f"variant {variant!r} retrains the denoiser and needs train_manifest")
    merged.setdefault("workdir", base.resolve() / "bread_run")
    try:
        return RunConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, base=path.parent, source=str(path))
