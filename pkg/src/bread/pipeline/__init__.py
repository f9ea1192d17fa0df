from .bundle import BreadBundle, Trace, checkpoint_path, enhance, load_bundle, run_graph
from .config import PRESETS, VARIANTS, RunConfig, load_config, parse_config_text
from .evaluate import evaluate, run_ablation, score_pair
from .train import prerequisites, read_log, train_all, train_stage

__all__ = [
    "PRESETS",
    "VARIANTS",
    "BreadBundle",
    "RunConfig",
    "Trace",
    "checkpoint_path",
    "enhance",
    "evaluate",
    "load_bundle",
    "load_config",
    "parse_config_text",
    "prerequisites",
    "read_log",
    "run_ablation",
    "run_graph",
    "score_pair",
    "train_all",
    "train_stage",
]
