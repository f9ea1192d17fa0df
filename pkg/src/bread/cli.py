"""Command-line entry point: ``bread {train,enhance,evaluate,ablate}``.

Exit codes: 0 success, 2 config error, 3 data error, 4 missing dependency.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .dataprep import IMAGE_SUFFIXES
from .errors import (
    BundleError,
    ConfigError,
    DataError,
    DependencyError,
    FormatError,
    ModelError,
    ShapeError,
    SizeError,
)
from .imagecore import read_png, write_png

EXIT_CONFIG, EXIT_DATA, EXIT_DEPENDENCY = 2, 3, 4
_DATA_ERRORS = (DataError, BundleError, FormatError, ModelError, ShapeError, SizeError, OSError)

log = logging.getLogger("bread")


def _cmd_train(args) -> None:
    from .pipeline import load_config, train_stage

    config = load_config(args.config)
    ckpt = train_stage(args.stage, config, resume=args.resume)
    print(f"trained {ckpt.stage} for {ckpt.step} steps -> {config.workdir}")


def _inputs(path: Path) -> list[Path]:
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        if not files:
            raise DataError(f"no images in {path}")
        return files
    if not path.is_file():
        raise DataError(f"input {path} does not exist")
    return [path]


def _cmd_enhance(args) -> None:
    from .pipeline import enhance, load_bundle

    files = _inputs(Path(args.input))
    bundle = load_bundle(args.bundle, me=args.me)
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    for f in files:
        write_png(out_dir / f"{f.stem}.png", enhance(bundle, read_png(f)))
    print(f"enhanced {len(files)} image(s) -> {out_dir}")


def _cmd_evaluate(args) -> None:
    from .pipeline import evaluate, load_bundle

    bundle = load_bundle(args.bundle, me=args.me)
    report = evaluate(bundle, args.manifest, out_dir=args.out, niqe_model=args.niqe_model)
    _summarise(report, args.out)


def _cmd_ablate(args) -> None:
    from .pipeline import load_config, run_ablation

    config = load_config(args.config)
    report = run_ablation(args.variant, config)
    _summarise(report, Path(config.workdir) / f"ablation_{args.variant}")


def _summarise(report, out_dir) -> None:
    means = report.aggregate
    print(" ".join(f"{k}={v:.4f}" for k, v in means.items()))
    if report.errors:
        print(f"{len(report.errors)} image(s) failed; see {out_dir}/metrics.json", file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bread", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one stage")
    p.add_argument("--stage", required=True, choices=("ian", "ansn", "nfm", "can", "can_me"))
    p.add_argument("--config", required=True)
    p.add_argument("--resume", default=None, help="checkpoint to continue from")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("enhance", help="enhance an image or a directory of images")
    p.add_argument("--bundle", required=True, help="directory holding the stage checkpoints")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--me", action="store_true", help="use the multi-exposure colour net")
    p.set_defaults(func=_cmd_enhance)

    p = sub.add_parser("evaluate", help="score a bundle on a paired manifest")
    p.add_argument("--bundle", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--niqe-model", default=None)
    p.add_argument("--me", action="store_true", help="use the multi-exposure colour net")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("ablate", help="evaluate an ablation variant")
    p.add_argument("--variant", required=True, choices=("no_dn", "no_nfm", "no_sep", "fgn", "pn"))
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_ablate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DependencyError as exc:
        print(f"dependency error: {exc}", file=sys.stderr)
        return EXIT_DEPENDENCY
    except _DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
