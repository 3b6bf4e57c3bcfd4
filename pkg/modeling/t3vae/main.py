from __future__ import annotations

import argparse
import sys

from loguru import logger

from .config import Settings
from .data import DATASETS, SPLIT_PRESETS
from .errors import T3Error
from .evaluate import REGIONS
from .pipeline import Pipeline


def _parse_range(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"range must be LO,HI, got {text!r}")
    return lo, hi


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Heavy-tailed VAE toolkit")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p_gen = sub.add_parser("gen-data", help="Sample a synthetic dataset to CSV")
    p_gen.add_argument("--dataset", choices=DATASETS, required=True)
    p_gen.add_argument("--count", type=int)
    p_gen.add_argument("--preset", choices=sorted(SPLIT_PRESETS), help="Write train/val/test splits into --out")
    p_gen.add_argument("--seed", type=int)
    p_gen.add_argument("--out", required=True)

    p_train = sub.add_parser("train")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--data-dir", required=False)
    p_train.add_argument("--out", required=True)

    p_generate = sub.add_parser("generate")
    p_generate.add_argument("--checkpoint", required=True)
    p_generate.add_argument("--count", type=int, required=True)
    p_generate.add_argument("--seed", type=int)
    p_generate.add_argument("--out", required=True)

    p_eval = sub.add_parser("eval", help="MMD tests of generated vs reference samples")
    p_eval.add_argument("--generated", required=True)
    p_eval.add_argument("--reference", required=True)
    p_eval.add_argument("--region", choices=REGIONS, action="append", help="Repeatable; default full, left, right")
    p_eval.add_argument("--bootstrap", type=int, default=1000)
    p_eval.add_argument("--seed", type=int)
    p_eval.add_argument("--out", required=True)

    p_hist = sub.add_parser("hist")
    p_hist.add_argument("--in", dest="in_path", required=True)
    p_hist.add_argument("--bins", type=int, default=100)
    p_hist.add_argument("--range", type=_parse_range, help="LO,HI")
    p_hist.add_argument("--column", type=int, default=0)
    p_hist.add_argument("--out", required=True)
    return parser


def run(args: argparse.Namespace, settings: Settings) -> None:
    pipe = Pipeline(settings)
    if args.cmd == "gen-data":
        pipe.gen_data(args.dataset, args.out, count=args.count, seed=args.seed, preset=args.preset)
    elif args.cmd == "train":
        pipe.train(args.config, args.data_dir, args.out)
    elif args.cmd == "generate":
        pipe.generate(args.checkpoint, args.count, args.out, seed=args.seed)
    elif args.cmd == "eval":
        regions = tuple(args.region) if args.region else ("full", "left", "right")
        pipe.evaluate(args.generated, args.reference, args.out, regions=regions, n_bootstrap=args.bootstrap, seed=args.seed)
    elif args.cmd == "hist":
        pipe.hist(args.in_path, args.out, args.bins, args.range, column=args.column)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = Settings.load()
        logger.remove()
        logger.add(sys.stderr, level=settings.log_level)
        run(args, settings)
    except T3Error as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
