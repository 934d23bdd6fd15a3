"""Command line entry points: dfnet gen | train | eval | sweep-alpha | sweep-rfb | sweep-aux."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import harness
from .config import RunConfig, read_config
from .errors import DFNetError
from .synthdata import dump_dataset, generate, split


def _add_common(p):
    p.add_argument("--config", metavar="PATH", help="key = value config file (defaults apply if omitted)")
    p.add_argument("--seed", metavar="N", type=int, help="override the config seed")
    p.add_argument("--out", metavar="DIR", help="override the config output directory")


def _load(args):
    cfg = read_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = replace(cfg, out_dir=args.out)
    return cfg


def _cmd_gen(args):
    cfg = _load(args)
    if args.seed is not None:
        cfg = replace(cfg, data=replace(cfg.data, seed=args.seed))
    dataset = generate(cfg.data, cfg.num_scenes)
    out = Path(args.out or cfg.data_dir or Path(cfg.out_dir) / "dataset")
    dump_dataset(out, dataset)
    print(f"wrote {len(dataset)} scenes to {out}")
    return 0


def _cmd_train(args):
    cfg = _load(args)
    rep = harness.train(cfg, log=print)
    print(f"done in {rep.wall_clock:.1f} s; artifacts in {cfg.out_dir}")
    if rep.test is not None:
        print(f"test pacc {rep.test.pixel_acc:.4f}  mpacc {rep.test.mean_class_acc:.4f}  miou {rep.test.mean_iou:.4f}")
    return 0


def _cmd_eval(args):
    cfg = _load(args)
    checkpoint = args.checkpoint or str(Path(cfg.out_dir) / harness.CHECKPOINT_NAME)
    dataset = harness.build_dataset(cfg)
    _, _, test_set = split(dataset, cfg.splits)
    if not test_set:
        raise DFNetError(
            f"test split is empty ({len(dataset)} scenes at fractions {cfg.splits}); "
            "raise data.num_scenes"
        )
    dump_dir = Path(cfg.out_dir) / "predictions"
    rep = harness.evaluate_checkpoint(cfg, checkpoint, test_set, dump_dir=dump_dir)
    print(f"pacc  {rep.pixel_acc:.4f}")
    print(f"mpacc {rep.mean_class_acc:.4f}")
    print(f"miou  {rep.mean_iou:.4f}")
    for i, v in enumerate(rep.per_class_iou):
        print(f"iou[{i}] {v:.4f}")
    print(f"predicted label maps in {dump_dir}")
    return 0


def _cmd_sweep_alpha(args):
    cfg = _load(args)
    path = harness.sweep_alpha(cfg, cfg.out_dir, resume=args.resume, log=print)
    print(f"sweep table: {path}")
    return 0


def _cmd_sweep_rfb(args):
    cfg = _load(args)
    path = harness.sweep_rfb(cfg, cfg.out_dir, resume=args.resume, log=print)
    print(f"sweep table: {path}")
    return 0


def _cmd_sweep_aux(args):
    cfg = _load(args)
    path = harness.sweep_aux(
        cfg, cfg.out_dir, resume=args.resume, include_none=args.include_none, log=print
    )
    print(f"sweep table: {path}")
    return 0


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="dfnet",
        description="Segmentation with per-batch dynamic class weights, on synthetic road-marking scenes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="render the synthetic dataset to PPM/PGM files")
    _add_common(p)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("train", help="train a model from a config")
    _add_common(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    _add_common(p)
    p.add_argument("--checkpoint", metavar="PATH", help="checkpoint file (default: <out_dir>/checkpoint.dfnk)")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("sweep-alpha", help="uniform baseline plus one run per upper threshold")
    _add_common(p)
    p.add_argument("--resume", action="store_true", help="skip rows already in the sweep CSV")
    p.set_defaults(func=_cmd_sweep_alpha)

    p = sub.add_parser("sweep-rfb", help="one run per fusion-block structure plus a baseline")
    _add_common(p)
    p.add_argument("--resume", action="store_true", help="skip rows already in the sweep CSV")
    p.set_defaults(func=_cmd_sweep_rfb)

    p = sub.add_parser("sweep-aux", help="one run per auxiliary-loss tap point")
    _add_common(p)
    p.add_argument("--resume", action="store_true", help="skip rows already in the sweep CSV")
    p.add_argument("--include-none", action="store_true", help="append an untapped control row")
    p.set_defaults(func=_cmd_sweep_aux)

    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DFNetError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
