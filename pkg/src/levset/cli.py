"""Command-line front end.

    levset train       --preset f1 --out-dir runs/f1
    levset sensitivity --config runs/f1/manifest.json --checkpoint runs/f1/checkpoint.json
    levset rmse        --config cfg.json --checkpoint ckpt.json --train-sizes 100,500
    levset resume      --config cfg.json --checkpoint ckpt.json --epochs 50
    levset presets

Exit codes: 0 success, 2 config error, 3 training aborted on a non-finite
loss, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from .experiment import (
    ConfigError,
    build_preset,
    format_presets,
    load_config,
    resolve_config,
    run_rmse,
    run_sensitivity,
    run_train,
)
from .revnet import CheckpointError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_TRAINING_ABORT = 3
EXIT_IO = 4


def _add_config_options(parser: argparse.ArgumentParser, with_training_overrides: bool = True):
    parser.add_argument("--config", help="path to a config JSON (a manifest.json also works)")
    parser.add_argument("--preset", help="start from a built-in preset (f1..f5)")
    parser.add_argument("--out-dir", help="output directory override")
    parser.add_argument("--seed", type=int, help="global seed override")
    parser.add_argument("--function", help="benchmark function override (f1..f5)")
    if with_training_overrides:
        parser.add_argument("--epochs", type=int, help="training epoch count override")
        parser.add_argument("--learning-rate", type=float, help="learning rate override")
        parser.add_argument("--batch-size", help="minibatch size override (integer or 'full')")
        parser.add_argument("--lambda", dest="lam", type=float, help="determinant-penalty weight override")


def _config_from_args(args) -> dict:
    if args.config is None and args.preset is None:
        raise ConfigError("provide --config and/or --preset")
    if args.preset is not None:
        cfg = build_preset(args.preset)
    else:
        cfg = {}
    if args.config is not None:
        from .experiment import _merge  # flags/config overlay onto the preset base

        cfg = _merge(cfg, load_config(args.config)) if cfg else load_config(args.config)
    if args.function is not None:
        cfg["function"] = args.function
    if args.seed is not None:
        cfg["seed"] = int(args.seed)
        # A seed override re-derives the stage seeds unless the config pinned them.
        cfg.setdefault("revnet", {})
        cfg.setdefault("train", {})
    if args.out_dir is not None:
        cfg["out_dir"] = args.out_dir
    train_cfg = cfg.setdefault("train", {})
    if getattr(args, "epochs", None) is not None:
        train_cfg["n_epochs"] = int(args.epochs)
    if getattr(args, "learning_rate", None) is not None:
        train_cfg["learning_rate"] = float(args.learning_rate)
    if getattr(args, "batch_size", None) is not None:
        raw = args.batch_size
        train_cfg["batch_size"] = raw if raw == "full" else int(raw)
    if getattr(args, "lam", None) is not None:
        train_cfg["lambda"] = float(args.lam)
    if getattr(args, "train_sizes", None) is not None:
        cfg["train_sizes"] = [int(v) for v in args.train_sizes.split(",") if v]
    return resolve_config(cfg)


def _completed_epochs(out_dir: Path) -> int:
    history = out_dir / "loss_history.csv"
    if not history.is_file():
        return 0
    with open(history, "r", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return max(0, len(rows) - 1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="levset", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train the reversible transform")
    _add_config_options(p_train)

    p_resume = sub.add_parser("resume", help="continue training from a checkpoint")
    _add_config_options(p_resume)
    p_resume.add_argument("--checkpoint", required=True, help="checkpoint to continue from")
    p_resume.add_argument(
        "--start-epoch",
        type=int,
        default=None,
        help="epochs already completed (default: rows of out_dir/loss_history.csv)",
    )

    p_sens = sub.add_parser("sensitivity", help="per-coordinate sensitivity table")
    _add_config_options(p_sens, with_training_overrides=False)
    p_sens.add_argument("--checkpoint", required=True)

    p_rmse = sub.add_parser("rmse", help="surrogate-fit relative RMSE comparison")
    _add_config_options(p_rmse, with_training_overrides=False)
    p_rmse.add_argument("--checkpoint", required=True)
    p_rmse.add_argument("--train-sizes", help="comma-separated training sizes override")

    sub.add_parser("presets", help="list built-in experiment presets")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "presets":
            print(format_presets())
            return EXIT_OK

        cfg = _config_from_args(args)
        out_dir = Path(cfg["out_dir"])

        if args.command == "train":
            report = run_train(cfg)
        elif args.command == "resume":
            start = args.start_epoch if args.start_epoch is not None else _completed_epochs(out_dir)
            report = run_train(cfg, resume_from=args.checkpoint, start_epoch=start)
        elif args.command == "sensitivity":
            run_sensitivity(cfg, args.checkpoint)
            print(f"wrote {out_dir / 'sensitivity.csv'}")
            return EXIT_OK
        elif args.command == "rmse":
            run_rmse(cfg, args.checkpoint)
            print(f"wrote {out_dir / 'rmse.csv'}")
            return EXIT_OK
        else:  # pragma: no cover - argparse enforces the choices
            raise ConfigError(f"unknown command {args.command!r}")

        if report.aborted:
            print(f"training aborted: {report.abort_reason}", file=sys.stderr)
            print(f"last good parameters kept in {out_dir / 'checkpoint.json'}", file=sys.stderr)
            return EXIT_TRAINING_ABORT
        final = report.loss_history[-1][1] if report.loss_history else None
        if final is not None:
            print(
                f"trained {len(report.loss_history)} epochs in {report.wall_time:.1f}s; "
                f"final loss l1={final.l1:.6g} l2={final.l2:.6g} total={final.total:.6g}"
            )
        print(f"wrote {out_dir / 'checkpoint.json'} and {out_dir / 'loss_history.csv'}")
        return EXIT_OK
    except (ConfigError, CheckpointError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
