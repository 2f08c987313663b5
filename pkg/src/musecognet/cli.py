"""``musecognet`` command-line tool.

Exit status: 0 success, 1 usage or configuration error, 2 data error,
3 gradient check failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import checkpoint
from .config import ConfigError, RunConfig, build_config, read_config_file
from .data_io import DataError, load_dataset, read_schema, write_synthetic
from .evaluation import report, run_loso
from .model import ModelConfig
from .signal_prep import SignalError
from .training import grad_check, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CHECK = 0, 1, 2, 3
GRADCHECK_THRESHOLD = 1e-4

log = logging.getLogger("musecognet")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _setup_logging() -> None:
    level = os.environ.get("MUSECOG_LOG", "info").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    if level not in levels:
        raise UsageError(f"MUSECOG_LOG must be one of error, info, debug; got {level!r}")
    logging.basicConfig(level=levels[level], format="%(levelname)s %(name)s: %(message)s")


def _parse_sets(items: list[str] | None) -> dict[str, str]:
    out = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        out[key.strip()] = value
    return out


def _run_config(args) -> RunConfig:
    file_values = read_config_file(args.config) if args.config else {}
    overrides = _parse_sets(getattr(args, "set", None))
    for flag, key in (
        ("seed", "seed"),
        ("lam", "lambda"),
        ("epochs", "epochs"),
        ("batch_size", "batch_size"),
        ("lr", "lr"),
        ("jobs", "jobs"),
        ("data", "data"),
        ("schema", "schema"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    return build_config(file_values, overrides)


def _load_windows(cfg: RunConfig):
    if cfg.data is None:
        raise UsageError("no data directory given (--data or 'data' config key)")
    data_dir = Path(cfg.data)
    if not data_dir.is_dir():
        raise DataError(f"data directory not found: {data_dir}")
    schema = read_schema(cfg.schema) if cfg.schema else None
    windows = load_dataset(data_dir, schema=schema, bins=cfg.label_bins)
    log.info("loaded %d windows from %d subjects", len(windows), len({w.subject_id for w in windows}))
    return windows


def _header(cfg: RunConfig) -> str:
    t = cfg.train
    return (
        f"lr={t.lr} epochs={t.epochs} batch_size={t.batch_size} lambda={t.lam} "
        f"weight_decay={t.weight_decay} seed={t.seed}"
    )


def cmd_synth(args) -> int:
    if args.subjects < 2:
        raise UsageError("--subjects must be at least 2 (LOSO needs two subjects)")
    if args.per_class < 1:
        raise UsageError("--per-class must be at least 1")
    try:
        paths = write_synthetic(args.out, args.subjects, args.per_class, args.seed)
    except OSError as exc:
        raise DataError(f"cannot write to {args.out}: {exc}") from None
    print(f"wrote {len(paths) - 1} recordings and {paths[-1]}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _run_config(args)
    windows = _load_windows(cfg)
    print(_header(cfg))
    out = Path(args.out)
    history_path = Path(args.history) if args.history else out.with_suffix(".history.jsonl")
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(history_path, "w", encoding="utf-8") as hist:
        params, history = train(windows, cfg.model, cfg.train, history_stream=hist)
    checkpoint.save(out, params, cfg.model)
    last = history[-1]
    print(
        f"epoch {last.epoch}: ce={last.ce:.4f} pool={last.pool:.4f} total={last.total:.4f} "
        f"train_accuracy={last.train_accuracy:.2f}"
    )
    print(f"checkpoint: {out}\nhistory: {history_path}")
    return EXIT_OK


def cmd_loso(args) -> int:
    cfg = _run_config(args)
    windows = _load_windows(cfg)
    print(_header(cfg) + f" jobs={cfg.jobs}")
    result = run_loso(windows, cfg.model, cfg.train, jobs=cfg.jobs, f1_average=cfg.f1_average)
    table, doc = report(result)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(table, encoding="utf-8")
    (out / "report.json").write_text(doc, encoding="utf-8")
    print(f"ablation: {result.ablation}")
    print(table, end="")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    result = grad_check(ModelConfig.tiny(), seed=args.seed)
    print(f"max relative error: {result.max_rel_error:.3e} (threshold {GRADCHECK_THRESHOLD:.0e})")
    return EXIT_OK if result.max_rel_error < GRADCHECK_THRESHOLD else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="musecognet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic dataset")
    p.add_argument("--subjects", type=int, required=True)
    p.add_argument("--per-class", type=int, required=True, dest="per_class")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    def common(p):
        p.add_argument("--data")
        p.add_argument("--config")
        p.add_argument("--schema", help="canonical=source column mapping file")
        p.add_argument("--lambda", type=float, dest="lam")
        p.add_argument("--seed", type=int)
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch-size", type=int, dest="batch_size")
        p.add_argument("--lr", type=float)
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")

    p = sub.add_parser("train", help="train on all windows and save a checkpoint")
    common(p)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--history", help="JSON-lines history path (default: next to checkpoint)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("loso", help="leave-one-subject-out evaluation")
    common(p)
    p.add_argument("--jobs", type=int)
    p.add_argument("--out", required=True, help="report directory")
    p.set_defaults(func=cmd_loso)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check on the tiny model")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _setup_logging()
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, SignalError, checkpoint.CheckpointError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
