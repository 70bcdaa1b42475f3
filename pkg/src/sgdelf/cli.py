"""Command-line interface.

Subcommands::

    train    pre-train a factor model on a corpus split
    refine   refine a saved model with the sequential-group DE pass
    eval     RMSE/MAE of a saved model on a corpus or split half
    bench    full experiment: pre-train, refine, evaluate, report

Exit codes: 0 success, 1 usage error, 2 data error, 3 training divergence.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from .data import DELIMITERS, load_ratings, split
from .errors import ConfigError, DataError, DivergenceError
from .experiment import (MODEL_CHOICES, read_config, run_experiment,
                         spec_from_config)
from .model import init_model, load_model, mae, rmse, save_model
from .pretrain import train_adam, train_sgd, write_epoch_trace
from .refine import refine_all, write_refine_trace

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGED = 3


class _Parser(argparse.ArgumentParser):
    """argparse defaults to exit code 2 on usage errors; we reserve 2 for
    data errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_common(parser, with_models=False):
    parser.add_argument("--config", help="flat 'key = value' configuration file")
    parser.add_argument("--data", help="rating corpus path")
    parser.add_argument("--delimiter", choices=sorted(DELIMITERS),
                        help="field delimiter of the corpus (default ws)")
    parser.add_argument("--seed", type=int,
                        help="base seed for split, training, and refinement")
    parser.add_argument("--out", help="output directory")
    if with_models:
        parser.add_argument("--models",
                            help="comma list from: " + ", ".join(MODEL_CHOICES))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sgdelf",
                     description="Latent factor analysis with "
                                 "differential-evolution refinement.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="pre-train a factor model")
    _add_common(p)
    p.add_argument("--optimizer", choices=("sgd", "adam"), default="sgd")
    p.add_argument("--eta", type=float, help="learning rate")
    p.add_argument("--lambda", dest="lam", type=float,
                   help="L2 regularization strength")
    p.add_argument("--factors", type=int, help="latent dimension")
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--train-fraction", type=float,
                   help="fraction used for training; the rest drives the "
                        "stopping rule (default 0.8)")

    p = sub.add_parser("refine", help="refine a saved model")
    _add_common(p)
    p.add_argument("--model", required=True, help="saved model file")
    p.add_argument("--lambda", dest="lam", type=float,
                   help="L2 strength of the fitness function")
    p.add_argument("--pop-size", type=int)
    p.add_argument("--scale-factor", type=float)
    p.add_argument("--de-iters", type=int, dest="max_de_iters")
    p.add_argument("--passes", type=int)

    p = sub.add_parser("eval", help="evaluate a saved model")
    _add_common(p)
    p.add_argument("--model", required=True, help="saved model file")
    p.add_argument("--train-fraction", type=float,
                   help="if given, split the corpus first and evaluate one half")
    p.add_argument("--on", choices=("train", "test"), default="test",
                   help="which split half to evaluate (with --train-fraction)")

    p = sub.add_parser("bench", help="run a full benchmark experiment")
    _add_common(p, with_models=True)
    p.add_argument("--dataset", help="dataset label used in reports")
    p.add_argument("--train-fraction", type=float)
    return parser


def _merged_config(args, extra_keys=()) -> dict[str, str]:
    """Config file values with CLI overrides applied on top."""
    values = read_config(args.config) if args.config else {}
    overrides = {
        "data": args.data,
        "delimiter": args.delimiter,
        "out": args.out,
    }
    if args.seed is not None:
        # One --seed fans out to every seeded stage.
        for key in ("split_seed", "train_seed", "de_seed"):
            overrides[key] = str(args.seed)
    for key in extra_keys:
        value = getattr(args, key.replace("-", "_"), None)
        if value is not None:
            overrides[key] = str(value)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return values


def _cmd_train(args) -> int:
    values = _merged_config(args, ("eta", "factors", "max_epochs",
                                   "train_fraction"))
    if args.lam is not None:
        values["lambda"] = str(args.lam)
    values.setdefault("out", "out")
    values.setdefault("models", args.optimizer)
    if "data" not in values:
        raise ConfigError("--data (or a config file with 'data') is required")
    spec = spec_from_config(values)
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    data = load_ratings(spec.data_path, spec.delimiter)
    train_m, valid_m = split(data, spec.train_fraction, spec.split_seed)
    model = init_model(spec.train, data.num_users, data.num_items)
    trainer = train_sgd if args.optimizer == "sgd" else train_adam
    started = time.perf_counter()
    trace = trainer(model, train_m, valid_m, spec.train)
    seconds = time.perf_counter() - started
    save_model(model, out / "model.txt")
    write_epoch_trace(trace, out / "trace_pretrain.csv")
    final = trace[-1] if trace else None
    if final:
        print(f"trained {args.optimizer}: epochs={final.epoch} "
              f"train_rmse={final.train_rmse:.4f} "
              f"valid_rmse={final.valid_rmse:.4f} seconds={seconds:.2f}")
    print(f"wrote {out / 'model.txt'}")
    return EXIT_OK


def _cmd_refine(args) -> int:
    values = _merged_config(args, ("pop_size", "scale_factor",
                                   "max_de_iters", "passes"))
    if args.lam is not None:
        values["lambda"] = str(args.lam)
    values.setdefault("out", "out")
    if "data" not in values:
        raise ConfigError("--data (or a config file with 'data') is required")
    spec = spec_from_config(values)
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    model = load_model(args.model)
    train_m = load_ratings(spec.data_path, spec.delimiter)
    started = time.perf_counter()
    trace = refine_all(model, train_m, spec.train.lam, spec.refine)
    seconds = time.perf_counter() - started
    save_model(model, out / "model_refined.txt")
    write_refine_trace(trace, out / "trace_refine.csv")
    improved = sum(1 for t in trace if t.final_fitness < t.initial_fitness)
    print(f"refined {len(trace)} sub-groups ({improved} improved) "
          f"in {seconds:.2f} s")
    print(f"wrote {out / 'model_refined.txt'}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    delimiter = args.delimiter or "ws"
    if args.data is None:
        raise ConfigError("--data is required")
    model = load_model(args.model)
    data = load_ratings(args.data, delimiter)
    if args.train_fraction is not None:
        train_m, test_m = split(data, args.train_fraction,
                                args.seed if args.seed is not None else 0)
        data = train_m if args.on == "train" else test_m
    print(f"ratings={len(data)} rmse={rmse(model, data):.4f} "
          f"mae={mae(model, data):.4f}")
    return EXIT_OK


def _cmd_bench(args) -> int:
    values = _merged_config(args, ("models", "dataset", "train_fraction"))
    if "data" not in values:
        raise ConfigError("--data (or a config file with 'data') is required")
    values.setdefault("out", "out")
    spec = spec_from_config(values)
    report = run_experiment(spec)
    for r in report.results:
        print(f"{r.model}: rmse={r.rmse:.4f} mae={r.mae:.4f} "
              f"train_s={r.train_seconds:.2f} refine_s={r.refine_seconds:.2f}")
    for model, message in sorted(report.failures.items()):
        print(f"{model}: DIVERGED ({message})", file=sys.stderr)
    print(f"report written to {spec.out_dir}")
    return EXIT_DIVERGED if report.failures else EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"train": _cmd_train, "refine": _cmd_refine,
                "eval": _cmd_eval, "bench": _cmd_bench}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"sgdelf: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"sgdelf: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DivergenceError as exc:
        print(f"sgdelf: divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
