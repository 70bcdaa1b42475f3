"""Experiment orchestration: configuration, the pre-train / refine /
evaluate pipeline, and report emission.

An experiment compares model variants on one corpus.  Every variant
starts from the identical seeded initial model so refinement deltas are
attributable to refinement alone; the ``<optimizer>+sgde`` variants share
their optimizer's pre-training run and refine a copy of its result.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, fields
from pathlib import Path

from . import figures
from .data import DELIMITERS, load_ratings, split
from .errors import ConfigError, DivergenceError
from .model import TrainConfig, init_model, mae, rmse
from .pretrain import train_adam, train_sgd, write_epoch_trace
from .refine import DEConfig, refine_all, write_refine_trace
from .report import (EvalReport, ModelResult, write_metrics_csv,
                     write_ranks_csv, write_summary, write_timings_csv)

MODEL_CHOICES = ("sgd", "adam", "sgd+sgde", "adam+sgde")


@dataclass
class ExperimentSpec:
    """Complete description of one benchmark run."""

    data_path: str
    out_dir: str
    delimiter: str = "ws"
    dataset: str = "dataset"
    train_fraction: float = 0.8
    split_seed: int = 0
    models: tuple[str, ...] = ("sgd", "sgd+sgde")
    train: TrainConfig = field(default_factory=TrainConfig)
    refine: DEConfig = field(default_factory=DEConfig)

    def __post_init__(self):
        if not self.models:
            raise ConfigError("at least one model is required")
        for m in self.models:
            if m not in MODEL_CHOICES:
                raise ConfigError(f"unknown model {m!r}; choose from "
                                  f"{', '.join(MODEL_CHOICES)}")
        if self.delimiter not in DELIMITERS:
            raise ConfigError(f"unknown delimiter {self.delimiter!r}")

    def config_lines(self) -> list[str]:
        """Every hyperparameter as ``key = value`` lines for the report."""
        lines = [
            f"data = {self.data_path}",
            f"delimiter = {self.delimiter}",
            f"dataset = {self.dataset}",
            f"models = {','.join(self.models)}",
            f"train_fraction = {self.train_fraction}",
            f"split_seed = {self.split_seed}",
            f"out = {self.out_dir}",
        ]
        lines += [f"{_CONFIG_KEYS_TRAIN[f.name]} = {getattr(self.train, f.name)}"
                  for f in fields(TrainConfig)]
        lines += [f"{_CONFIG_KEYS_DE[f.name]} = {getattr(self.refine, f.name)}"
                  for f in fields(DEConfig)]
        return lines


# Config-file key per dataclass field.
_CONFIG_KEYS_TRAIN = {
    "eta": "eta", "lam": "lambda", "factors": "factors",
    "max_epochs": "max_epochs",
    "convergence_threshold": "convergence_threshold",
    "init_scale": "init_scale", "seed": "train_seed",
}
_CONFIG_KEYS_DE = {
    "pop_size": "pop_size", "scale_factor": "scale_factor",
    "beta_p": "beta_p", "beta_b": "beta_b", "beta_q": "beta_q",
    "beta_c": "beta_c", "max_iters": "max_de_iters",
    "fitness_epsilon": "fitness_epsilon", "seed": "de_seed",
    "passes": "passes",
}


def read_config(path) -> dict[str, str]:
    """Parse a flat ``key = value`` configuration file.

    Lines starting with ``#`` and blank lines are skipped; anything else
    must contain ``=``.
    """
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', "
                                  f"got {line!r}")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    return values


def spec_from_config(values: dict[str, str],
                     overrides: dict[str, str] | None = None) -> ExperimentSpec:
    """Build an :class:`ExperimentSpec` from config-file values plus
    command-line overrides (overrides win)."""
    merged = dict(values)
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    known = {"data", "delimiter", "dataset", "models", "train_fraction",
             "split_seed", "out"}
    known |= set(_CONFIG_KEYS_TRAIN.values()) | set(_CONFIG_KEYS_DE.values())
    for key in merged:
        if key not in known:
            raise ConfigError(f"unknown configuration key {key!r}")
    if "data" not in merged:
        raise ConfigError("missing required key 'data'")
    if "out" not in merged:
        raise ConfigError("missing required key 'out'")

    def build(cls, keymap):
        kwargs = {}
        for field_name, key in keymap.items():
            if key in merged:
                caster = type(getattr(cls(), field_name))
                try:
                    kwargs[field_name] = caster(merged[key])
                except ValueError:
                    raise ConfigError(f"bad value for {key!r}: "
                                      f"{merged[key]!r}") from None
        try:
            return cls(**kwargs)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    models = tuple(m.strip() for m in merged.get("models", "sgd,sgd+sgde").split(",")
                   if m.strip())
    try:
        return ExperimentSpec(
            data_path=merged["data"],
            out_dir=merged["out"],
            delimiter=merged.get("delimiter", "ws"),
            dataset=merged.get("dataset", "dataset"),
            train_fraction=float(merged.get("train_fraction", "0.8")),
            split_seed=int(merged.get("split_seed", "0")),
            models=models,
            train=build(TrainConfig, _CONFIG_KEYS_TRAIN),
            refine=build(DEConfig, _CONFIG_KEYS_DE),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def run_experiment(spec: ExperimentSpec) -> EvalReport:
    """Run the full pipeline and write all report files into
    ``spec.out_dir``.

    Divergence of one model is recorded in the report's failures and the
    remaining models still run.  All computed values are deterministic for
    fixed seeds; only the wall-clock timings vary.
    """
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = load_ratings(spec.data_path, spec.delimiter)
    train_m, test_m = split(data, spec.train_fraction, spec.split_seed)

    initial = init_model(spec.train, data.num_users, data.num_items)
    report = EvalReport()
    pretrained = {}
    epoch_traces = {}
    for optimizer in dict.fromkeys(name.partition("+")[0] for name in spec.models):
        model = initial.copy()
        trainer = train_sgd if optimizer == "sgd" else train_adam
        started = time.perf_counter()
        try:
            trace = trainer(model, train_m, test_m, spec.train)
        except DivergenceError as exc:
            report.failures[optimizer] = str(exc)
            continue
        pretrained[optimizer] = (model, time.perf_counter() - started)
        epoch_traces[optimizer] = trace
        write_epoch_trace(trace, out / f"trace_pretrain_{optimizer}.csv")

    for name in spec.models:
        optimizer, _, refined = name.partition("+")
        if optimizer not in pretrained:
            report.failures.setdefault(name, f"pre-training {optimizer} diverged")
            continue
        model, train_seconds = pretrained[optimizer]
        refine_seconds = 0.0
        if refined:
            model = model.copy()
            started = time.perf_counter()
            try:
                trace = refine_all(model, train_m, spec.train.lam, spec.refine)
            except DivergenceError as exc:
                report.failures[name] = str(exc)
                continue
            refine_seconds = time.perf_counter() - started
            write_refine_trace(trace, out / f"trace_refine_{name}.csv")
        report.results.append(ModelResult(
            name, spec.dataset, rmse(model, test_m), mae(model, test_m),
            train_seconds, refine_seconds))

    write_metrics_csv(report, out / "metrics.csv")
    write_timings_csv(report, out / "timings.csv")
    if report.results:
        write_ranks_csv(report, out / "ranks.csv")
        figures.plot_accuracy(report, out / "accuracy.png")
        figures.plot_runtime(report, out / "runtime.png")
    if epoch_traces:
        figures.plot_epoch_traces(epoch_traces, out / "pretrain.png")
    write_summary(report, out / "summary.txt", spec.config_lines())
    return report
