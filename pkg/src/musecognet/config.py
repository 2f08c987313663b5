"""Flat key-value run configuration shared by the command-line tools.

A config file is a list of ``key = value`` lines (``#`` starts a comment).
Keys are the fields of :class:`ModelConfig` and :class:`TrainConfig`
(``lambda`` for the SSL weight) plus the run-level keys in
:data:`RUN_KEYS`. Command-line overrides are applied on top of the file and
the merged result is validated as a whole before anything runs.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .data_io import DEFAULT_BINS
from .model import ModelConfig, ShapeError
from .training import TrainConfig, TrainingError

RUN_KEYS = {
    "data": str,
    "out": str,
    "schema": str,
    "jobs": int,
    "f1_average": str,
    "label_bins": tuple,
}

_TRAIN_ALIASES = {"lambda": "lam"}


class ConfigError(ValueError):
    pass


def _field_types(cls) -> dict[str, type]:
    out = {}
    for f in dataclasses.fields(cls):
        default = f.default
        out[f.name] = type(default) if default is not dataclasses.MISSING else str
    return out


_MODEL_TYPES = _field_types(ModelConfig)
_TRAIN_TYPES = {("lambda" if k == "lam" else k): v for k, v in _field_types(TrainConfig).items()}


def _convert(key: str, raw: str, kind: type):
    raw = raw.strip()
    try:
        if kind is tuple:
            return tuple(int(p) for p in raw.split(",") if p.strip())
        if kind is bool:
            lowered = raw.lower()
            if lowered not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return lowered in ("true", "1", "yes")
        return kind(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind.__name__}") from None


def known_keys() -> dict[str, type]:
    return {**_MODEL_TYPES, **_TRAIN_TYPES, **RUN_KEYS}


def read_config_file(path: str | Path) -> dict[str, str]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(delimiters=("=",), comment_prefixes=("#",), interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string("[run]\n" + path.read_text())
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return dict(parser["run"])


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: str | None = None
    out: str | None = None
    schema: str | None = None
    jobs: int = 1
    f1_average: str = "macro"
    label_bins: tuple[int, ...] = DEFAULT_BINS


def build_config(file_values: dict[str, str] | None = None, overrides: dict | None = None) -> RunConfig:
    """Merge file values and overrides (overrides win) and validate everything.

    Every problem found is reported at once in a single :class:`ConfigError`.
    """
    merged: dict[str, object] = {}
    errors = []
    types = known_keys()
    for source in (file_values or {}, {k: v for k, v in (overrides or {}).items() if v is not None}):
        for key, value in source.items():
            if key not in types:
                errors.append(f"unknown key {key!r}")
                continue
            try:
                merged[key] = _convert(key, value, types[key]) if isinstance(value, str) else value
            except ConfigError as exc:
                errors.append(str(exc))

    model_kwargs = {k: v for k, v in merged.items() if k in _MODEL_TYPES}
    train_kwargs = {_TRAIN_ALIASES.get(k, k): v for k, v in merged.items() if k in _TRAIN_TYPES}
    run_kwargs = {k: v for k, v in merged.items() if k in RUN_KEYS}
    model = train = None
    try:
        model = ModelConfig(**model_kwargs)
    except (ShapeError, TypeError, ValueError) as exc:
        errors.append(f"model: {exc}")
    try:
        train = TrainConfig(**train_kwargs)
    except (TrainingError, TypeError, ValueError) as exc:
        errors.append(f"train: {exc}")
    if run_kwargs.get("jobs", 1) < 1:
        errors.append("jobs must be >= 1")
    if run_kwargs.get("f1_average", "macro") not in ("macro", "micro", "weighted"):
        errors.append("f1_average must be macro, micro or weighted")
    bins = run_kwargs.get("label_bins", DEFAULT_BINS)
    if len(bins) != 3 or list(bins) != sorted(bins) or bins[-1] != 9:
        errors.append(f"label_bins must be 3 increasing upper bounds ending at 9, got {bins}")
    if errors:
        raise ConfigError("; ".join(errors))
    return RunConfig(model=model, train=train, **run_kwargs)
