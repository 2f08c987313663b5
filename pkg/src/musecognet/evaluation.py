"""Metrics, the leave-one-subject-out runner and reports."""

from __future__ import annotations

import dataclasses
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data_io import LabeledWindow, loso_splits
from .model import ModelConfig, forward
from .training import TrainConfig, train

ABLATION_TAGS = {True: "full", False: "W/O SSL"}


class MetricError(ValueError):
    pass


def predict_logits(logits: np.ndarray) -> np.ndarray:
    """Argmax per row; ``np.argmax`` returns the first maximum, so ties go to the lowest class."""
    return np.argmax(np.asarray(logits), axis=-1)


def predict(
    params: dict[str, np.ndarray],
    windows: Sequence[LabeledWindow],
    config: ModelConfig,
    batch_size: int = 256,
) -> list[int]:
    preds = []
    for i in range(0, len(windows), batch_size):
        x = np.stack([w.segment.data for w in windows[i : i + batch_size]])
        logits, _, _ = forward(x, params, config, mode="infer")
        preds.extend(int(p) for p in predict_logits(logits))
    return preds


def _check(preds, labels) -> tuple[np.ndarray, np.ndarray]:
    preds, labels = np.asarray(preds), np.asarray(labels)
    if len(preds) == 0:
        raise MetricError("empty predictions")
    if preds.shape != labels.shape:
        raise MetricError(f"length mismatch: {len(preds)} predictions vs {len(labels)} labels")
    return preds, labels


def accuracy(preds, labels) -> float:
    preds, labels = _check(preds, labels)
    return 100.0 * float(np.mean(preds == labels))


def confusion_matrix(preds, labels, num_classes: int = 3) -> np.ndarray:
    """Counts with rows = true class, columns = predicted class."""
    preds, labels = _check(preds, labels)
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (labels, preds), 1)
    return cm


def f1_score(preds, labels, num_classes: int = 3, average: str = "macro") -> float:
    """F1 in percent.

    ``macro`` averages per-class F1 over all ``num_classes`` classes; a class
    absent from both predictions and labels scores 0 and still counts.
    ``weighted`` weights per-class F1 by support, ``micro`` pools counts.
    """
    cm = confusion_matrix(preds, labels, num_classes)
    tp = np.diag(cm).astype(float)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    if average == "micro":
        return 100.0 * 2 * tp.sum() / (2 * tp.sum() + fp.sum() + fn.sum())
    denom = 2 * tp + fp + fn
    per_class = np.divide(2 * tp, denom, out=np.zeros_like(tp), where=denom > 0)
    if average == "macro":
        return 100.0 * float(per_class.mean())
    if average == "weighted":
        support = cm.sum(axis=1)
        return 100.0 * float((per_class * support).sum() / support.sum())
    raise MetricError(f"unknown F1 averaging {average!r}")


def macro_f1(preds, labels, num_classes: int = 3) -> float:
    return f1_score(preds, labels, num_classes, "macro")


@dataclass(frozen=True)
class FoldResult:
    held_out_subject: str
    accuracy: float
    macro_f1: float
    confusion: np.ndarray


@dataclass(frozen=True)
class LosoResult:
    folds: list[FoldResult]
    accuracy: float
    macro_f1: float
    model_config: ModelConfig
    train_config: TrainConfig
    f1_average: str = "macro"

    @property
    def ablation(self) -> str:
        return ABLATION_TAGS[self.train_config.lam != 0]


def _run_fold(args) -> FoldResult:
    fold_index, fold, model_config, train_config, f1_average = args
    fold_cfg = dataclasses.replace(train_config, seed=train_config.seed ^ fold_index)
    params, _ = train(fold.train, model_config, fold_cfg)
    preds = predict(params, fold.test, model_config)
    labels = [w.label for w in fold.test]
    return FoldResult(
        held_out_subject=fold.held_out_subject,
        accuracy=accuracy(preds, labels),
        macro_f1=f1_score(preds, labels, model_config.num_classes, f1_average),
        confusion=confusion_matrix(preds, labels, model_config.num_classes),
    )


def run_loso(
    windows: Sequence[LabeledWindow],
    model_config: ModelConfig,
    train_config: TrainConfig,
    lam: float | None = None,
    jobs: int = 1,
    f1_average: str = "macro",
) -> LosoResult:
    """Train and test once per held-out subject.

    Fold ``i`` trains a freshly initialized model with seed ``seed ^ i``.
    ``lam`` overrides ``train_config.lam``; ``lam=0`` is the ablation without
    the reconstruction loss. The summary is the unweighted mean over folds.
    """
    if lam is not None:
        train_config = dataclasses.replace(train_config, lam=lam)
    folds = loso_splits(windows)
    tasks = [(i, f, model_config, train_config, f1_average) for i, f in enumerate(folds)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_fold, tasks))
    else:
        results = [_run_fold(t) for t in tasks]
    return LosoResult(
        folds=results,
        accuracy=float(np.mean([r.accuracy for r in results])),
        macro_f1=float(np.mean([r.macro_f1 for r in results])),
        model_config=model_config,
        train_config=train_config,
        f1_average=f1_average,
    )


# ---------------------------------------------------------------------------
# reporting


def _jsonable(v):
    return list(v) if isinstance(v, tuple) else v


def report_dict(result: LosoResult) -> dict:
    config = {k: _jsonable(v) for k, v in dataclasses.asdict(result.model_config).items()}
    for k, v in dataclasses.asdict(result.train_config).items():
        if k != "seed":
            config["lambda" if k == "lam" else k] = v
    config["f1_average"] = result.f1_average
    return {
        "config": config,
        "seed": result.train_config.seed,
        "ablation": result.ablation,
        "folds": [
            {
                "subject": f.held_out_subject,
                "accuracy": f.accuracy,
                "macro_f1": f.macro_f1,
                "confusion": f.confusion.tolist(),
            }
            for f in result.folds
        ],
        "summary": {"accuracy": result.accuracy, "macro_f1": result.macro_f1},
    }


def report_json(result: LosoResult) -> str:
    return json.dumps(report_dict(result), indent=2) + "\n"


def report_table(result: LosoResult) -> str:
    if not result.folds:
        raise MetricError("no folds to report")
    rows = [f"{'subject':<12} {'accuracy':>9} {'macro_f1':>9}"]
    rows.append("-" * len(rows[0]))
    for f in result.folds:
        rows.append(f"{f.held_out_subject:<12} {f.accuracy:9.2f} {f.macro_f1:9.2f}")
    rows.append("-" * len(rows[0]))
    rows.append(f"{'MEAN':<12} {result.accuracy:9.2f} {result.macro_f1:9.2f}")
    return "\n".join(rows) + "\n"


def report(result: LosoResult) -> tuple[str, str]:
    """Text table and JSON document for a LOSO run."""
    return report_table(result), report_json(result)
