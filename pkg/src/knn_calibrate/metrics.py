"""Classification metrics: accuracy, per-class P/R/F1, macro/micro F1, confusion."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .store import DataError


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    macro_f1: float
    micro_f1: float
    per_class_precision: tuple[float, ...]
    per_class_recall: tuple[float, ...]
    per_class_f1: tuple[float, ...]
    n_examples: int
    confusion: np.ndarray  # (C, C), rows = gold, columns = predicted

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "micro_f1": self.micro_f1,
            "per_class_precision": list(self.per_class_precision),
            "per_class_recall": list(self.per_class_recall),
            "per_class_f1": list(self.per_class_f1),
            "n_examples": self.n_examples,
            "confusion": self.confusion.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")


def evaluate(predictions, gold, class_count: int) -> EvalReport:
    """Standard multiclass metrics; macro-F1 averages only classes present in gold."""
    predictions = np.asarray(predictions, dtype=np.int64)
    gold = np.asarray(gold, dtype=np.int64)
    if predictions.shape != gold.shape or predictions.ndim != 1:
        raise DataError(
            f"predictions and gold must be equal-length 1-D, got "
            f"{predictions.shape} vs {gold.shape}"
        )
    for name, arr in (("predictions", predictions), ("gold", gold)):
        if ((arr < 0) | (arr >= class_count)).any():
            raise DataError(f"{name} contain a label outside [0, {class_count})")

    n = gold.shape[0]
    confusion = np.zeros((class_count, class_count), dtype=np.int64)
    np.add.at(confusion, (gold, predictions), 1)

    tp = np.diag(confusion).astype(np.float64)
    pred_total = confusion.sum(axis=0).astype(np.float64)
    gold_total = confusion.sum(axis=1).astype(np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(pred_total > 0, tp / pred_total, 0.0)
        recall = np.where(gold_total > 0, tp / gold_total, 0.0)
        denom = precision + recall
        f1 = np.where(denom > 0, 2 * precision * recall / denom, 0.0)

    present = gold_total > 0
    accuracy = float(tp.sum() / n)
    return EvalReport(
        accuracy=accuracy,
        macro_f1=float(f1[present].mean()),
        micro_f1=accuracy,  # single-label multiclass: micro P = micro R = accuracy
        per_class_precision=tuple(precision.tolist()),
        per_class_recall=tuple(recall.tolist()),
        per_class_f1=tuple(f1.tolist()),
        n_examples=n,
        confusion=confusion,
    )
