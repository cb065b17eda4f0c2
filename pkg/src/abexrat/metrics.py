"""Confusion matrix and per-class / aggregated precision, recall, F1.

Conventions: rows are true classes, columns predicted; any 0/0 in a
score is defined as 0; macro averages run over every class in the
vocabulary (zero-support included) while weighted averages are
support-weighted over classes that actually occur.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from abexrat.errors import DataError

REPORT_FORMAT_VERSION = 1


@dataclass
class ClassScore:
    label: str
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class Aggregate:
    precision: float
    recall: float
    f1: float


@dataclass
class EvalReport:
    labels: list[str]
    confusion: np.ndarray  # (C, C) int64 counts
    per_class: list[ClassScore]
    macro: Aggregate
    weighted: Aggregate

    def to_dict(self) -> dict:
        return {
            "format_version": REPORT_FORMAT_VERSION,
            "labels": self.labels,
            "confusion": self.confusion.tolist(),
            "per_class": [
                {
                    "label": c.label,
                    "precision": c.precision,
                    "recall": c.recall,
                    "f1": c.f1,
                    "support": c.support,
                }
                for c in self.per_class
            ],
            "macro": vars(self.macro).copy(),
            "weighted": vars(self.weighted).copy(),
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def save_confusion_csv(self, path) -> None:
        """Raw counts; header row carries the class labels."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("label," + ",".join(self.labels) + "\n")
            for label, row in zip(self.labels, self.confusion):
                fh.write(label + "," + ",".join(str(int(v)) for v in row) + "\n")


def confusion_matrix(true: np.ndarray, pred: np.ndarray, n_classes: int) -> np.ndarray:
    """Count matrix with rows=true, cols=predicted."""
    true = np.asarray(true, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if true.shape != pred.shape or true.ndim != 1:
        raise DataError(f"label vectors disagree: {true.shape} vs {pred.shape}")
    if true.size and (
        true.min() < 0 or true.max() >= n_classes or pred.min() < 0 or pred.max() >= n_classes
    ):
        raise DataError(f"labels must lie in [0, {n_classes})")
    conf = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(conf, (true, pred), 1)
    return conf


def row_normalize(confusion: np.ndarray) -> np.ndarray:
    """Row-wise normalized view; all-zero rows stay zero."""
    conf = np.asarray(confusion, dtype=np.float64)
    sums = conf.sum(axis=1, keepdims=True)
    return np.divide(conf, sums, out=np.zeros_like(conf), where=sums > 0)


def per_class_prf(confusion: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(precision, recall, f1, support) arrays; 0/0 is defined as 0."""
    conf = np.asarray(confusion, dtype=np.int64)
    if conf.ndim != 2 or conf.shape[0] != conf.shape[1]:
        raise DataError(f"confusion matrix must be square, got {conf.shape}")
    tp = np.diag(conf).astype(np.float64)
    pred_totals = conf.sum(axis=0).astype(np.float64)
    support = conf.sum(axis=1)
    true_totals = support.astype(np.float64)
    precision = np.divide(tp, pred_totals, out=np.zeros_like(tp), where=pred_totals > 0)
    recall = np.divide(tp, true_totals, out=np.zeros_like(tp), where=true_totals > 0)
    pr = precision + recall
    f1 = np.divide(2 * precision * recall, pr, out=np.zeros_like(tp), where=pr > 0)
    return precision, recall, f1, support


def aggregate_scores(
    precision: np.ndarray, recall: np.ndarray, f1: np.ndarray, support: np.ndarray
) -> tuple[Aggregate, Aggregate]:
    """(macro, weighted) aggregates of per-class scores."""
    if precision.size == 0:
        raise DataError("no classes to aggregate")
    macro = Aggregate(
        float(precision.mean()), float(recall.mean()), float(f1.mean())
    )
    total = support.sum()
    if total == 0:
        raise DataError("all classes have zero support")
    w = support / total
    weighted = Aggregate(
        float((precision * w).sum()), float((recall * w).sum()), float((f1 * w).sum())
    )
    return macro, weighted


def evaluate(true: np.ndarray, pred: np.ndarray, labels: list[str]) -> EvalReport:
    """Full report for predictions indexed against `labels`."""
    conf = confusion_matrix(true, pred, len(labels))
    precision, recall, f1, support = per_class_prf(conf)
    macro, weighted = aggregate_scores(precision, recall, f1, support)
    per_class = [
        ClassScore(lab, float(p), float(r), float(f), int(s))
        for lab, p, r, f, s in zip(labels, precision, recall, f1, support)
    ]
    return EvalReport(list(labels), conf, per_class, macro, weighted)


def macro_f1(true: np.ndarray, pred: np.ndarray, n_classes: int) -> float:
    """Unweighted mean F1 over all classes; the model-selection metric."""
    _, _, f1, _ = per_class_prf(confusion_matrix(true, pred, n_classes))
    return float(f1.mean())
