"""Confusion matrices, micro-averaged P/R/F1 and per-class recall."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import kernels


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Rows are true classes, columns predicted classes."""

    counts: np.ndarray
    class_names: tuple = ()

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError(f"confusion matrix must be square, got {c.shape}")
        if np.any(c < 0):
            raise ValueError("confusion counts must be non-negative")
        names = tuple(self.class_names) or tuple(str(i) for i in range(c.shape[0]))
        if len(names) != c.shape[0]:
            raise ValueError("class_names length does not match the matrix")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)
        object.__setattr__(self, "class_names", names)

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class MetricsReport:
    micro_precision: float
    micro_recall: float
    micro_f1: float
    per_class_recall: tuple

    def to_dict(self):
        return {"micro_precision": self.micro_precision, "micro_recall": self.micro_recall,
                "micro_f1": self.micro_f1, "per_class_recall": list(self.per_class_recall)}


def argmax_predictions(logits) -> np.ndarray:
    """Row-wise argmax; ties resolve to the lowest class index."""
    return np.argmax(np.atleast_2d(np.asarray(logits)), axis=1)


def confusion_matrix(preds, labels, n_classes: int, class_names=()) -> ConfusionMatrix:
    preds = np.asarray(preds, dtype=np.int64).ravel()
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if preds.shape != labels.shape:
        raise ValueError(f"{preds.size} predictions vs {labels.size} labels")
    for name, v in (("prediction", preds), ("label", labels)):
        if v.size and (v.min() < 0 or v.max() >= n_classes):
            raise ValueError(f"{name} index out of range for C={n_classes}")
    return ConfusionMatrix(kernels.confusion_counts(preds, labels, n_classes), class_names)


def row_normalize(cm: ConfusionMatrix) -> np.ndarray:
    c = cm.counts.astype(np.float64)
    sums = c.sum(axis=1, keepdims=True)
    return np.divide(c, sums, out=np.zeros_like(c), where=sums > 0)


def micro_counts(counts):
    """Aggregate (TP, FP, FN) over classes; works on stacks of (..., C, C)."""
    c = np.asarray(counts, dtype=np.int64)
    tp = np.trace(c, axis1=-2, axis2=-1)
    fp = c.sum(axis=-2).sum(axis=-1) - tp
    fn = c.sum(axis=-1).sum(axis=-1) - tp
    return tp, fp, fn


def micro_f1_counts(counts):
    """Micro-F1 of one (C, C) count matrix or a stack of them.

    2PR / (P + R) with P = TP/(TP+FP), R = TP/(TP+FN) simplifies to
    2TP / (2TP + FP + FN); evaluating that ratio of integers gives the
    exactly rounded value with a single division.
    """
    tp, fp, fn = micro_counts(counts)
    num = 2 * tp
    den = num + fp + fn
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, num / np.where(den > 0, den, 1), 0.0)


def _micro_prf(cm: ConfusionMatrix):
    if cm.total == 0:
        raise ValueError("micro-F1 of an empty confusion matrix is undefined")
    tp, fp, fn = (int(v) for v in micro_counts(cm.counts))
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    return p, r, float(micro_f1_counts(cm.counts))


def micro_f1(cm: ConfusionMatrix) -> float:
    return _micro_prf(cm)[2]


def per_class_recall(cm: ConfusionMatrix) -> np.ndarray:
    c = cm.counts.astype(np.float64)
    sums = c.sum(axis=1)
    return np.divide(np.diag(c), sums, out=np.zeros(cm.n_classes), where=sums > 0)


def metrics_report(cm: ConfusionMatrix) -> MetricsReport:
    p, r, f1 = _micro_prf(cm)
    return MetricsReport(float(p), float(r), float(f1),
                         tuple(float(v) for v in per_class_recall(cm)))


def write_confusion_csv(path, cm: ConfusionMatrix, normalized: bool = True) -> None:
    """Class-name header row/column; 2-decimal fractions or raw counts."""
    values = row_normalize(cm) if normalized else cm.counts
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([""] + list(cm.class_names))
        for name, row in zip(cm.class_names, values):
            w.writerow([name] + [f"{v:.2f}" if normalized else str(int(v)) for v in row])


def read_confusion_counts_csv(path) -> ConfusionMatrix:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    names = tuple(rows[0][1:])
    counts = np.asarray([[int(v) for v in r[1:]] for r in rows[1:]], dtype=np.int64)
    return ConfusionMatrix(counts, names)
