"""Confusion-matrix segmentation metrics.

Per class c, with TP/FP/FN/TN counted as a one-vs-rest problem:

- IoU = TP / (TP + FP + FN), and 1.0 for a class absent from both rasters
- Acc = (TP + TN) / (TP + FP + FN + TN), a binary accuracy
- Recall = TP / (TP + FN), and 1.0 for a class absent from the truth

mIoU, mAcc and mRecall are the class means.
"""

from dataclasses import dataclass
from typing import Any, Dict, List

import numpy as np

from .base import AnalysisError


@dataclass
class ConfusionMatrix:
    """``counts[t][p]`` = pixels with truth ``t`` predicted as ``p``."""

    counts: np.ndarray

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise AnalysisError(f"Confusion matrix must be square, got shape {counts.shape}")
        if counts.shape[0] < 2:
            raise AnalysisError("Confusion matrix needs at least 2 classes")
        if not np.issubdtype(counts.dtype, np.integer) or np.any(counts < 0):
            raise AnalysisError("Confusion counts must be nonnegative integers")
        self.counts = counts.astype(np.int64)

    @classmethod
    def empty(cls, classes: int) -> "ConfusionMatrix":
        return cls(np.zeros((classes, classes), dtype=np.int64))

    @property
    def classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def true_positives(self) -> np.ndarray:
        return np.diag(self.counts)

    def false_positives(self) -> np.ndarray:
        return self.counts.sum(axis=0) - self.true_positives()

    def false_negatives(self) -> np.ndarray:
        return self.counts.sum(axis=1) - self.true_positives()

    def true_negatives(self) -> np.ndarray:
        return (
            self.total
            - self.true_positives()
            - self.false_positives()
            - self.false_negatives()
        )

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        """Elementwise sum of two matrices over the same classes."""
        if other.classes != self.classes:
            raise AnalysisError(
                f"Cannot merge confusion matrices over {self.classes} and {other.classes} classes"
            )
        return ConfusionMatrix(self.counts + other.counts)


def confusion(pred: np.ndarray, truth: np.ndarray, classes: int) -> ConfusionMatrix:
    """
    Tally ``(truth, prediction)`` pixel pairs.

    Raises:
        AnalysisError: On a shape mismatch, non-integer labels or a label
            outside ``[0, classes)``
    """
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise AnalysisError(f"Prediction shape {pred.shape} differs from truth {truth.shape}")
    if pred.size == 0:
        raise AnalysisError("Label rasters are empty")
    for name, raster in (("prediction", pred), ("truth", truth)):
        if not np.issubdtype(raster.dtype, np.integer):
            raise AnalysisError(f"{name} labels must be integers, got {raster.dtype}")
        if raster.min() < 0 or raster.max() >= classes:
            raise AnalysisError(
                f"{name} labels must lie in [0, {classes}), "
                f"got range [{raster.min()}, {raster.max()}]"
            )

    flat = truth.reshape(-1).astype(np.int64) * classes + pred.reshape(-1).astype(np.int64)
    counts = np.bincount(flat, minlength=classes * classes).reshape(classes, classes)
    return ConfusionMatrix(counts)


def _require_pixels(cm: ConfusionMatrix) -> None:
    if cm.total == 0:
        raise AnalysisError("Confusion matrix is empty")


def class_iou(cm: ConfusionMatrix) -> np.ndarray:
    _require_pixels(cm)
    tp = cm.true_positives().astype(np.float64)
    union = tp + cm.false_positives() + cm.false_negatives()
    return np.where(union == 0, 1.0, tp / np.maximum(union, 1))


def class_accuracy(cm: ConfusionMatrix) -> np.ndarray:
    _require_pixels(cm)
    return (cm.true_positives() + cm.true_negatives()) / float(cm.total)


def class_recall(cm: ConfusionMatrix) -> np.ndarray:
    _require_pixels(cm)
    tp = cm.true_positives().astype(np.float64)
    support = tp + cm.false_negatives()
    return np.where(support == 0, 1.0, tp / np.maximum(support, 1))


def miou(cm: ConfusionMatrix) -> float:
    return float(class_iou(cm).mean())


def macc(cm: ConfusionMatrix) -> float:
    return float(class_accuracy(cm).mean())


def mrecall(cm: ConfusionMatrix) -> float:
    return float(class_recall(cm).mean())


def overall_accuracy(cm: ConfusionMatrix) -> float:
    _require_pixels(cm)
    return float(cm.true_positives().sum()) / float(cm.total)


def per_class_records(cm: ConfusionMatrix) -> List[Dict[str, Any]]:
    """One row per class for tabular reports."""
    iou, acc, rec = class_iou(cm), class_accuracy(cm), class_recall(cm)
    tp, fp, fn, tn = (
        cm.true_positives(),
        cm.false_positives(),
        cm.false_negatives(),
        cm.true_negatives(),
    )
    return [
        {
            "class": c,
            "tp": int(tp[c]),
            "fp": int(fp[c]),
            "fn": int(fn[c]),
            "tn": int(tn[c]),
            "iou": float(iou[c]),
            "acc": float(acc[c]),
            "recall": float(rec[c]),
        }
        for c in range(cm.classes)
    ]


def summary(cm: ConfusionMatrix) -> Dict[str, Any]:
    return {
        "classes": cm.classes,
        "pixels": cm.total,
        "miou": miou(cm),
        "macc": macc(cm),
        "mrecall": mrecall(cm),
        "overall_accuracy": overall_accuracy(cm),
    }
