"""Metrics suite: segmentation scores for a pair of label fixtures."""

import logging
from pathlib import Path

import numpy as np

from attnmerge.analysis import AnalysisError, class_accuracy, class_iou, class_recall, confusion, per_class_records, summary
from attnmerge.config import Config
from attnmerge.tensor import FixtureError, read_fixture

from .base import CheckResult, Suite, SuiteError, SuiteResult, Table
from .registry import suite_registry

logger = logging.getLogger(__name__)

PER_CLASS_COLUMNS = ("class", "tp", "fp", "fn", "tn", "iou", "acc", "recall")


def read_labels(path: str | Path) -> np.ndarray:
    """Read an integer label raster fixture."""
    try:
        labels = read_fixture(path)
    except FixtureError as e:
        raise SuiteError(str(e)) from e
    if not np.issubdtype(labels.dtype, np.integer):
        raise SuiteError(f"Label fixture {path} must hold integers, got {labels.dtype}")
    return labels


@suite_registry.register_decorator("metrics")
class MetricsSuite(Suite):
    """Confusion matrix, per-class IoU/accuracy/recall and their means."""

    name = "metrics"
    repeatable = False

    def __init__(self, config: Config, pred_path: str | Path, truth_path: str | Path, classes: int) -> None:
        super().__init__(config)
        self.pred_path = Path(pred_path)
        self.truth_path = Path(truth_path)
        self.classes = classes

    def run(self, seed: int) -> SuiteResult:
        pred = read_labels(self.pred_path)
        truth = read_labels(self.truth_path)
        try:
            cm = confusion(pred, truth, self.classes)
            scores = summary(cm)
            rows = per_class_records(cm)
            values = np.concatenate([class_iou(cm), class_accuracy(cm), class_recall(cm)])
        except AnalysisError as e:
            raise SuiteError(f"Cannot score {self.pred_path} against {self.truth_path}: {e}") from e

        outside = values[(values < 0.0) | (values > 1.0)]
        ranges = CheckResult(
            "metric_ranges",
            outside.size == 0,
            float(np.max(np.abs(outside - np.clip(outside, 0.0, 1.0)))) if outside.size else 0.0,
            0.0,
            int(values.size),
        )
        tally = CheckResult(
            "pixel_tally",
            cm.total == pred.size,
            float(abs(cm.total - pred.size)),
            0.0,
            1,
        )
        logger.debug("scored %d pixels over %d classes", cm.total, cm.classes)

        result = SuiteResult(self.name, [ranges, tally], {"per_class": Table(PER_CLASS_COLUMNS, rows)})
        result.summary = {
            "suite": self.name,
            "prediction": str(self.pred_path),
            "truth": str(self.truth_path),
            "confusion": cm.counts.tolist(),
            **scores,
            "passed": result.passed,
        }
        return result
