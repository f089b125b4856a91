"""Complexity formulas, MAC counting and segmentation metrics.

Only numpy-level modules live here so that :mod:`attnmerge.tensor` can
report MACs without an import cycle.
"""

from .base import AnalysisError
from .complexity import (
    ATTENTION_KINDS,
    SWEEP_COLUMNS,
    ComplexityParams,
    ComplexityReport,
    ComplexityRow,
    attention_macs,
    evaluate,
    omega_gmsa,
    omega_msa,
    omega_wmsa,
    square_sweep,
    sweep,
)
from .macs import MacCounter, MacCounterError, mac_counter, record_macs
from .metrics import (
    ConfusionMatrix,
    class_accuracy,
    class_iou,
    class_recall,
    confusion,
    macc,
    miou,
    mrecall,
    overall_accuracy,
    per_class_records,
    summary,
)

__all__ = [
    "AnalysisError",
    "ATTENTION_KINDS",
    "SWEEP_COLUMNS",
    "ComplexityParams",
    "ComplexityReport",
    "ComplexityRow",
    "attention_macs",
    "evaluate",
    "omega_gmsa",
    "omega_msa",
    "omega_wmsa",
    "square_sweep",
    "sweep",
    "MacCounter",
    "MacCounterError",
    "mac_counter",
    "record_macs",
    "ConfusionMatrix",
    "class_accuracy",
    "class_iou",
    "class_recall",
    "confusion",
    "macc",
    "miou",
    "mrecall",
    "overall_accuracy",
    "per_class_records",
    "summary",
]
