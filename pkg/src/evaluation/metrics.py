"""
Segmentation Metrics Module

Confusion-matrix based accuracy, per-class and mean intersection over union,
and accuracy restricted to the points an uncertainty rule marks certain.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
import pandas as pd

from src.core.errors import ContractError, DimensionError

# Default logger - will be replaced by the configured logger
logger = logging.getLogger(__name__)

METRICS_COLUMNS = ["room", "model", "measure", "accuracy", "filtered_accuracy", "drop_rate", "miou"]


@dataclass
class ConfusionMatrix:
    """m×m counts; rows are ground truth, columns are predictions."""
    counts: np.ndarray

    @classmethod
    def from_labels(cls, labels: np.ndarray, preds: np.ndarray, num_classes: int) -> 'ConfusionMatrix':
        labels = np.asarray(labels, dtype=np.int64).ravel()
        preds = np.asarray(preds, dtype=np.int64).ravel()
        if labels.shape != preds.shape:
            raise DimensionError(f"labels {labels.shape} and predictions {preds.shape} differ in length")
        for name, values in (("label", labels), ("prediction", preds)):
            if values.size and (values.min() < 0 or values.max() >= num_classes):
                raise ContractError(f"{name} out of range [0, {num_classes})")
        flat = np.bincount(labels * num_classes + preds, minlength=num_classes * num_classes)
        return cls(flat.reshape(num_classes, num_classes))

    @classmethod
    def merge(cls, matrices: Iterable['ConfusionMatrix']) -> 'ConfusionMatrix':
        matrices = list(matrices)
        return cls(np.sum([cm.counts for cm in matrices], axis=0))

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def accuracy(cm: ConfusionMatrix) -> float:
    """Correctly classified points divided by all points."""
    if cm.total == 0:
        raise ContractError("Accuracy of an empty confusion matrix is undefined")
    return float(np.trace(cm.counts) / cm.total)


def class_iou(cm: ConfusionMatrix, i: int) -> Optional[float]:
    """
    Intersection over union of class i: TP / (P + G - TP).

    Returns:
        IoU in [0, 1], or None when the class is absent from both labels and predictions
    """
    tp = cm.counts[i, i]
    union = cm.counts[i, :].sum() + cm.counts[:, i].sum() - tp
    if union == 0:
        return None
    return float(tp / union)


def class_ious(cm: ConfusionMatrix) -> List[Optional[float]]:
    return [class_iou(cm, i) for i in range(cm.num_classes)]


def mean_iou(cm: ConfusionMatrix) -> float:
    """Mean IoU over the classes whose IoU is defined (nan if none is)."""
    defined = [iou for iou in class_ious(cm) if iou is not None]
    if not defined:
        return float("nan")
    return float(np.mean(defined))


def filtered_metrics(labels: np.ndarray, preds: np.ndarray, certain: np.ndarray) -> Tuple[float, float]:
    """
    Accuracy over the certain points and the fraction of points dropped.

    Returns:
        Tuple of (filtered accuracy, drop rate); the accuracy is nan when
        every point is dropped
    """
    labels = np.asarray(labels).ravel()
    preds = np.asarray(preds).ravel()
    certain = np.asarray(certain, dtype=bool).ravel()
    if not (labels.shape == preds.shape == certain.shape):
        raise DimensionError(
            f"labels {labels.shape}, predictions {preds.shape} and mask {certain.shape} differ in length")
    if labels.size == 0:
        raise ContractError("filtered_metrics needs at least one point")
    kept = int(certain.sum())
    drop_rate = 1.0 - kept / labels.size
    if kept == 0:
        return float("nan"), 1.0
    return float(np.mean(labels[certain] == preds[certain])), float(drop_rate)


def metrics_row(room: str, model: str, measure: str, cm: ConfusionMatrix,
                filtered_accuracy: float, drop_rate: float) -> Dict[str, object]:
    return {
        'room': room,
        'model': model,
        'measure': measure,
        'accuracy': accuracy(cm),
        'filtered_accuracy': filtered_accuracy,
        'drop_rate': drop_rate,
        'miou': mean_iou(cm),
    }


def metrics_frame(rows: List[Dict[str, object]]) -> pd.DataFrame:
    """Metrics table with the fixed column order."""
    return pd.DataFrame(rows, columns=METRICS_COLUMNS)
