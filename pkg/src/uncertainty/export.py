"""
Uncertainty Export Module

Writes uncertainty maps and per-point tables:

- PLY maps where certain points are black and uncertain points red
- PLY predictions colored by a fixed class palette
- per-point CSV `x,y,z,label,pred,measure,value,certain`
- per-class quantiles (min, q25, median, q75, max) of one point's K samples
"""

import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd

from src.core.errors import ContractError, DimensionError
from src.data.cloud_io import write_ply
from src.data.models import PointCloud
from src.inference.sampling import SampleStack
from src.storage.atomic import write_csv
from src.uncertainty.measures import UncertaintyReport

# Default logger - will be replaced by the configured logger
logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

CERTAIN_COLOR = (0, 0, 0)
UNCERTAIN_COLOR = (255, 0, 0)

PALETTE = np.array([
    [31, 119, 180], [255, 127, 14], [44, 160, 44], [214, 39, 40], [148, 103, 189],
    [140, 86, 75], [227, 119, 194], [127, 127, 127], [188, 189, 34], [23, 190, 207],
    [174, 199, 232], [255, 187, 120], [152, 223, 138],
], dtype=np.uint8)

QUANTILES = {'min': 0.0, 'q25': 0.25, 'median': 0.5, 'q75': 0.75, 'max': 1.0}


def _check_length(cloud: PointCloud, values: np.ndarray, what: str):
    if len(values) != len(cloud):
        raise DimensionError(f"{what} has {len(values)} entries for a cloud of {len(cloud)} points")


def uncertainty_colors(certain: np.ndarray) -> np.ndarray:
    certain = np.asarray(certain, dtype=bool)
    colors = np.empty((certain.size, 3), dtype=np.uint8)
    colors[certain] = CERTAIN_COLOR
    colors[~certain] = UNCERTAIN_COLOR
    return colors


def palette_colors(labels: np.ndarray) -> np.ndarray:
    return PALETTE[np.asarray(labels) % len(PALETTE)]


def write_uncertainty_ply(path: PathLike, cloud: PointCloud, certain: np.ndarray,
                          preds: Optional[np.ndarray] = None) -> Path:
    """Black for certain points, red for uncertain ones; label holds the prediction when given."""
    _check_length(cloud, certain, "Certain mask")
    path = write_ply(path, cloud.xyz, uncertainty_colors(certain), preds)
    logger.info(f"✅ Wrote uncertainty map ({int((~np.asarray(certain)).sum())} uncertain points) to {path}")
    return path


def write_prediction_ply(path: PathLike, cloud: PointCloud, preds: np.ndarray) -> Path:
    """Palette colors per predicted class; the label property is the prediction."""
    _check_length(cloud, preds, "Predictions")
    path = write_ply(path, cloud.xyz, palette_colors(preds), np.asarray(preds, dtype=np.int32))
    logger.info(f"✅ Wrote predictions to {path}")
    return path


def points_frame(cloud: PointCloud, preds: np.ndarray, report: UncertaintyReport) -> pd.DataFrame:
    """Per-point rows; value is NaN for the boolean-only credible rule, label is empty when unknown."""
    _check_length(cloud, preds, "Predictions")
    _check_length(cloud, report.certain, "Certain mask")
    labels = (pd.array(cloud.labels, dtype="Int64") if cloud.labels is not None
              else pd.array([pd.NA] * len(cloud), dtype="Int64"))
    values = report.values if report.values is not None else np.full(len(cloud), np.nan)
    return pd.DataFrame({
        'x': cloud.xyz[:, 0],
        'y': cloud.xyz[:, 1],
        'z': cloud.xyz[:, 2],
        'label': labels,
        'pred': np.asarray(preds, dtype=np.int64),
        'measure': report.measure,
        'value': values,
        'certain': np.asarray(report.certain, dtype=bool),
    })


def write_points_csv(path: PathLike, cloud: PointCloud, preds: np.ndarray, report: UncertaintyReport) -> Path:
    return write_csv(path, points_frame(cloud, preds, report))


def quantile_table(stack: SampleStack, point: int) -> pd.DataFrame:
    """
    Distribution of one point's K sampled class probabilities.

    Returns:
        One row per class with columns class, min, q25, median, q75, max
    """
    if not 0 <= point < stack.P:
        raise ContractError(f"Point index {point} out of range for a stack of {stack.P} points")
    samples = stack.values[:, point, :]
    table = pd.DataFrame({'class': np.arange(stack.m)})
    for column, q in QUANTILES.items():
        table[column] = np.quantile(samples, q, axis=0, method="linear")
    return table


def write_quantiles(path: PathLike, stack: SampleStack, point: int) -> Path:
    path = write_csv(path, quantile_table(stack, point))
    logger.info(f"✅ Wrote sample quantiles of point {point} to {path}")
    return path
