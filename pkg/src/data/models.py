"""
Point Cloud Models

This module defines the data models for labeled point clouds and the
fixed-size blocks the network consumes.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd

from src.core.errors import CloudFormatError, ContractError, DimensionError

BLOCK_POINTS = 4096
FEATURE_COLUMNS = 9
NETWORK_COLUMNS = 6


@dataclass
class PointCloud:
    """A point cloud with colors and optional per-point labels."""
    xyz: np.ndarray
    rgb: np.ndarray
    labels: Optional[np.ndarray] = None
    source_id: str = ""

    def __post_init__(self):
        self.xyz = np.asarray(self.xyz, dtype=np.float64)
        self.rgb = np.asarray(self.rgb, dtype=np.uint8)
        if self.xyz.ndim != 2 or self.xyz.shape[1] != 3:
            raise DimensionError(f"xyz must be N×3, got {self.xyz.shape}")
        if self.rgb.shape != self.xyz.shape:
            raise DimensionError(f"rgb must match xyz {self.xyz.shape}, got {self.rgb.shape}")
        if not np.all(np.isfinite(self.xyz)):
            raise CloudFormatError(f"Cloud {self.source_id or '<unnamed>'} has non-finite coordinates")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int32)
            if self.labels.shape != (len(self.xyz),):
                raise DimensionError(f"labels must have length {len(self.xyz)}, got {self.labels.shape}")

    def __len__(self) -> int:
        return len(self.xyz)

    @property
    def has_labels(self) -> bool:
        return self.labels is not None

    def check_labels(self, num_classes: int):
        """Raise if any label falls outside [0, num_classes)."""
        if self.labels is None or not len(self.labels):
            return
        if self.labels.min() < 0 or self.labels.max() >= num_classes:
            raise ContractError(
                f"Cloud {self.source_id}: labels span [{self.labels.min()}, {self.labels.max()}], "
                f"expected [0, {num_classes})")

    def class_counts(self, num_classes: int) -> np.ndarray:
        if self.labels is None:
            return np.zeros(num_classes, dtype=np.int64)
        return np.bincount(self.labels, minlength=num_classes)

    def to_frame(self) -> pd.DataFrame:
        """One row per point: x, y, z, r, g, b and label when present."""
        frame = pd.DataFrame({
            'x': self.xyz[:, 0], 'y': self.xyz[:, 1], 'z': self.xyz[:, 2],
            'r': self.rgb[:, 0], 'g': self.rgb[:, 1], 'b': self.rgb[:, 2],
        })
        if self.labels is not None:
            frame['label'] = self.labels
        return frame


@dataclass
class Block:
    """Exactly 4096 rows drawn from one cloud, with 9-dim features."""
    indices: np.ndarray
    features: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        if self.indices.shape != (BLOCK_POINTS,):
            raise DimensionError(f"Block needs exactly {BLOCK_POINTS} indices, got {self.indices.shape}")
        if self.features.shape != (BLOCK_POINTS, FEATURE_COLUMNS):
            raise DimensionError(f"Block features must be {BLOCK_POINTS}×{FEATURE_COLUMNS}, got {self.features.shape}")

    def network_input(self) -> np.ndarray:
        """Centered xyz and scaled rgb: the 6 columns the network reads."""
        return self.features[:, :NETWORK_COLUMNS]
