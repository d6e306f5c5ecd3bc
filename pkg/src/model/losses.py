"""
Losses Module

Point-wise classification loss shared by all training regimes.
"""

import numpy as np

from src.autodiff import tensor as T
from src.autodiff.tensor import Tensor
from src.core.errors import ContractError


def check_labels(labels: np.ndarray, num_classes: int) -> np.ndarray:
    """Validate integer labels against the class count."""
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ContractError(
            f"Labels must lie in [0, {num_classes}), got range [{labels.min()}, {labels.max()}]"
        )
    return labels.astype(np.int64, copy=False)


def nll_loss(scores: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-softmax likelihood over every point of the batch."""
    labels = check_labels(labels, scores.shape[-1])
    if labels.shape != scores.shape[:-1]:
        raise ContractError(f"Labels shape {labels.shape} does not match scores {scores.shape}")
    picked = T.take_along_last(T.log_softmax(scores), labels)
    return T.scale(T.mean(picked), -1.0)
