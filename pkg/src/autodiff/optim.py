"""
Optimizer Module

Mini-batch stochastic gradient descent with momentum.

Update order, per parameter:
    v <- momentum * v + g
    w <- w - lr * v
The gradient enters the velocity unscaled; the learning rate is applied
when the velocity is added to the weights.
"""

import logging
from typing import Dict, List, Sequence

import numpy as np

from src.autodiff.tensor import Tensor
from src.core.errors import ContractError, DimensionError

# Default logger - will be replaced by the configured logger
logger = logging.getLogger(__name__)


def sgd_momentum_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    velocity: Sequence[np.ndarray],
    lr: float,
    momentum: float,
):
    """
    Apply one in-place momentum update.

    Args:
        params: Parameter arrays, updated in place
        grads: Gradient arrays matching `params`
        velocity: Velocity arrays matching `params`, updated in place
        lr: Learning rate (> 0)
        momentum: Momentum coefficient
    """
    if lr <= 0:
        raise ContractError(f"Learning rate must be positive, got {lr}")
    for w, g, v in zip(params, grads, velocity):
        if w.shape != g.shape or w.shape != v.shape:
            raise DimensionError(f"Optimizer shape mismatch: param {w.shape}, grad {g.shape}, velocity {v.shape}")
        v *= momentum
        v += g
        w -= lr * v


class SGDMomentum:
    """Stateful SGD-momentum over a fixed list of parameter tensors."""

    def __init__(self, params: List[Tensor], momentum: float = 0.9):
        self.params = list(params)
        self.momentum = momentum
        self.velocity: Dict[int, np.ndarray] = {id(p): np.zeros_like(p.data) for p in self.params}

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self, lr: float):
        """Update every parameter that received a gradient."""
        active = [p for p in self.params if p.grad is not None]
        sgd_momentum_step(
            [p.data for p in active],
            [p.grad for p in active],
            [self.velocity[id(p)] for p in active],
            lr,
            self.momentum,
        )
