"""
Layer Containers Module

Parameter containers for the point-wise linear maps ("conv" layers with
kernel size 1) and for batch normalization. A conv(i, j) layer is a shared
i×j matrix applied to every point plus a bias of length j.
"""

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from src.autodiff import tensor as T
from src.autodiff.rng import RngStream
from src.autodiff.tensor import Tensor


def kaiming_normal(shape: Tuple[int, int], slope: float, rng: RngStream, dtype=np.float32) -> np.ndarray:
    """
    Kaiming normal initialization for an (in, out) weight matrix.

    std = gain / sqrt(fan_in) with gain = sqrt(2 / (1 + slope**2)).
    """
    fan_in = shape[0]
    std = np.sqrt(2.0 / (fan_in * (1.0 + slope ** 2)))
    return (rng.normal(shape) * std).astype(dtype)


@dataclass
class DenseLayer:
    """Point-estimated weight layer."""
    name: str
    weight: Tensor
    bias: Tensor

    @property
    def in_features(self) -> int:
        return self.weight.shape[0]

    @property
    def out_features(self) -> int:
        return self.weight.shape[1]

    def parameters(self) -> Dict[str, Tensor]:
        return {'weight': self.weight, 'bias': self.bias}

    def mean_parameters(self) -> Tuple[Tensor, Tensor]:
        return self.weight, self.bias

    def materialize(self, rng: Optional[RngStream], sample: bool) -> Tuple[Tensor, Tensor]:
        return self.weight, self.bias


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Apply a shared per-point linear map to the last axis."""
    return T.add(T.matmul(x, weight), bias)


@dataclass
class BatchNormLayer:
    """Batch normalization with learned scale/shift and running statistics."""
    name: str
    gamma: Tensor
    beta: Tensor
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5

    @classmethod
    def create(cls, name: str, channels: int, dtype=np.float32) -> 'BatchNormLayer':
        return cls(
            name=name,
            gamma=Tensor(np.ones(channels, dtype=dtype), requires_grad=True),
            beta=Tensor(np.zeros(channels, dtype=dtype), requires_grad=True),
            running_mean=np.zeros(channels, dtype=dtype),
            running_var=np.ones(channels, dtype=dtype),
        )

    def parameters(self) -> Dict[str, Tensor]:
        return {'gamma': self.gamma, 'beta': self.beta}

    def buffers(self) -> Dict[str, np.ndarray]:
        return {'running_mean': self.running_mean, 'running_var': self.running_var}

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        if not training:
            out, _, _ = T.batch_norm(x, self.gamma, self.beta, self.running_mean, self.running_var, self.eps)
            return out

        out, batch_mean, batch_var = T.batch_norm(x, self.gamma, self.beta, eps=self.eps)
        count = x.data.size // x.shape[-1]
        unbiased = batch_var * count / max(count - 1, 1)
        self.running_mean *= (1.0 - self.momentum)
        self.running_mean += self.momentum * batch_mean
        self.running_var *= (1.0 - self.momentum)
        self.running_var += self.momentum * unbiased
        return out


@dataclass
class SharedMLPStage:
    """One conv(i, j) stage: weight layer, optional batch norm, activation."""
    layer: object
    norm: Optional[BatchNormLayer] = None
    activate: bool = True
