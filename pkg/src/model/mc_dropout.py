"""
MC Dropout Module

Dropout on the inputs of the segmentation head, kept active at test time so
repeated stochastic forwards approximate posterior-predictive samples.

Masks use inverted scaling: a kept entry is multiplied by 1 / (1 - drop_prob)
both during training and during Monte Carlo testing, so the expected masked
input equals the unmasked input and a mask-free pass is the expectation.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from src.autodiff import tensor as T
from src.autodiff.rng import RngStream
from src.autodiff.tensor import Tensor
from src.core.errors import ContractError

# Default logger - will be replaced by the configured logger
logger = logging.getLogger(__name__)

# Inputs of conv(1088,512), conv(512,256), conv(256,128)
HEAD_PLACEMENTS: Tuple[str, ...] = ("head.0", "head.1", "head.2")

PRESETS: Dict[str, Tuple[str, ...]] = {
    "automotive": HEAD_PLACEMENTS,
    "s3dis": ("head.2",),
}


@dataclass
class DropoutSpec:
    """Where dropout masks go and how strong they are."""
    placements: Tuple[str, ...] = HEAD_PLACEMENTS
    drop_prob: float = 0.1
    weight_decay: float = 1e-4

    def __post_init__(self):
        self.placements = tuple(self.placements)
        unknown = set(self.placements) - set(HEAD_PLACEMENTS)
        if unknown:
            raise ContractError(f"Unknown dropout placements {sorted(unknown)}; allowed: {HEAD_PLACEMENTS}")
        if not 0.0 <= self.drop_prob < 1.0:
            raise ContractError(f"drop_prob must lie in [0, 1), got {self.drop_prob}")
        if self.weight_decay < 0:
            raise ContractError(f"weight_decay must be non-negative, got {self.weight_decay}")

    @classmethod
    def preset(cls, name: str, drop_prob: float = 0.1, weight_decay: float = 1e-4) -> 'DropoutSpec':
        if name not in PRESETS:
            raise ContractError(f"Unknown dropout preset '{name}'; choose from {sorted(PRESETS)}")
        return cls(PRESETS[name], drop_prob, weight_decay)

    @property
    def active(self) -> bool:
        return bool(self.placements) and self.drop_prob > 0

    def to_dict(self) -> Dict[str, Any]:
        return {'placements': list(self.placements), 'drop_prob': self.drop_prob,
                'weight_decay': self.weight_decay}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'DropoutSpec':
        return cls(tuple(data['placements']), float(data['drop_prob']), float(data['weight_decay']))


def sample_mask(channels: int, drop_prob: float, rng: RngStream,
                lead_shape: Sequence[int] = (), dtype=np.float32) -> np.ndarray:
    """
    Draw an inverted-dropout mask.

    Entries are 0 with probability drop_prob and 1 / (1 - drop_prob) otherwise.

    Args:
        channels: Size of the last axis
        drop_prob: Probability of dropping an entry, in [0, 1)
        rng: Random stream
        lead_shape: Leading axes (e.g. batch and point axes)

    Returns:
        Mask array of shape (*lead_shape, channels)
    """
    if not 0.0 <= drop_prob < 1.0:
        raise ContractError(f"drop_prob must lie in [0, 1), got {drop_prob}")
    shape = tuple(lead_shape) + (channels,)
    keep = rng.random(shape) >= drop_prob
    return np.where(keep, 1.0 / (1.0 - drop_prob), 0.0).astype(dtype)


def apply_dropout(x: Tensor, spec: DropoutSpec, rng: RngStream) -> Tensor:
    """Multiply a B×N×C layer input by a fresh per-point per-channel mask."""
    mask = sample_mask(x.shape[-1], spec.drop_prob, rng, x.shape[:-1], dtype=x.dtype)
    return T.mul(x, mask)


def dropout_forward(net, x: Tensor, spec: DropoutSpec, rng: Optional[RngStream],
                    mc_mode: bool, training: bool = False) -> Tensor:
    """
    Forward pass of a dropout-regime network.

    Masks are redrawn on every call when training or mc_mode is set; with
    both off the pass is deterministic and mask-free.
    """
    if net.cfg.regime != "dropout":
        raise ContractError(f"dropout_forward needs a dropout-regime network, got {net.cfg.regime}")
    return net.forward(x, rng=rng, sample=mc_mode, training=training, dropout=spec)


def l2_penalty(net, weight_decay: float) -> Tensor:
    """weight_decay times the squared norm of every weight and bias."""
    if weight_decay < 0:
        raise ContractError(f"weight_decay must be non-negative, got {weight_decay}")
    params = [p for layer in net.weight_layers() for p in layer.mean_parameters()]
    if weight_decay == 0 or not params:
        return Tensor(np.zeros((), dtype=net.dtype))
    total = T.tensor_sum(T.square(params[0]))
    for p in params[1:]:
        total = T.add(total, T.tensor_sum(T.square(p)))
    return T.scale(total, weight_decay)
