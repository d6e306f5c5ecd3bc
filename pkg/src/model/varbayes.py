"""
Variational Bayes Module

Mean-scaled diagonal Gaussian variational family for weight layers, its
closed-form KL divergence to a zero-mean Gaussian prior, and the ELBO loss.

For a layer with variational parameters (mu_w, delta_w, mu_b, delta_b):

    tau   = softplus(delta)
    W     = mu_w * (1 + tau_w * eps_w),   eps_w ~ N(0, I)
    B     = mu_b * (1 + tau_b * eps_b),   eps_b ~ N(0, I)

so each weight is Gaussian with mean mu and standard deviation tau * |mu|.
Only two noise-scale scalars exist per layer.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple, Union

import numpy as np

from src.autodiff import tensor as T
from src.autodiff.rng import RngStream
from src.autodiff.tensor import Tensor
from src.core.errors import ContractError
from src.model.losses import nll_loss

# Default logger - will be replaced by the configured logger
logger = logging.getLogger(__name__)

SIGMA_FLOOR = 1e-8
INITIAL_RELATIVE_NOISE = 0.05


def tau(delta: float) -> float:
    """Softplus of a scalar; returns delta itself above 30."""
    if delta > 30.0:
        return float(delta)
    return math.log1p(math.exp(delta))


def softplus_inverse(value: float) -> float:
    """delta such that tau(delta) == value."""
    if value <= 0:
        raise ContractError(f"softplus_inverse needs a positive value, got {value}")
    if value > 30.0:
        return float(value)
    return math.log(math.expm1(value))


@dataclass
class Prior:
    """Zero-mean isotropic Gaussian prior over weights and biases."""
    sigma_w: float = 4.0
    sigma_b: float = 8.0
    mean: float = 0.0

    def __post_init__(self):
        if self.sigma_w <= 0 or self.sigma_b <= 0:
            raise ContractError(f"Prior sigmas must be positive, got {self.sigma_w}, {self.sigma_b}")
        if self.mean != 0.0:
            raise ContractError("Only zero-mean priors are supported")


@dataclass
class VariationalLayer:
    """Variational weight layer with one noise scale for weights and one for biases."""
    name: str
    mu_w: Tensor
    delta_w: Tensor
    mu_b: Tensor
    delta_b: Tensor

    @classmethod
    def from_means(cls, name: str, mu_w: np.ndarray, mu_b: np.ndarray,
                   relative_noise: float = INITIAL_RELATIVE_NOISE) -> 'VariationalLayer':
        delta = softplus_inverse(relative_noise)
        dtype = mu_w.dtype
        return cls(
            name=name,
            mu_w=Tensor(mu_w, requires_grad=True),
            delta_w=Tensor(np.array(delta, dtype=dtype), requires_grad=True),
            mu_b=Tensor(mu_b, requires_grad=True),
            delta_b=Tensor(np.array(delta, dtype=dtype), requires_grad=True),
        )

    @property
    def in_features(self) -> int:
        return self.mu_w.shape[0]

    @property
    def out_features(self) -> int:
        return self.mu_w.shape[1]

    @property
    def tau_w(self) -> float:
        return tau(float(self.delta_w.data))

    @property
    def tau_b(self) -> float:
        return tau(float(self.delta_b.data))

    @property
    def d(self) -> int:
        return int(self.mu_w.data.size)

    @property
    def d_bias(self) -> int:
        return int(self.mu_b.data.size)

    def parameters(self) -> Dict[str, Tensor]:
        return {'mu_w': self.mu_w, 'delta_w': self.delta_w, 'mu_b': self.mu_b, 'delta_b': self.delta_b}

    def mean_parameters(self) -> Tuple[Tensor, Tensor]:
        return self.mu_w, self.mu_b

    def materialize(self, rng: Optional[RngStream], sample: bool) -> Tuple[Tensor, Tensor]:
        if not sample:
            return self.mu_w, self.mu_b
        if rng is None:
            raise ContractError(f"Sampling layer {self.name} needs an RngStream")
        return sample_layer(self, rng)


def _reparameterize(mu: Tensor, delta: Tensor, eps: np.ndarray) -> Tensor:
    noise = T.mul(T.softplus(delta), eps.astype(mu.dtype, copy=False))
    return T.mul(mu, T.add(1.0, noise))


def sample_layer(
    layer: VariationalLayer,
    rng: Optional[RngStream],
    eps_w: Optional[np.ndarray] = None,
    eps_b: Optional[np.ndarray] = None,
) -> Tuple[Tensor, Tensor]:
    """
    Draw one (W, B) pair by reparameterization.

    Gradients flow to mu and delta. Passing `eps_w` / `eps_b` freezes the
    noise (used for gradient checks and degenerate-case tests).
    """
    if eps_w is None:
        eps_w = rng.normal(layer.mu_w.shape, dtype=layer.mu_w.dtype)
    if eps_b is None:
        eps_b = rng.normal(layer.mu_b.shape, dtype=layer.mu_b.dtype)
    return _reparameterize(layer.mu_w, layer.delta_w, eps_w), _reparameterize(layer.mu_b, layer.delta_b, eps_b)


def _kl_term(mu: Tensor, delta: Tensor, sigma_p: float) -> Tensor:
    # sigma_q = max(tau * |mu|, floor), per entry
    sigma_q = T.clip_min(T.mul(T.absolute(mu), T.softplus(delta)), SIGMA_FLOOR)
    quadratic = T.scale(T.add(T.square(sigma_q), T.square(mu)), 1.0 / (2.0 * sigma_p ** 2))
    per_entry = T.add(T.sub(quadratic, T.log(sigma_q)), math.log(sigma_p) - 0.5)
    return T.tensor_sum(per_entry)


def kl_tensor(layer: VariationalLayer, prior: Prior) -> Tensor:
    """Differentiable KL(q || p) of one layer (weights plus biases)."""
    return T.add(_kl_term(layer.mu_w, layer.delta_w, prior.sigma_w),
                 _kl_term(layer.mu_b, layer.delta_b, prior.sigma_b))


def kl_layer(layer: VariationalLayer, prior: Prior) -> float:
    """
    Closed-form KL divergence between the layer's variational family and the prior.

    Sum over entries of ln(sigma_p / sigma_q) + (sigma_q^2 + mu^2) / (2 sigma_p^2) - 1/2
    with sigma_q = max(tau * |mu|, 1e-8).
    """
    return float(kl_tensor(layer, prior).data)


def elbo_loss(
    net_outputs: Tensor,
    labels: np.ndarray,
    kl_total: Union[Tensor, float],
    kl_weight: float,
    points_per_step: int = 1,
) -> Tensor:
    """
    Negative ELBO for one mini-batch.

    Mean negative log-likelihood over points (a single-sample estimate of the
    expected NLL) plus kl_weight * kl_total / points_per_step.

    Args:
        net_outputs: B×N×m class scores
        labels: B×N integer labels
        kl_total: Summed KL over all variational layers
        kl_weight: Share of the full KL assigned to this mini-batch
        points_per_step: Divisor putting the KL on the per-point NLL scale

    Returns:
        Scalar loss tensor
    """
    if kl_weight < 0:
        raise ContractError(f"kl_weight must be non-negative, got {kl_weight}")
    if points_per_step < 1:
        raise ContractError(f"points_per_step must be >= 1, got {points_per_step}")
    nll = nll_loss(net_outputs, labels)
    if kl_weight == 0:
        return nll
    kl = T.as_tensor(kl_total, nll)
    return T.add(nll, T.scale(kl, kl_weight / points_per_step))
