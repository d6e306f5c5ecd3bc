"""
Posterior Predictive Sampling Module

Monte Carlo approximation of the posterior predictive distribution: K
stochastic forward passes (weight draws for the Bayesian net, dropout masks
for the dropout net) whose softmax outputs are stacked and averaged.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Sequence, Union

import numpy as np

from src.autodiff import tensor as T
from src.autodiff.rng import RngStream
from src.autodiff.tensor import Tensor
from src.core.errors import ContractError, DimensionError

# Default logger - will be replaced by the configured logger
logger = logging.getLogger(__name__)

ROW_SUM_TOLERANCE = 1e-5


@dataclass
class SampleStack:
    """K × P × m stack of softmax outputs."""
    values: np.ndarray
    regime: str = "frequentist"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3:
            raise DimensionError(f"SampleStack needs K×P×m values, got shape {self.values.shape}")
        if self.values.shape[0] < 1:
            raise ContractError("SampleStack needs at least one sample")

    @property
    def K(self) -> int:
        return self.values.shape[0]

    @property
    def P(self) -> int:
        return self.values.shape[1]

    @property
    def m(self) -> int:
        return self.values.shape[2]

    def validate(self, tolerance: float = ROW_SUM_TOLERANCE):
        """Check that every row is a probability vector."""
        if np.any(self.values < 0) or np.any(self.values > 1 + tolerance):
            raise ContractError("SampleStack values must lie in [0, 1]")
        if not np.allclose(self.values.sum(axis=-1), 1.0, atol=tolerance, rtol=0):
            raise ContractError(f"SampleStack rows must sum to 1 within {tolerance}")

    def split(self, points_per_part: Sequence[int]) -> List['SampleStack']:
        """Cut the point axis into consecutive parts (e.g. one per block)."""
        bounds = np.cumsum(points_per_part)[:-1]
        return [SampleStack(part, self.regime) for part in np.split(self.values, bounds, axis=1)]


def _as_input_array(blocks) -> np.ndarray:
    if isinstance(blocks, np.ndarray):
        array = blocks
    else:
        array = np.stack([block.network_input() for block in blocks])
    if array.ndim != 3:
        raise DimensionError(f"Expected n×N×6 network input, got shape {array.shape}")
    return array


def mc_forward(net, blocks: Union[np.ndarray, Sequence], K: int, rng: RngStream,
               threads: int = 1, batch_size: int = 4) -> SampleStack:
    """
    Draw K stochastic forward passes over a set of blocks.

    Sample k uses the child stream rng.split(k), so results do not depend on
    the order in which samples are computed. A Bayesian sample draws one
    weight vector and applies it to every block batch; a dropout sample
    draws fresh masks per batch from rng.split(k, batch).

    Args:
        net: SegNet
        blocks: Blocks, or an n×N×6 array of network inputs
        K: Number of Monte Carlo samples (forced to 1 for frequentist nets)
        rng: Parent random stream
        threads: Worker threads for concurrent samples
        batch_size: Blocks per forward pass

    Returns:
        SampleStack of shape K × (n·N) × m, rows ordered block by block
    """
    if K < 1:
        raise ContractError(f"K must be >= 1, got {K}")
    regime = net.cfg.regime
    if regime == "frequentist" and K > 1:
        logger.warning(f"⚠️ Frequentist network is deterministic; using K=1 instead of K={K}")
        K = 1
    if batch_size < 1:
        raise ContractError(f"batch_size must be >= 1, got {batch_size}")

    inputs = _as_input_array(blocks).astype(net.dtype, copy=False)
    n_blocks, n_points = inputs.shape[0], inputs.shape[1]
    starts = list(range(0, n_blocks, batch_size))
    stochastic = regime != "frequentist"

    def draw(k: int) -> np.ndarray:
        pieces = []
        for b, start in enumerate(starts):
            x = Tensor(inputs[start:start + batch_size])
            if regime == "bayesian":
                stream = rng.split(k)
            elif regime == "dropout":
                stream = rng.split(k, b)
            else:
                stream = None
            scores = net.forward(x, rng=stream, sample=stochastic)
            pieces.append(T.softmax(scores.data.astype(np.float64)))
        return np.concatenate(pieces, axis=0).reshape(n_blocks * n_points, -1)

    workers = max(1, min(int(threads), K))
    if workers == 1:
        samples = [draw(k) for k in range(K)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            samples = list(pool.map(draw, range(K)))

    logger.debug(f"🔍 Drew {K} predictive samples for {n_blocks} blocks ({regime})")
    return SampleStack(np.stack(samples), regime)


def predictive_mean(stack: SampleStack) -> np.ndarray:
    """P×m mean over the K samples."""
    return stack.values.mean(axis=0)


def predict(stack: SampleStack) -> np.ndarray:
    """Class with the largest predictive mean per point; ties go to the lowest index."""
    return np.argmax(predictive_mean(stack), axis=-1)
