"""Central finite-difference gradient checks for float64 graphs."""

from typing import Callable, Sequence

import numpy as np

from src.autodiff.tensor import Tensor

STEP = 1e-5


def numeric_gradient(loss_fn: Callable[[], Tensor], param: Tensor, index) -> float:
    original = float(param.data[index])
    param.data[index] = original + STEP
    plus = float(loss_fn().data)
    param.data[index] = original - STEP
    minus = float(loss_fn().data)
    param.data[index] = original
    return (plus - minus) / (2.0 * STEP)


def check_gradients(loss_fn: Callable[[], Tensor], params: Sequence[Tensor], entries: int = 6,
                    seed: int = 0, rtol: float = 1e-4, atol: float = 1e-8):
    """
    Compare backward() against central differences on a few entries per parameter.

    loss_fn must rebuild the graph from scratch on every call, with any
    noise (weight draws, dropout masks) frozen.
    """
    for p in params:
        assert p.dtype == np.float64, "gradient checks need float64 tensors"
        p.zero_grad()
    loss_fn().backward()

    pick = np.random.default_rng(seed)
    for p in params:
        assert p.grad is not None, f"no gradient reached tensor of shape {p.shape}"
        flat = pick.choice(p.data.size, min(entries, p.data.size), replace=False)
        indices = [np.unravel_index(int(i), p.shape) for i in flat]
        analytic = np.array([p.grad[idx] for idx in indices])
        numeric = np.array([numeric_gradient(loss_fn, p, idx) for idx in indices])
        np.testing.assert_allclose(analytic, numeric, rtol=rtol, atol=atol)
