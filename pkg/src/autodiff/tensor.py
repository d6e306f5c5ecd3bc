"""
Tensor Module

A dense n-dimensional array with a gradient slot and reverse-mode automatic
differentiation, supplying the operations the segmentation networks need.

Each differentiable operation builds an output Tensor that remembers its
parents and a closure propagating the output gradient back to them.
`backward()` visits the graph in reverse topological order, so every node
runs its closure exactly once per pass. Leaf gradients accumulate across
passes until `zero_grad()`; intermediate gradients are released as soon as
they have been propagated.

Arrays are numpy arrays. Training uses float32 (DEFAULT_DTYPE); gradient
checks build their tensors in float64 and every op keeps the input dtype.
"""

import logging
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.core.errors import ContractError, DimensionError, NumericError

# Default logger - will be replaced by the configured logger
logger = logging.getLogger(__name__)

DEFAULT_DTYPE = np.float32

ArrayLike = Union[np.ndarray, float, int, Sequence]


class Tensor:
    """Array node of the autodiff graph."""

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        dtype=None,
        _parents: Tuple['Tensor', ...] = (),
        op: str = "",
    ):
        array = np.asarray(data, dtype=dtype)
        if dtype is None and not np.issubdtype(array.dtype, np.floating):
            array = array.astype(DEFAULT_DTYPE)
        self.data: np.ndarray = array
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self.op = op
        self._parents = _parents
        self._backward: Optional[Callable[[], None]] = None

    # Properties

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> 'Tensor':
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={self.op or 'leaf'})"

    # Graph plumbing

    def _accumulate(self, grad: np.ndarray):
        if not self.requires_grad:
            return
        grad = grad.astype(self.data.dtype, copy=False)
        if self.grad is None:
            self.grad = np.array(grad, copy=True)
        else:
            self.grad += grad

    def backward(self):
        """
        Back-propagate from this scalar tensor.

        Raises:
            ContractError: If the tensor is not a scalar
        """
        if self.data.size != 1:
            raise ContractError(f"backward() needs a scalar loss, got shape {self.shape}")

        order = _topological_order(self)
        seed = np.ones_like(self.data)
        if self.grad is None or not self.is_leaf:
            self.grad = seed
        else:
            self.grad = self.grad + seed

        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward()
            if not node.is_leaf:
                node.grad = None

    # Operators

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims: bool = False) -> 'Tensor':
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> 'Tensor':
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> 'Tensor':
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def _topological_order(root: Tensor) -> List[Tensor]:
    """Iterative post-order DFS; each node appears exactly once."""
    order: List[Tensor] = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited and parent.requires_grad:
                stack.append((parent, False))
    return order


def as_tensor(value: ArrayLike, like: Optional[Tensor] = None) -> Tensor:
    """Wrap constants; tensors pass through unchanged."""
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else None
    return Tensor(value, dtype=dtype)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _make(data: np.ndarray, parents: Tuple[Tensor, ...], op: str) -> Tensor:
    return Tensor(data, dtype=data.dtype, _parents=parents, op=op)


# Elementwise arithmetic

def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)
    out = _make(a.data + b.data, (a, b), "add")

    def _backward():
        a._accumulate(_unbroadcast(out.grad, a.shape))
        b._accumulate(_unbroadcast(out.grad, b.shape))
    out._backward = _backward
    return out


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)
    out = _make(a.data - b.data, (a, b), "sub")

    def _backward():
        a._accumulate(_unbroadcast(out.grad, a.shape))
        b._accumulate(_unbroadcast(-out.grad, b.shape))
    out._backward = _backward
    return out


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    """Hadamard product with numpy broadcasting."""
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)
    out = _make(a.data * b.data, (a, b), "mul")

    def _backward():
        if a.requires_grad:
            a._accumulate(_unbroadcast(out.grad * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(out.grad * a.data, b.shape))
    out._backward = _backward
    return out


def scale(x: Tensor, factor: float) -> Tensor:
    out = _make(x.data * x.data.dtype.type(factor), (x,), "scale")

    def _backward():
        x._accumulate(out.grad * factor)
    out._backward = _backward
    return out


def square(x: Tensor) -> Tensor:
    out = _make(x.data * x.data, (x,), "square")

    def _backward():
        x._accumulate(2.0 * x.data * out.grad)
    out._backward = _backward
    return out


def exp(x: Tensor) -> Tensor:
    value = np.exp(x.data)
    out = _make(value, (x,), "exp")

    def _backward():
        x._accumulate(out.grad * value)
    out._backward = _backward
    return out


def log(x: Tensor) -> Tensor:
    out = _make(np.log(x.data), (x,), "log")

    def _backward():
        x._accumulate(out.grad / x.data)
    out._backward = _backward
    return out


def absolute(x: Tensor) -> Tensor:
    out = _make(np.abs(x.data), (x,), "absolute")

    def _backward():
        x._accumulate(out.grad * np.sign(x.data))
    out._backward = _backward
    return out


def clip_min(x: Tensor, floor: float) -> Tensor:
    """max(x, floor); the gradient flows only where x exceeds the floor."""
    out = _make(np.maximum(x.data, x.data.dtype.type(floor)), (x,), "clip_min")

    def _backward():
        x._accumulate(out.grad * (x.data > floor))
    out._backward = _backward
    return out


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -x))


def softplus(x: Tensor) -> Tensor:
    """log(1 + exp(x)), overflow-safe."""
    out = _make(np.logaddexp(x.data.dtype.type(0), x.data), (x,), "softplus")

    def _backward():
        x._accumulate(out.grad * _sigmoid(x.data))
    out._backward = _backward
    return out


def leaky_relu(x: Tensor, slope: float) -> Tensor:
    """
    Elementwise max(x, slope*x).

    The derivative at exactly zero is taken to be `slope`; slope=0 gives ReLU.
    """
    if not 0.0 <= slope < 1.0:
        raise ContractError(f"leaky_relu slope must lie in [0, 1), got {slope}")
    positive = x.data > 0
    out = _make(np.where(positive, x.data, x.data * x.data.dtype.type(slope)), (x,), "leaky_relu")

    def _backward():
        x._accumulate(out.grad * np.where(positive, 1.0, slope).astype(x.dtype))
    out._backward = _backward
    return out


# Reductions and shape ops

def tensor_sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = _make(np.asarray(x.data.sum(axis=axis, keepdims=keepdims)), (x,), "sum")

    def _backward():
        grad = out.grad
        if axis is not None and not keepdims:
            grad = np.expand_dims(grad, axis)
        x._accumulate(np.broadcast_to(grad, x.shape))
    out._backward = _backward
    return out


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = x.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([x.shape[a] for a in axes]))
    return scale(tensor_sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(x: Tensor, shape: Tuple[int, ...]) -> Tensor:
    out = _make(x.data.reshape(shape), (x,), "reshape")

    def _backward():
        x._accumulate(out.grad.reshape(x.shape))
    out._backward = _backward
    return out


def swap_last(x: Tensor) -> Tensor:
    """Swap the last two axes."""
    out = _make(np.swapaxes(x.data, -1, -2), (x,), "swap_last")

    def _backward():
        x._accumulate(np.swapaxes(out.grad, -1, -2))
    out._backward = _backward
    return out


def broadcast_to(x: Tensor, shape: Tuple[int, ...]) -> Tensor:
    out = _make(np.broadcast_to(x.data, shape), (x,), "broadcast_to")

    def _backward():
        x._accumulate(_unbroadcast(out.grad, x.shape))
    out._backward = _backward
    return out


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    """Concatenate along `axis` (the channel axis by default)."""
    reference = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(reference):
            raise DimensionError(f"concat rank mismatch: {reference} vs {t.shape}")
        for dim, (p, q) in enumerate(zip(reference, t.shape)):
            if dim != axis % len(reference) and p != q:
                raise DimensionError(f"concat shape mismatch: {reference} vs {t.shape}")
    out = _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), "concat")
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def _backward():
        for t, piece in zip(tensors, np.split(out.grad, bounds, axis=axis)):
            t._accumulate(piece)
    out._backward = _backward
    return out


def take_along_last(x: Tensor, indices: np.ndarray) -> Tensor:
    """Gather x[..., indices[...]] on the last axis."""
    idx = np.asarray(indices)[..., None]
    out = _make(np.take_along_axis(x.data, idx, axis=-1)[..., 0], (x,), "take_along_last")

    def _backward():
        grad = np.zeros_like(x.data)
        np.put_along_axis(grad, idx, out.grad[..., None], axis=-1)
        x._accumulate(grad)
    out._backward = _backward
    return out


# Linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    Matrix product with numpy batching semantics.

    Handles r×k · k×c as well as batched B×N×k · k×c (shared per-point
    linear maps) and B×N×k · B×k×k (per-cloud transforms).
    """
    a = as_tensor(a)
    b = as_tensor(b, a)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} and {b.shape}")
    out = _make(np.matmul(a.data, b.data), (a, b), "matmul")

    def _backward():
        if a.requires_grad:
            a._accumulate(_unbroadcast(np.matmul(out.grad, np.swapaxes(b.data, -1, -2)), a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), out.grad), b.shape))
    out._backward = _backward
    return out


# Network-specific ops

def log_softmax(x: Tensor) -> Tensor:
    """Numerically stable log-softmax over the last axis."""
    if x.shape[-1] < 2:
        raise DimensionError(f"log_softmax needs at least 2 classes, got shape {x.shape}")
    if not np.all(np.isfinite(x.data)):
        raise NumericError("log_softmax received non-finite input")
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    value = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out = _make(value, (x,), "log_softmax")

    def _backward():
        probs = np.exp(value)
        x._accumulate(out.grad - probs * out.grad.sum(axis=-1, keepdims=True))
    out._backward = _backward
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    """Plain softmax over the last axis (no graph)."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def max_over_points(x: Tensor) -> Tuple[Tensor, np.ndarray]:
    """
    Per-channel maximum over the point axis of a B×N×C tensor.

    Ties go to the lowest point index, so the backward pass routes the
    gradient to exactly one entry per (batch, channel).

    Returns:
        Tuple of (B×C tensor, B×C argmax indices)
    """
    if x.ndim != 3 or x.shape[1] < 1:
        raise DimensionError(f"max_over_points expects B×N×C with N >= 1, got {x.shape}")
    argmax = np.argmax(x.data, axis=1)
    value = np.take_along_axis(x.data, argmax[:, None, :], axis=1)[:, 0, :]
    out = _make(value, (x,), "max_over_points")

    def _backward():
        grad = np.zeros_like(x.data)
        np.put_along_axis(grad, argmax[:, None, :], out.grad[:, None, :], axis=1)
        x._accumulate(grad)
    out._backward = _backward
    return out, argmax


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    mean: Optional[np.ndarray] = None,
    var: Optional[np.ndarray] = None,
    eps: float = 1e-5,
) -> Tuple[Tensor, np.ndarray, np.ndarray]:
    """
    Batch normalization over every axis except the last.

    With `mean`/`var` given (inference) those statistics are constants;
    otherwise the batch statistics are used and differentiated through.

    Returns:
        Tuple of (normalized tensor, mean used, biased variance used)
    """
    axes = tuple(range(x.ndim - 1))
    use_batch = mean is None
    if use_batch:
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (x.data - mean) * inv_std
    out = _make((x_hat * gamma.data + beta.data).astype(x.dtype, copy=False), (x, gamma, beta), "batch_norm")
    count = x.data.size // x.shape[-1]

    def _backward():
        g = out.grad
        gamma._accumulate(np.sum(g * x_hat, axis=axes))
        beta._accumulate(np.sum(g, axis=axes))
        if not x.requires_grad:
            return
        g_hat = g * gamma.data
        if use_batch:
            dx = (inv_std / count) * (
                count * g_hat
                - g_hat.sum(axis=axes)
                - x_hat * np.sum(g_hat * x_hat, axis=axes)
            )
        else:
            dx = g_hat * inv_std
        x._accumulate(dx)
    out._backward = _backward
    return out, mean, var

