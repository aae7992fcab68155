"""
Reverse-mode automatic differentiation over dense float64 arrays.

Every operation returns a new Tensor that remembers its parents and a closure
mapping the upstream gradient to one gradient per parent. ``backward`` walks
the recorded graph in reverse topological order, accumulates gradients into
leaf tensors that require them, and then frees the graph.
"""
from __future__ import annotations

import logging
from typing import Callable, Iterable, Optional, Sequence, Tuple, Union

import numpy as np

from app.config.constants import CONDITION_THRESHOLD
from app.core.errors import DomainError, NumericError, ShapeError, StateError

logger = logging.getLogger(__name__)

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence]
BackwardFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


class Tensor:
    """Dense N-dimensional float64 array participating in a gradient graph."""

    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_backward")

    # Make ``ndarray <op> Tensor`` dispatch to the reflected Tensor operator
    __array_ufunc__ = None

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._parents: Tuple[Tensor, ...] = ()
        self._backward: Optional[BackwardFn] = None

    # ------------------------------------------------------------------
    # Introspection
    # ------------------------------------------------------------------

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    # ------------------------------------------------------------------
    # Backward pass
    # ------------------------------------------------------------------

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """Accumulate d(self)/d(leaf) into every leaf that requires a gradient."""
        if not self.requires_grad:
            raise StateError("backward() called on a tensor that does not require grad")
        if grad is None:
            if self.size != 1:
                raise ShapeError(f"backward() without a seed needs a scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)
        else:
            grad = np.broadcast_to(np.asarray(grad, dtype=np.float64), self.shape).copy()

        order = _topological_order(self)
        grads = {id(self): grad}
        for node in reversed(order):
            node_grad = grads.pop(id(node), None)
            if node_grad is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node.grad = node_grad.copy() if node.grad is None else node.grad + node_grad
                continue
            parent_grads = node._backward(node_grad)
            for parent, parent_grad in zip(node._parents, parent_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + parent_grad
                else:
                    grads[key] = parent_grad

        # The tape is single-use
        for node in order:
            if node._backward is not None:
                node._parents = ()
                node._backward = None

    # ------------------------------------------------------------------
    # Operator sugar
    # ------------------------------------------------------------------

    def __add__(self, other: ArrayLike) -> "Tensor":
        return add(self, other)

    def __radd__(self, other: ArrayLike) -> "Tensor":
        return add(other, self)

    def __sub__(self, other: ArrayLike) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return sub(other, self)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        if np.isscalar(other):
            return scale(self, float(other))
        return hadamard(self, other)

    def __rmul__(self, other: ArrayLike) -> "Tensor":
        return self.__mul__(other)

    def __truediv__(self, other: float) -> "Tensor":
        if not np.isscalar(other):
            raise ShapeError("Tensor division is only defined for scalar divisors")
        return scale(self, 1.0 / float(other))

    def __neg__(self) -> "Tensor":
        return negate(self)

    def __matmul__(self, other: ArrayLike) -> "Tensor":
        return matmul(self, other)

    def __rmatmul__(self, other: ArrayLike) -> "Tensor":
        return matmul(other, self)


def _topological_order(root: Tensor) -> list:
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def as_tensor(value: ArrayLike) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _make(data: np.ndarray, parents: Iterable[Tensor], backward: BackwardFn) -> Tensor:
    parents = tuple(parents)
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` over the axes numpy broadcasting added to reach ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeError(f"{op}: cannot combine shapes {a.shape} and {b.shape}") from exc


# ============================================================================
# Linear algebra
# ============================================================================

def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    return _make(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    return _make(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def hadamard(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "hadamard")
    return _make(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def scale(a: ArrayLike, factor: float) -> Tensor:
    a = as_tensor(a)
    return _make(a.data * factor, (a,), lambda g: (g * factor,))


def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    """Matrix product with numpy semantics for leading batch dimensions."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs at least 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    try:
        data = np.matmul(a.data, b.data)
    except ValueError as exc:
        raise ShapeError(f"matmul batch dimensions differ: {a.shape} @ {b.shape}") from exc

    def backward(g):
        grad_a = np.matmul(g, np.swapaxes(b.data, -1, -2))
        grad_b = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(grad_a, a.shape), _unbroadcast(grad_b, b.shape)

    return _make(data, (a, b), backward)


def transpose(a: ArrayLike) -> Tensor:
    """Swap the last two axes."""
    a = as_tensor(a)
    if a.ndim < 2:
        raise ShapeError(f"transpose needs at least 2-D input, got {a.shape}")
    return _make(np.swapaxes(a.data, -1, -2), (a,), lambda g: (np.swapaxes(g, -1, -2),))


def reshape(a: ArrayLike, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    try:
        data = a.data.reshape(tuple(shape))
    except ValueError as exc:
        raise ShapeError(f"cannot reshape {a.shape} into {tuple(shape)}") from exc
    return _make(data, (a,), lambda g: (g.reshape(a.shape),))


def concat(a: ArrayLike, b: ArrayLike, axis: int = -1) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = np.concatenate([a.data, b.data], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"cannot concatenate {a.shape} and {b.shape} on axis {axis}") from exc
    split = a.shape[axis]

    def backward(g):
        grad_a, grad_b = np.split(g, [split], axis=axis)
        return grad_a, grad_b

    return _make(data, (a, b), backward)


def columns(a: ArrayLike, start: int, stop: int) -> Tensor:
    """Slice ``[start, stop)`` of the last axis."""
    a = as_tensor(a)
    if not 0 <= start < stop <= a.shape[-1]:
        raise ShapeError(f"columns [{start}, {stop}) out of range for last axis of {a.shape}")

    def backward(g):
        grad = np.zeros_like(a.data)
        grad[..., start:stop] = g
        return (grad,)

    return _make(a.data[..., start:stop], (a,), backward)


def identity(n: int) -> Tensor:
    return Tensor(np.eye(n))


def condition_estimate(matrix: np.ndarray, inverse: np.ndarray) -> float:
    """1-norm condition number ``||A||_1 * ||A^-1||_1``."""
    return float(np.linalg.norm(matrix, 1) * np.linalg.norm(inverse, 1))


def matrix_inverse(a: ArrayLike, threshold: float = CONDITION_THRESHOLD) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"matrix_inverse needs a square matrix, got {a.shape}")
    try:
        inverse = np.linalg.inv(a.data)
    except np.linalg.LinAlgError as exc:
        raise NumericError("matrix is singular", condition=float("inf")) from exc
    condition = condition_estimate(a.data, inverse)
    if not np.isfinite(condition) or condition > threshold:
        raise NumericError(
            f"matrix condition estimate {condition:.3e} exceeds threshold {threshold:.1e}",
            condition=condition,
        )

    def backward(g):
        # d(X^-1) = -X^-1 dX X^-1
        return (-inverse.T @ g @ inverse.T,)

    return _make(inverse, (a,), backward)


# ============================================================================
# Elementwise functions
# ============================================================================

def relu(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _make(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def sigmoid(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    x = a.data
    exp_neg = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + exp_neg), exp_neg / (1.0 + exp_neg))
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out ** 2),))


def sin(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    return _make(np.sin(a.data), (a,), lambda g: (g * np.cos(a.data),))


def exp(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,))


def log(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data <= 0):
        raise DomainError(f"log of non-positive value (min {a.data.min():.3e})")
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,))


def square(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    return _make(a.data ** 2, (a,), lambda g: (2.0 * a.data * g,))


def negate(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: (-g,))


def maximum(a: ArrayLike, floor: float) -> Tensor:
    """Elementwise ``max(a, floor)`` for a constant floor."""
    a = as_tensor(a)
    mask = a.data > floor
    return _make(np.where(mask, a.data, floor), (a,), lambda g: (g * mask,))


def clamp(a: ArrayLike, low: float, high: float) -> Tensor:
    a = as_tensor(a)
    mask = (a.data >= low) & (a.data <= high)
    return _make(np.clip(a.data, low, high), (a,), lambda g: (g * mask,))


ELEMENTWISE = {
    "relu": relu,
    "sigmoid": sigmoid,
    "tanh": tanh,
    "sin": sin,
    "exp": exp,
    "log": log,
    "square": square,
    "negate": negate,
}


def elementwise(a: ArrayLike, fn: str) -> Tensor:
    try:
        op = ELEMENTWISE[fn]
    except KeyError as exc:
        raise ValueError(f"Unknown elementwise function '{fn}'") from exc
    return op(a)


# ============================================================================
# Reductions
# ============================================================================

def _expand_reduced(g: np.ndarray, shape: Tuple[int, ...], axis, keepdims: bool) -> np.ndarray:
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape)


def sum(a: ArrayLike, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    return _make(
        np.sum(a.data, axis=axis, keepdims=keepdims),
        (a,),
        lambda g: (_expand_reduced(g, a.shape, axis, keepdims).copy(),),
    )


def mean(a: ArrayLike, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.size if axis is None else a.shape[axis]
    if count == 0:
        raise ShapeError("mean of an empty tensor")
    return _make(
        np.mean(a.data, axis=axis, keepdims=keepdims),
        (a,),
        lambda g: (_expand_reduced(g, a.shape, axis, keepdims) / count,),
    )


def trace(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"trace needs a square matrix, got {a.shape}")
    n = a.shape[0]
    return _make(np.trace(a.data), (a,), lambda g: (g * np.eye(n),))


def l2_norm_sq(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    return _make(np.sum(a.data ** 2), (a,), lambda g: (2.0 * g * a.data,))


def max(a: ArrayLike, axis: Optional[int] = None) -> Tensor:  # noqa: A001
    """Maximum; the gradient flows to the first maximising entry."""
    a = as_tensor(a)
    if a.size == 0:
        raise ShapeError("max of an empty tensor")
    if axis is None:
        index = int(np.argmax(a.data))

        def backward_all(g):
            grad = np.zeros(a.size)
            grad[index] = g
            return (grad.reshape(a.shape),)

        return _make(a.data.reshape(-1)[index], (a,), backward_all)

    indices = np.expand_dims(np.argmax(a.data, axis=axis), axis)

    def backward(g):
        grad = np.zeros_like(a.data)
        np.put_along_axis(grad, indices, np.expand_dims(g, axis), axis=axis)
        return (grad,)

    return _make(np.take_along_axis(a.data, indices, axis=axis).squeeze(axis), (a,), backward)


REDUCTIONS = {
    "sum": sum,
    "mean": mean,
    "trace": trace,
    "l2_norm_sq": l2_norm_sq,
    "max": max,
}


def reduce(a: ArrayLike, op: str) -> Tensor:
    try:
        fn = REDUCTIONS[op]
    except KeyError as exc:
        raise ValueError(f"Unknown reduction '{op}'") from exc
    return fn(a)


def softmax(a: ArrayLike) -> Tensor:
    """Softmax over the last axis."""
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (out * (g - np.sum(g * out, axis=-1, keepdims=True)),)

    return _make(out, (a,), backward)


def log_softmax(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    probs = np.exp(out)

    def backward(g):
        return (g - probs * np.sum(g, axis=-1, keepdims=True),)

    return _make(out, (a,), backward)


# ============================================================================
# Structure learning
# ============================================================================

def acyclicity_penalty(a: ArrayLike, alpha: float) -> Tensor:
    """h(A) = tr[(I + alpha * A o A)^L] - L; zero exactly when A is a DAG."""
    a = as_tensor(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"acyclicity_penalty needs a square matrix, got {a.shape}")
    if alpha <= 0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    n = a.shape[0]
    m = add(identity(n), scale(hadamard(a, a), alpha))
    power = m
    for _ in range(n - 1):
        power = matmul(power, m)
    return sub(trace(power), float(n))
