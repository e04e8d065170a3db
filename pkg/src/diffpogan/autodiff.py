"""Reverse-mode automatic differentiation over dense float64 numpy arrays.

Deliberately small: only the operations the actor-critic stack needs, all
vectorized over leading batch dimensions. Every value is float64; graphs are
built per forward pass and discarded after ``backward``.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np


class DimensionError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class NumericError(ArithmeticError):
    """A value became NaN/Inf, or an update was refused because inputs had."""


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (forward values only)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


@contextlib.contextmanager
def frozen(params: Sequence["Tensor"]):
    """Temporarily treat ``params`` as constants: no gradient reaches them."""
    flags = [p.requires_grad for p in params]
    for p in params:
        p.requires_grad = False
    try:
        yield
    finally:
        for p, f in zip(params, flags):
            p.requires_grad = f


class Tensor:
    """A float64 ndarray plus an optional backward closure.

    ``grad`` accumulates d(loss)/d(self) during ``backward``; it is never
    mutated in place, so backward closures may hand the same array to several
    parents.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        """Same values, cut off from the graph."""
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Backpropagate from a scalar; fills ``grad`` on reachable tensors."""
        if self.data.size != 1:
            raise ValueError(
                f"backward requires a scalar, got shape {self.data.shape}"
            )
        if not self.requires_grad:
            raise ValueError("backward on a tensor with no gradient path")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, emitted = stack.pop()
            if emitted:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        _accumulate(self, np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    # operator sugar; scalars and ndarrays are treated as constants
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    t.grad = g if t.grad is None else t.grad + g


def _node(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g, b.data.shape))

    return _node(data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data - b.data

    def backward(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(-g, b.data.shape))

    return _node(data, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    def backward(g):
        if a.requires_grad:
            _accumulate(a, -g)

    return _node(-a.data, (a,), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return _node(data, (a, b), backward)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise DimensionError(
            f"matmul expects 2-D operands, got {a.data.shape} @ {b.data.shape}"
        )
    if a.data.shape[1] != b.data.shape[0]:
        raise DimensionError(
            f"matmul inner dims differ: {a.data.shape} @ {b.data.shape}"
        )
    data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g @ b.data.T)
        if b.requires_grad:
            _accumulate(b, a.data.T @ g)

    return _node(data, (a, b), backward)


def linear(x, w: Tensor, b: Tensor) -> Tensor:
    """Fused affine map ``x @ w + b`` (one graph node instead of two)."""
    x = as_tensor(x)
    if x.data.ndim != 2:
        raise DimensionError(f"linear expects 2-D input, got {x.data.shape}")
    if x.data.shape[1] != w.data.shape[0]:
        raise DimensionError(
            f"linear input dim {x.data.shape[1]} != weight in dim {w.data.shape[0]}"
        )
    data = x.data @ w.data + b.data

    def backward(g):
        if x.requires_grad:
            _accumulate(x, g @ w.data.T)
        if w.requires_grad:
            _accumulate(w, x.data.T @ g)
        if b.requires_grad:
            _accumulate(b, g.sum(axis=0))

    return _node(data, (x, w, b), backward)


def relu(x: Tensor) -> Tensor:
    data = np.maximum(x.data, 0.0)

    def backward(g):
        if x.requires_grad:
            _accumulate(x, g * (x.data > 0.0))

    return _node(data, (x,), backward)


def tanh(x: Tensor) -> Tensor:
    data = np.tanh(x.data)

    def backward(g):
        if x.requires_grad:
            _accumulate(x, g * (1.0 - data * data))

    return _node(data, (x,), backward)


def mish(x: Tensor) -> Tensor:
    """x * tanh(softplus(x)), with softplus computed stably."""
    sp = np.logaddexp(0.0, x.data)
    tsp = np.tanh(sp)
    data = x.data * tsp

    def backward(g):
        if x.requires_grad:
            sig = 0.5 * (1.0 + np.tanh(0.5 * x.data))
            _accumulate(x, g * (tsp + x.data * (1.0 - tsp * tsp) * sig))

    return _node(data, (x,), backward)


def sigmoid(x: Tensor) -> Tensor:
    data = 0.5 * (1.0 + np.tanh(0.5 * x.data))

    def backward(g):
        if x.requires_grad:
            _accumulate(x, g * data * (1.0 - data))

    return _node(data, (x,), backward)


def exp(x: Tensor) -> Tensor:
    data = np.exp(x.data)

    def backward(g):
        if x.requires_grad:
            _accumulate(x, g * data)

    return _node(data, (x,), backward)


def log(x: Tensor) -> Tensor:
    data = np.log(x.data)

    def backward(g):
        if x.requires_grad:
            _accumulate(x, g / x.data)

    return _node(data, (x,), backward)


def square(x: Tensor) -> Tensor:
    data = x.data * x.data

    def backward(g):
        if x.requires_grad:
            _accumulate(x, g * (2.0 * x.data))

    return _node(data, (x,), backward)


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values to [lo, hi]; gradient passes through the interior only."""
    data = np.clip(x.data, lo, hi)

    def backward(g):
        if x.requires_grad:
            _accumulate(x, g * ((x.data >= lo) & (x.data <= hi)))

    return _node(data, (x,), backward)


def minimum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise min; gradient follows the smaller operand (ties go to a)."""
    take_a = a.data <= b.data
    data = np.where(take_a, a.data, b.data)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g * take_a)
        if b.requires_grad:
            _accumulate(b, g * ~take_a)

    return _node(data, (a, b), backward)


def sum_last(x: Tensor) -> Tensor:
    """Sum over the last axis, keeping it as size 1."""
    data = x.data.sum(axis=-1, keepdims=True)

    def backward(g):
        if x.requires_grad:
            _accumulate(x, np.broadcast_to(g, x.data.shape))

    return _node(data, (x,), backward)


def mean(x: Tensor) -> Tensor:
    """Mean over all entries, as a scalar tensor."""
    data = np.asarray(x.data.mean())

    def backward(g):
        if x.requires_grad:
            _accumulate(x, np.broadcast_to(g / x.data.size, x.data.shape))

    return _node(data, (x,), backward)


def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    data = np.concatenate([p.data for p in parts], axis=axis)
    widths = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + widths)

    def backward(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                idx: list = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                _accumulate(p, g[tuple(idx)])

    return _node(data, tuple(parts), backward)


def check_finite(x: Tensor | np.ndarray, what: str = "value") -> None:
    data = x.data if isinstance(x, Tensor) else x
    if not np.all(np.isfinite(data)):
        raise NumericError(f"non-finite {what} encountered")
