"""Tape-based reverse-mode autodiff.

A ``Tensor`` wraps a float64 numpy array together with the closure that
backpropagates an upstream gradient to its parents.  Graphs here are
coarse-grained: whole layers (LSTM, layer norm, dense) are single nodes
with hand-derived backward passes, and only the loss assembly uses the
small elementwise ops in this module.  Gradient accumulation order is
fixed by construction (reverse depth-first postorder, parents visited in
the order they were passed to the op), which makes repeated runs of the
same graph bitwise reproducible.
"""
from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from ..exceptions import ShapeError

# Backward closures map the upstream gradient to one contribution per
# parent; ``None`` prunes that branch entirely (no accumulation at all,
# not even a zero, so downstream buffers stay bitwise untouched).
BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    """A node in the autodiff graph.

    Parameters
    ----------
    data : array_like
        Values, converted to a float64 numpy array.
    parents : tuple of Tensor
        Graph predecessors, in the order the backward closure reports
        contributions for them.
    backward_fn : callable, optional
        Maps the upstream gradient to per-parent contributions.  Leaf
        tensors (parameters, inputs) have none.
    """

    __slots__ = ("data", "grad", "_parents", "_backward_fn")

    def __init__(self, data, parents: tuple = (), backward_fn: Optional[BackwardFn] = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self._parents = parents
        self._backward_fn = backward_fn

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def zero_grad(self) -> None:
        self.grad = None

    def item(self) -> float:
        return float(self.data)

    def backward(self) -> None:
        """Backpropagate from a scalar root through the whole graph.

        Every reachable tensor with at least one surviving path to the
        root receives a ``.grad``; contributions from multiple consumers
        accumulate in reverse topological order.
        """
        if self.data.shape != ():
            raise ShapeError(
                f"backward() requires a scalar root, got shape {self.data.shape}"
            )
        order = _toposort(self)
        self.grad = np.asarray(1.0)
        for node in reversed(order):
            if node._backward_fn is None or node.grad is None:
                continue
            contributions = node._backward_fn(node.grad)
            for parent, contrib in zip(node._parents, contributions):
                if contrib is None:
                    continue
                if parent.grad is None:
                    parent.grad = contrib
                else:
                    parent.grad = parent.grad + contrib

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, leaf={self._backward_fn is None})"


def _toposort(root: Tensor) -> list:
    """Iterative depth-first postorder over the graph below ``root``.

    Parents are explored in the order they were registered so that the
    walk, and therefore the gradient accumulation order, is a pure
    function of graph construction order.
    """
    order: list = []
    seen: set = set()
    stack: list = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        # reversed push so parents pop (and complete) in registration order
        for parent in reversed(node._parents):
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def _require_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"{op}: shape mismatch {a.data.shape} vs {b.data.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "add")
    return Tensor(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "sub")
    return Tensor(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "mul")
    return Tensor(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def scale(a: Tensor, factor: float) -> Tensor:
    """Multiply by a python float (non-differentiable constant)."""
    factor = float(factor)
    return Tensor(a.data * factor, (a,), lambda g: (g * factor,))


def tsum(a: Tensor) -> Tensor:
    """Sum over all elements to a scalar."""
    shape = a.data.shape
    return Tensor(a.data.sum(), (a,), lambda g: (np.full(shape, g, dtype=np.float64),))


def tmean(a: Tensor) -> Tensor:
    """Mean over all elements to a scalar."""
    n = a.data.size
    if n == 0:
        raise ShapeError("mean of an empty tensor")
    shape = a.data.shape
    inv = 1.0 / n
    return Tensor(a.data.mean(), (a,), lambda g: (np.full(shape, g * inv, dtype=np.float64),))


def square(a: Tensor) -> Tensor:
    return Tensor(a.data * a.data, (a,), lambda g: (g * (2.0 * a.data),))


def concat_scalars(parts: Sequence[Tensor]) -> Tensor:
    """Stack scalar tensors into a 1-d tensor (used for penalty vectors)."""
    for p in parts:
        if p.data.shape != ():
            raise ShapeError("concat_scalars expects scalar tensors")
    parts = tuple(parts)
    data = np.array([p.data for p in parts], dtype=np.float64)

    def backward(g: np.ndarray):
        return tuple(np.asarray(g[i]) for i in range(len(parts)))

    return Tensor(data, parts, backward)
