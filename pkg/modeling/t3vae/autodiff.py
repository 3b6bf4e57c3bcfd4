"""Reverse-mode automatic differentiation over dense float64 numpy arrays.

A `Tensor` records the op that produced it (its parents plus a closure that
pushes the output gradient back to them). `Tensor.backward()` walks the graph
in reverse topological order. Leaves that require gradients accumulate into
`.grad` across calls until `zero_grad()`; intermediate nodes are reset on
every backward pass.

Broadcasting follows numpy; gradients flowing into a broadcast operand are
summed back to its shape.
"""
from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError

LEAKY_RELU_SLOPE = 0.01


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    def __init__(
        self,
        value,
        requires_grad: bool = False,
        _parents: Sequence["Tensor"] = (),
        _backward: Callable[[np.ndarray], None] | None = None,
    ):
        self.value = np.array(value, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = np.zeros_like(self.value) if self.requires_grad else None
        self._parents = tuple(_parents)
        self._backward = _backward

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> tuple:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def numpy(self) -> np.ndarray:
        return self.value.copy()

    def item(self) -> float:
        return float(self.value)

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.value)

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        self.grad += _unbroadcast(grad, self.value.shape)

    def _topo(self) -> list["Tensor"]:
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
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
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        return order

    def backward(self, grad: np.ndarray | None = None) -> None:
        if not self.requires_grad:
            raise ContractError("backward() called on a tensor that does not require grad")
        if grad is None:
            if self.value.size != 1:
                raise ContractError("backward() without an explicit gradient needs a scalar output")
            grad = np.ones_like(self.value)
        order = self._topo()
        for node in order:
            if node._parents:
                node.grad = np.zeros_like(node.value)
        self.grad = np.array(grad, dtype=np.float64).reshape(self.value.shape)
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other) -> "Tensor":
        other = as_tensor(other)
        a, b = self, other

        def back(g):
            if a.requires_grad:
                a._accumulate(g)
            if b.requires_grad:
                b._accumulate(g)

        return _result(a.value + b.value, (a, b), back)

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        a = self
        return _result(-a.value, (a,), lambda g: a._accumulate(-g))

    def __sub__(self, other) -> "Tensor":
        return self + (-as_tensor(other))

    def __rsub__(self, other) -> "Tensor":
        return as_tensor(other) + (-self)

    def __mul__(self, other) -> "Tensor":
        other = as_tensor(other)
        a, b = self, other

        def back(g):
            if a.requires_grad:
                a._accumulate(g * b.value)
            if b.requires_grad:
                b._accumulate(g * a.value)

        return _result(a.value * b.value, (a, b), back)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        other = as_tensor(other)
        a, b = self, other

        def back(g):
            if a.requires_grad:
                a._accumulate(g / b.value)
            if b.requires_grad:
                b._accumulate(-g * a.value / (b.value * b.value))

        return _result(a.value / b.value, (a, b), back)

    def __rtruediv__(self, other) -> "Tensor":
        return as_tensor(other) / self

    def __pow__(self, exponent: float) -> "Tensor":
        if isinstance(exponent, Tensor):
            raise ContractError("only scalar exponents are supported")
        a, p = self, float(exponent)
        return _result(a.value**p, (a,), lambda g: a._accumulate(g * p * a.value ** (p - 1.0)))

    def __matmul__(self, other) -> "Tensor":
        other = as_tensor(other)
        a, b = self, other
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ContractError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

        def back(g):
            if a.requires_grad:
                a._accumulate(g @ b.value.T)
            if b.requires_grad:
                b._accumulate(a.value.T @ g)

        return _result(a.value @ b.value, (a, b), back)

    def __getitem__(self, index) -> "Tensor":
        a = self

        def back(g):
            full = np.zeros_like(a.value)
            np.add.at(full, index, g)
            a._accumulate(full)

        return _result(a.value[index], (a,), back)

    # -- elementwise --------------------------------------------------------

    def exp(self) -> "Tensor":
        a = self
        out = np.exp(a.value)
        return _result(out, (a,), lambda g: a._accumulate(g * out))

    def log(self) -> "Tensor":
        a = self
        return _result(np.log(a.value), (a,), lambda g: a._accumulate(g / a.value))

    def sqrt(self) -> "Tensor":
        a = self
        out = np.sqrt(a.value)
        return _result(out, (a,), lambda g: a._accumulate(g * 0.5 / out))

    def square(self) -> "Tensor":
        a = self
        return _result(a.value * a.value, (a,), lambda g: a._accumulate(2.0 * g * a.value))

    def leaky_relu(self, slope: float = LEAKY_RELU_SLOPE) -> "Tensor":
        a = self
        mask = a.value > 0
        return _result(
            np.where(mask, a.value, slope * a.value), (a,), lambda g: a._accumulate(np.where(mask, g, slope * g))
        )

    # -- reductions ---------------------------------------------------------

    def sum(self, axis: int | None = None, keepdims: bool = False) -> "Tensor":
        a = self

        def back(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            a._accumulate(np.broadcast_to(g, a.value.shape))

        return _result(a.value.sum(axis=axis, keepdims=keepdims), (a,), back)

    def mean(self, axis: int | None = None, keepdims: bool = False) -> "Tensor":
        count = self.value.size if axis is None else self.value.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) / float(count)


def _result(value: np.ndarray, parents: tuple, backward: Callable[[np.ndarray], None]) -> Tensor:
    requires = any(p.requires_grad for p in parents)
    return Tensor(value, requires_grad=requires, _parents=parents if requires else (), _backward=backward if requires else None)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def concat(tensors: Iterable[Tensor], axis: int = -1) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    value = np.concatenate([p.value for p in parts], axis=axis)
    bounds = np.cumsum([p.value.shape[axis] for p in parts])[:-1]

    def back(g):
        for part, piece in zip(parts, np.split(g, bounds, axis=axis)):
            if part.requires_grad:
                part._accumulate(piece)

    return _result(value, tuple(parts), back)
