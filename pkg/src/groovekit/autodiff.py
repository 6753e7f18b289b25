"""Reverse-mode automatic differentiation over numpy arrays.

A small tape: each op returns a new Tensor holding its inputs and a closure
that routes the output gradient back to them.  backward() runs the tape in
reverse topological order.  Gradients are validated against central finite
differences in the test suite.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable tape recording (inference and finite-difference probes)."""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, grad={'set' if self.grad is not None else 'none'})"

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def backward(self) -> None:
        """Backpropagate from this scalar through the recorded tape."""
        if self.data.size != 1:
            raise ValueError("backward() starts from a scalar loss")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # operator sugar; non-Tensor operands become constants
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return take(self, key)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def parameter(data) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def _node(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    if not _GRAD_ENABLED or not any(p.requires_grad for p in parents):
        return Tensor(data)
    out = Tensor(data, requires_grad=True)
    out._parents = parents
    out._backward = backward
    return out


def _sum_to_shape(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Undo numpy broadcasting by summing the gradient down to `shape`."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data + b.data

    def backward(grad):
        if a.requires_grad:
            a._accumulate(_sum_to_shape(grad, a.data.shape))
        if b.requires_grad:
            b._accumulate(_sum_to_shape(grad, b.data.shape))

    return _node(out_data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data * b.data

    def backward(grad):
        if a.requires_grad:
            a._accumulate(_sum_to_shape(grad * b.data, a.data.shape))
        if b.requires_grad:
            b._accumulate(_sum_to_shape(grad * a.data, b.data.shape))

    return _node(out_data, (a, b), backward)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data @ b.data

    def backward(grad):
        if a.requires_grad:
            a._accumulate(grad @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ grad)

    return _node(out_data, (a, b), backward)


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    out_data = _sigmoid(x.data)

    def backward(grad):
        x._accumulate(grad * out_data * (1.0 - out_data))

    return _node(out_data, (x,), backward)


def _sigmoid(values: np.ndarray) -> np.ndarray:
    out = np.empty_like(values)
    pos = values >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-values[pos]))
    ev = np.exp(values[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def tanh(x) -> Tensor:
    x = as_tensor(x)
    out_data = np.tanh(x.data)

    def backward(grad):
        x._accumulate(grad * (1.0 - out_data * out_data))

    return _node(out_data, (x,), backward)


def relu(x) -> Tensor:
    x = as_tensor(x)
    out_data = np.maximum(x.data, 0.0)

    def backward(grad):
        x._accumulate(grad * (x.data > 0.0))

    return _node(out_data, (x,), backward)


def exp(x) -> Tensor:
    x = as_tensor(x)
    out_data = np.exp(x.data)

    def backward(grad):
        x._accumulate(grad * out_data)

    return _node(out_data, (x,), backward)


def log(x) -> Tensor:
    x = as_tensor(x)
    out_data = np.log(x.data)

    def backward(grad):
        x._accumulate(grad / x.data)

    return _node(out_data, (x,), backward)


def square(x) -> Tensor:
    x = as_tensor(x)

    def backward(grad):
        x._accumulate(grad * 2.0 * x.data)

    return _node(x.data * x.data, (x,), backward)


def tsum(x, axis: int | None = None) -> Tensor:
    x = as_tensor(x)
    out_data = x.data.sum(axis=axis)

    def backward(grad):
        if axis is None:
            x._accumulate(np.broadcast_to(grad, x.data.shape).copy())
        else:
            x._accumulate(np.broadcast_to(np.expand_dims(grad, axis), x.data.shape).copy())

    return _node(out_data, (x,), backward)


def tmean(x) -> Tensor:
    x = as_tensor(x)
    size = x.data.size

    def backward(grad):
        x._accumulate(np.broadcast_to(grad / size, x.data.shape).copy())

    return _node(np.asarray(x.data.mean()), (x,), backward)


def concat(parts: list[Tensor], axis: int = 1) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    out_data = np.concatenate([p.data for p in parts], axis=axis)
    widths = [p.data.shape[axis] for p in parts]

    def backward(grad):
        start = 0
        for part, width in zip(parts, widths):
            if part.requires_grad:
                index = [slice(None)] * grad.ndim
                index[axis] = slice(start, start + width)
                part._accumulate(grad[tuple(index)])
            start += width

    return _node(out_data, tuple(parts), backward)


def take(x, key) -> Tensor:
    x = as_tensor(x)
    out_data = x.data[key]

    def backward(grad):
        full = np.zeros_like(x.data)
        full[key] += grad
        x._accumulate(full)

    return _node(out_data, (x,), backward)


def bce_with_logits(logits, targets) -> Tensor:
    """Elementwise binary cross-entropy from logits, stable at saturation.

    d/dlogit is sigmoid(logit) - target.
    """
    logits, targets = as_tensor(logits), as_tensor(targets)
    z = logits.data
    out_data = np.maximum(z, 0.0) - z * targets.data + np.log1p(np.exp(-np.abs(z)))

    def backward(grad):
        if logits.requires_grad:
            logits._accumulate(grad * (_sigmoid(z) - targets.data))
        if targets.requires_grad:
            targets._accumulate(grad * -z)

    return _node(out_data, (logits, targets), backward)
