"""Dense float64 tensors with a small reverse-mode autodiff tape.

A ``Tensor`` wraps a numpy array. Operations on tensors that (transitively)
depend on a ``requires_grad`` leaf record a backward closure; everything else
runs as plain numpy with no graph bookkeeping, which keeps evaluation cheap.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

LEAKY_SLOPE = 0.01
PROB_CLAMP = 1e-12


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


class Tensor:
    __slots__ = ("data", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, *, _parents=(), _backward=None, op: str = ""):
        arr = np.asarray(data, dtype=np.float64)
        if not np.isfinite(arr).all():
            raise NonFiniteError(f"non-finite values produced by {op or 'constructor'}")
        self.data = arr
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = _parents
        self._backward: Callable[[np.ndarray], tuple] | None = _backward
        self.op = op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    __array_priority__ = 1000

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(other))

    def __rsub__(self, other):
        return add(other, neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a tensor is not supported; multiply by a constant instead")
        return mul(self, 1.0 / float(other))

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)


def lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents: tuple[Tensor, ...], backward, op: str) -> Tensor:
    if any(p.requires_grad for p in parents):
        return Tensor(data, True, _parents=parents, _backward=backward, op=op)
    return Tensor(data, op=op)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


def add(a, b) -> Tensor:
    a, b = lift(a), lift(b)
    try:
        out = a.data + b.data
    except ValueError as exc:
        raise ShapeError(f"cannot add shapes {a.shape} and {b.shape}") from exc
    return _make(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def neg(a) -> Tensor:
    a = lift(a)
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def mul(a, b) -> Tensor:
    a, b = lift(a), lift(b)
    try:
        out = a.data * b.data
    except ValueError as exc:
        raise ShapeError(f"cannot multiply shapes {a.shape} and {b.shape}") from exc
    return _make(
        out,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
        "mul",
    )


def matmul(a, b) -> Tensor:
    a, b = lift(a), lift(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions disagree: {a.shape} x {b.shape}")
    return _make(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g), "matmul")


def tsum(a, axis=None) -> Tensor:
    a = lift(a)
    shape = a.shape

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _make(a.data.sum(axis=axis), (a,), backward, "sum")


def mean(a, axis=None) -> Tensor:
    a = lift(a)
    n = a.data.size if axis is None else a.shape[axis]
    if n == 0:
        raise ShapeError("mean of an empty tensor")
    return mul(tsum(a, axis), 1.0 / n)


def log(a) -> Tensor:
    a = lift(a)
    if (a.data <= 0).any():
        raise NonFiniteError("log of a non-positive value")
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def exp(a) -> Tensor:
    a = lift(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,), "exp")


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp into [lo, hi]; gradient passes only where the input was inside."""
    a = lift(a)
    inside = (a.data >= lo) & (a.data <= hi)
    return _make(np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,), "clip")


def leaky_relu(a, slope: float = LEAKY_SLOPE) -> Tensor:
    a = lift(a)
    factor = np.where(a.data > 0, 1.0, slope)
    return _make(a.data * factor, (a,), lambda g: (g * factor,), "leaky_relu")


def _sigmoid_np(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a) -> Tensor:
    a = lift(a)
    s = _sigmoid_np(a.data)
    return _make(s, (a,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def _softmax_np(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax(a) -> Tensor:
    """Row-wise softmax over the last axis, max-subtracted."""
    a = lift(a)
    if a.data.size == 0 or a.ndim == 0:
        raise ShapeError("softmax of an empty input")
    s = _softmax_np(a.data)

    def backward(g):
        dot = (g * s).sum(axis=-1, keepdims=True)
        return (s * (g - dot),)

    return _make(s, (a,), backward, "softmax")


def concat(parts: Sequence, axis: int = -1) -> Tensor:
    ts = [lift(p) for p in parts]
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"cannot concatenate shapes {[t.shape for t in ts]}") from exc
    bounds = np.cumsum([t.shape[axis] for t in ts])[:-1]
    return _make(out, tuple(ts), lambda g: tuple(np.split(g, bounds, axis=axis)), "concat")


def kl_divergence(p, q, *, check: bool = True) -> Tensor:
    """KL(p || q) summed over the last axis; batches are averaged over rows.

    ``0 * ln(0/q)`` is taken as 0 and ``q`` is clamped below at 1e-12 before
    the log. Gradients flow into both arguments.
    """
    p, q = lift(p), lift(q)
    if p.shape != q.shape:
        raise ShapeError(f"distribution shapes differ: {p.shape} vs {q.shape}")
    if p.data.size == 0:
        raise ShapeError("empty distribution")
    if check:
        for name, t in (("p", p), ("q", q)):
            if (t.data < 0).any() or not np.allclose(t.data.sum(axis=-1), 1.0, rtol=0, atol=1e-9):
                raise ValueError(f"{name} is not a probability distribution")
    pd = p.data
    qc = np.maximum(q.data, PROB_CLAMP)
    pos = pd > 0
    logp = np.log(np.where(pos, pd, 1.0))
    terms = np.where(pos, pd * (logp - np.log(qc)), 0.0)
    rows = terms.sum(axis=-1)
    n = rows.size
    value = rows.mean() if p.ndim > 1 else rows

    def backward(g):
        scale = g / n if p.ndim > 1 else g
        gp = np.where(pos, logp - np.log(qc) + 1.0, 0.0) * scale
        gq = np.where(q.data >= PROB_CLAMP, -pd / qc, 0.0) * scale
        return gp, gq

    return _make(value, (p, q), backward, "kl")


def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
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


def backward(loss: Tensor, wrt: Iterable[Tensor]) -> list[np.ndarray]:
    """Gradients of a scalar ``loss`` with respect to each tensor in ``wrt``.

    Tensors the loss does not depend on get an all-zero gradient.
    """
    wrt = list(wrt)
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {}
    if loss.requires_grad:
        grads[id(loss)] = np.ones_like(loss.data)
        for node in reversed(_toposort(loss)):
            g = grads.get(id(node))
            if g is None or node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = grads[key] + pg if key in grads else pg
    return [grads.get(id(t), np.zeros_like(t.data)).reshape(t.shape) for t in wrt]
