"""Dense float64 tensors with a reverse-mode tape.

Every differentiable op is a plain function taking and returning ``Tensor``.
While a ``Tape`` is active (``with Tape() as tape:``) ops whose inputs require
gradients append a node holding the forward rule and the vector-Jacobian
product; ``tape.backward(loss)`` walks the nodes in reverse.
"""
from __future__ import annotations

import contextvars
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

DTYPE = np.float64

_active_tape: contextvars.ContextVar["Tape | None"] = contextvars.ContextVar("tape", default=None)


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name

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

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    # operator sugar
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
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@dataclass
class Node:
    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    forward: Callable[..., np.ndarray]
    vjp: Callable[[np.ndarray], Sequence[np.ndarray | None]]


@dataclass
class Tape:
    nodes: list[Node] = field(default_factory=list)

    def __enter__(self) -> "Tape":
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, *exc):
        _active_tape.reset(self._token)
        return False

    def backward(self, loss: Tensor, seed: np.ndarray | None = None) -> None:
        """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf."""
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data) if seed is None else np.asarray(seed, DTYPE)}
        for node in reversed(self.nodes):
            g = grads.pop(id(node.output), None)
            if g is None:
                continue
            for inp, gi in zip(node.inputs, node.vjp(g)):
                if gi is None or not inp.requires_grad:
                    continue
                if gi.shape != inp.shape:
                    raise ShapeError(f"{node.op}: gradient shape {gi.shape} != input shape {inp.shape}")
                key = id(inp)
                grads[key] = grads[key] + gi if key in grads else gi
        # whatever remains belongs to leaves (nodes consumed their own entries)
        leaves = {id(t): t for n in self.nodes for t in n.inputs if t.requires_grad}
        if id(loss) not in {id(n.output) for n in self.nodes}:
            leaves[id(loss)] = loss
        for key, g in grads.items():
            t = leaves.get(key)
            if t is None:
                continue
            t.grad = g.copy() if t.grad is None else t.grad + g

    def replay(self) -> list[np.ndarray]:
        """Re-run every recorded forward rule on the recorded inputs."""
        values: dict[int, np.ndarray] = {}
        out = []
        for node in self.nodes:
            args = [values.get(id(t), t.data) for t in node.inputs]
            y = node.forward(*args)
            values[id(node.output)] = y
            out.append(y)
        return out


def _record(op: str, inputs: tuple[Tensor, ...], forward, vjp) -> Tensor:
    out = Tensor(forward(*(t.data for t in inputs)))
    tape = _active_tape.get()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.nodes.append(Node(op, inputs, out, forward, vjp))
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# --- elementwise ---------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _record("add", (a, b), np.add,
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _record("sub", (a, b), np.subtract,
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _record("mul", (a, b), np.multiply,
                   lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def neg(a: Tensor) -> Tensor:
    return _record("neg", (a,), np.negative, lambda g: (-g,))


def power(a: Tensor, p: float) -> Tensor:
    """Elementwise ``a ** p`` for a constant exponent."""
    return _record("power", (a,), lambda x: np.power(x, p),
                   lambda g: (g * p * np.power(a.data, p - 1),))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split on sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid(a: Tensor) -> Tensor:
    out = _record("sigmoid", (a,), _sigmoid, lambda g: (g * s * (1.0 - s),))
    s = out.data
    return out


def relu(a: Tensor) -> Tensor:
    return _record("relu", (a,), lambda x: np.maximum(x, 0.0),
                   lambda g: (g * (a.data > 0),))


def log(a: Tensor) -> Tensor:
    return _record("log", (a,), np.log, lambda g: (g / a.data,))


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp to [lo, hi]; gradient passes only where the input was inside."""
    return _record("clip", (a,), lambda x: np.clip(x, lo, hi),
                   lambda g: (g * ((a.data >= lo) & (a.data <= hi)),))


# --- linear algebra ------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; leading dimensions broadcast like ``np.matmul``."""
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def vjp(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _record("matmul", (a, b), np.matmul, vjp)


def transpose(a: Tensor) -> Tensor:
    """Swap the last two axes."""
    return _record("transpose", (a,), lambda x: np.swapaxes(x, -1, -2),
                   lambda g: (np.swapaxes(g, -1, -2),))


# --- structural ----------------------------------------------------------

def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    """Row-major reshape."""
    shape = tuple(shape)
    return _record("reshape", (a,), lambda x: np.reshape(x, shape),
                   lambda g: (np.reshape(g, a.shape),))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    return _record("concat", tensors, lambda *xs: np.concatenate(xs, axis=axis),
                   lambda g: tuple(np.split(g, splits, axis=axis)))


def take_rows(a: Tensor, idx) -> Tensor:
    """Gather rows ``a[idx]``; the backward pass scatter-adds into ``a``."""
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size and (idx.min() < -a.shape[0] or idx.max() >= a.shape[0]):
        raise IndexError(f"take_rows: index out of range for {a.shape[0]} rows")

    def vjp(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, idx, g)
        return (ga,)

    return _record("take_rows", (a,), lambda x: x[idx], vjp)


# --- reductions ----------------------------------------------------------

def _expand(g: np.ndarray, shape, axis, keepdims) -> np.ndarray:
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape).copy()


def reduce_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    return _record("sum", (a,), lambda x: np.sum(x, axis=axis, keepdims=keepdims),
                   lambda g: (_expand(g, a.shape, axis, keepdims),))


def reduce_mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = a.data.size if axis is None else np.prod([a.shape[ax] for ax in np.atleast_1d(axis)])
    return _record("mean", (a,), lambda x: np.mean(x, axis=axis, keepdims=keepdims),
                   lambda g: (_expand(g, a.shape, axis, keepdims) / n,))


def batch_stats(x: Tensor) -> tuple[Tensor, Tensor]:
    """Per-column mean and biased variance of a [B, h] tensor."""
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError(f"batch_stats needs a non-empty [B, h] input, got {x.shape}")
    mean = reduce_mean(x, axis=0)
    centered = sub(x, mean)
    var = reduce_mean(mul(centered, centered), axis=0)
    return mean, var


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    """Norm-relative discrepancy; 0 when both sides vanish."""
    denom = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if denom < 1e-300 else float(np.linalg.norm(a - b) / denom)


def numeric_grad(f: Callable[[], float], x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of scalar ``f`` w.r.t. array ``x`` (mutated in place, restored)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = x[i]
        x[i] = orig + step
        fp = f()
        x[i] = orig - step
        fm = f()
        x[i] = orig
        g[i] = (fp - fm) / (2 * step)
    return g
