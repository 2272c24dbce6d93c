"""Rank-4 tensor type with a recorded tape for reverse-mode differentiation.

Every value is a dense (batch, channel, height, width) array. Operations are
pure functions that record parent links and a VJP closure; `backward` walks
the tape in reverse topological order and accumulates gradients into leaf
tensors that require them (typically `Parameter`s).
"""

from __future__ import annotations

import numpy as np
from scipy import special


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


def _check4(data: np.ndarray) -> np.ndarray:
    if data.ndim != 4:
        raise ShapeError(f"expected a rank-4 array, got shape {data.shape}")
    if min(data.shape) < 1:
        raise ShapeError(f"all shape components must be >= 1, got {data.shape}")
    return data


class Tensor:
    """A rank-4 array plus optional tape bookkeeping.

    `_parents` and `_vjp` are set only on non-leaf nodes. `grad` is lazily
    allocated on leaves that require gradients.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad=False, _parents=(), _vjp=None):
        self.data = _check4(np.asarray(data))
        self.grad = None
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in _parents)
        self._parents = tuple(_parents)
        self._vjp = _vjp

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, grad={self.requires_grad})"

    def detach(self) -> "Tensor":
        """Cut the tape: same data, no gradient flow."""
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    # -- operator sugar ------------------------------------------------------

    def _coerce(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return other
        arr = np.asarray(other, dtype=self.dtype)
        return Tensor(arr.reshape((1,) * (4 - arr.ndim) + arr.shape))

    def __add__(self, other):
        return add(self, self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, self._coerce(other))

    def __rsub__(self, other):
        return sub(self._coerce(other), self)

    def __mul__(self, other):
        return mul(self, self._coerce(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, self._coerce(other))

    def __rtruediv__(self, other):
        return div(self._coerce(other), self)

    def __neg__(self):
        return neg(self)

    def backward(self):
        backward(self)


class Parameter(Tensor):
    """Trainable leaf with a persistent gradient accumulator and a name path."""

    __slots__ = ("name",)

    def __init__(self, data, name: str = ""):
        super().__init__(data, requires_grad=True)
        self.grad = np.zeros_like(self.data)
        self.name = name

    def zero_grad(self):
        self.grad[...] = 0.0

    def __repr__(self):
        return f"Parameter(name={self.name!r}, shape={self.shape})"


# -- reverse pass ------------------------------------------------------------


def _toposort(root: Tensor):
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(root: Tensor):
    """Accumulate d(root)/d(leaf) into every reachable grad-requiring leaf.

    The root must be scalar-valued, shape (1,1,1,1). Intermediate cotangents
    live in a transient map, so repeated calls add up only on leaves.
    """
    if root.shape != (1, 1, 1, 1):
        raise ShapeError(f"backward root must have shape (1,1,1,1), got {root.shape}")
    if not root.requires_grad:
        return
    cot = {id(root): np.ones_like(root.data)}
    for node in reversed(_toposort(root)):
        g = cot.pop(id(node), None)
        if g is None:
            continue
        if node._vjp is None:
            if node.grad is None:
                node.grad = np.zeros_like(node.data)
            node.grad += g
            continue
        for parent, pg in zip(node._parents, node._vjp(g)):
            if not parent.requires_grad or pg is None:
                continue
            acc = cot.get(id(parent))
            if acc is None:
                cot[id(parent)] = pg.copy() if pg.base is not None else pg
            else:
                acc += pg


# -- broadcasting helpers ----------------------------------------------------


def _check_broadcast(a: Tensor, b: Tensor):
    for da, db in zip(a.shape, b.shape):
        if da != db and da != 1 and db != 1:
            raise ShapeError(f"shapes {a.shape} and {b.shape} are not broadcast-compatible")


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    axes = tuple(i for i, (d, s) in enumerate(zip(g.shape, shape)) if s == 1 and d != 1)
    return g.sum(axis=axes, keepdims=True) if axes else g


# -- elementwise primitives --------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b)
    return Tensor(a.data + b.data, _parents=(a, b),
                  _vjp=lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b)
    return Tensor(a.data - b.data, _parents=(a, b),
                  _vjp=lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b)
    return Tensor(a.data * b.data, _parents=(a, b),
                  _vjp=lambda g: (_unbroadcast(g * b.data, a.shape),
                                  _unbroadcast(g * a.data, b.shape)))


def div(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b)
    out = a.data / b.data
    return Tensor(out, _parents=(a, b),
                  _vjp=lambda g: (_unbroadcast(g / b.data, a.shape),
                                  _unbroadcast(-g * out / b.data, b.shape)))


def neg(a: Tensor) -> Tensor:
    return Tensor(-a.data, _parents=(a,), _vjp=lambda g: (-g,))


def absolute(a: Tensor) -> Tensor:
    return Tensor(np.abs(a.data), _parents=(a,), _vjp=lambda g: (g * np.sign(a.data),))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return Tensor(out, _parents=(a,), _vjp=lambda g: (g * out,))


def exp_neg(a: Tensor) -> Tensor:
    """e^(-x), the edge-aware smoothness weight."""
    out = np.exp(-a.data)
    return Tensor(out, _parents=(a,), _vjp=lambda g: (-g * out,))


def log(a: Tensor) -> Tensor:
    return Tensor(np.log(a.data), _parents=(a,), _vjp=lambda g: (g / a.data,))


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return Tensor(out, _parents=(a,), _vjp=lambda g: (g * (0.5 / out),))


def sin(a: Tensor) -> Tensor:
    return Tensor(np.sin(a.data), _parents=(a,), _vjp=lambda g: (g * np.cos(a.data),))


def cos(a: Tensor) -> Tensor:
    return Tensor(np.cos(a.data), _parents=(a,), _vjp=lambda g: (-g * np.sin(a.data),))


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    """Overflow-free logistic (`expit` branches on sign internally)."""
    return special.expit(x)


def sigmoid(a: Tensor) -> Tensor:
    out = _stable_sigmoid(a.data)
    return Tensor(out, _parents=(a,), _vjp=lambda g: (g * out * (1.0 - out),))


def silu(a: Tensor) -> Tensor:
    """x * sigmoid(x)."""
    s = _stable_sigmoid(a.data)
    out = a.data * s
    return Tensor(out, _parents=(a,), _vjp=lambda g: (g * (s + out * (1.0 - s)),))


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    out = np.clip(a.data, lo, hi)
    mask = (a.data > lo) & (a.data < hi)
    return Tensor(out, _parents=(a,), _vjp=lambda g: (g * mask,))


# -- reductions --------------------------------------------------------------


def reduce_sum(a: Tensor, axes=(0, 1, 2, 3)) -> Tensor:
    axes = tuple(axes)
    out = a.data.sum(axis=axes, keepdims=True)
    return Tensor(out, _parents=(a,),
                  _vjp=lambda g: (np.broadcast_to(g, a.shape),))


def reduce_mean(a: Tensor, axes=(0, 1, 2, 3)) -> Tensor:
    axes = tuple(axes)
    count = np.prod([a.shape[i] for i in axes])
    out = a.data.mean(axis=axes, keepdims=True)
    return Tensor(out, _parents=(a,),
                  _vjp=lambda g: (np.broadcast_to(g, a.shape) / count,))


def minimum_over(tensors) -> Tensor:
    """Elementwise minimum over a list of same-shaped tensors.

    The gradient flows only to the argmin; ties break toward the lowest
    list index for determinism.
    """
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("minimum_over needs at least one tensor")
    shape = tensors[0].shape
    for t in tensors[1:]:
        if t.shape != shape:
            raise ShapeError(f"minimum_over shape mismatch: {shape} vs {t.shape}")
    stack = np.stack([t.data for t in tensors])
    idx = np.argmin(stack, axis=0)
    out = np.take_along_axis(stack, idx[None], axis=0)[0]

    def vjp(g):
        return tuple(g * (idx == i) for i in range(len(tensors)))

    return Tensor(out, _parents=tuple(tensors), _vjp=vjp)


# -- channel / spatial rearrangement ----------------------------------------


def concat_channels(*tensors) -> Tensor:
    """Stack tensors along the channel axis, first-to-last."""
    if len(tensors) == 1 and not isinstance(tensors[0], Tensor):
        tensors = tuple(tensors[0])
    n, _, h, w = tensors[0].shape
    for t in tensors[1:]:
        if (t.shape[0], t.shape[2], t.shape[3]) != (n, h, w):
            raise ShapeError(f"concat_channels batch/spatial mismatch: "
                             f"{tensors[0].shape} vs {t.shape}")
    out = np.concatenate([t.data for t in tensors], axis=1)
    splits = np.cumsum([t.shape[1] for t in tensors])[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=1))

    return Tensor(out, _parents=tuple(tensors), _vjp=vjp)


def slice_channels(a: Tensor, start: int, stop: int) -> Tensor:
    if not (0 <= start < stop <= a.shape[1]):
        raise ShapeError(f"channel slice [{start}:{stop}] out of range for {a.shape}")

    def vjp(g):
        full = np.zeros_like(a.data)
        full[:, start:stop] = g
        return (full,)

    return Tensor(a.data[:, start:stop].copy(), _parents=(a,), _vjp=vjp)


def shift2d(a: Tensor, dy: int, dx: int) -> Tensor:
    """out[y, x] = a[clip(y+dy), clip(x+dx)] with replicated borders."""
    _, _, h, w = a.shape
    ys = np.clip(np.arange(h) + dy, 0, h - 1)
    xs = np.clip(np.arange(w) + dx, 0, w - 1)
    out = a.data[:, :, ys[:, None], xs[None, :]]

    def vjp(g):
        dx_arr = np.zeros_like(a.data)
        np.add.at(dx_arr, (slice(None), slice(None), ys[:, None], xs[None, :]), g)
        return (dx_arr,)

    return Tensor(out, _parents=(a,), _vjp=vjp)


def elementwise(op: str, a: Tensor, b: Tensor | None = None, lo=None, hi=None) -> Tensor:
    """Dispatch by name; the registry used by the gradient-check CLI."""
    unary = {"abs": absolute, "exp-neg": exp_neg, "silu": silu, "sigmoid": sigmoid}
    binary = {"add": add, "sub": sub, "mul": mul}
    if op == "clamp":
        return clamp(a, lo, hi)
    if op in unary:
        return unary[op](a)
    if op in binary:
        if b is None:
            raise ShapeError(f"elementwise '{op}' needs two operands")
        return binary[op](a, b)
    raise ValueError(f"unknown elementwise op {op!r}")
