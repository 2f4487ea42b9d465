"""Dense tensors with a reverse-mode tape.

Only the handful of operations the encoder and its head need are provided.
Each op computes its forward value eagerly with numpy and, when any input
tracks gradients, records a closure that maps the upstream gradient to the
gradients of its inputs.  ``backward`` walks the recorded graph once in
reverse topological order and then discards it.

Arrays default to float32; wrap construction in ``default_dtype(np.float64)``
for tight finite-difference checks.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterator, Sequence

import numpy as np

IGNORE_INDEX = -100

_default_dtype: type = np.float32
_grad_enabled = True
_relu_patterns: list | None = None


def get_default_dtype():
    return _default_dtype


def set_default_dtype(dtype) -> None:
    global _default_dtype
    dtype = np.dtype(dtype).type
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported dtype {dtype!r}; use float32 or float64")
    _default_dtype = dtype


@contextlib.contextmanager
def default_dtype(dtype) -> Iterator[None]:
    previous = _default_dtype
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(previous)


@contextlib.contextmanager
def record_relu_patterns() -> Iterator[list]:
    """Collect the on/off pattern of every ``relu`` evaluated inside the block."""
    global _relu_patterns
    previous = _relu_patterns
    _relu_patterns = []
    try:
        yield _relu_patterns
    finally:
        _relu_patterns = previous


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


class Tensor:
    """An n-d float array that optionally tracks its gradient."""

    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        dtype = dtype or _default_dtype
        if isinstance(data, np.ndarray) and data.dtype == dtype:
            self.data = data
        else:
            self.data = np.asarray(data, dtype=dtype)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_wrap(other, self.dtype)))

    def __rsub__(self, other):
        return add(_wrap(other, self.dtype), neg(self))

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return tmean(self, axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)

    def backward(self) -> None:
        backward(self)


def _wrap(value, dtype=None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value, dtype=dtype)


def _node(data: np.ndarray, parents: Sequence[Tensor], backward_fn) -> Tensor:
    out = Tensor(data, dtype=data.dtype)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a = _wrap(a)
    b = _wrap(b, a.dtype)

    def _back(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _node(a.data + b.data, (a, b), _back)


def neg(a: Tensor) -> Tensor:
    return _node(-a.data, (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    a = _wrap(a)
    b = _wrap(b, a.dtype)

    def _back(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _node(a.data * b.data, (a, b), _back)


def power(a: Tensor, exponent: float) -> Tensor:
    def _back(g):
        return (g * exponent * a.data ** (exponent - 1),)

    return _node(a.data**exponent, (a,), _back)


def relu(x: Tensor) -> Tensor:
    keep = x.data > 0
    if _relu_patterns is not None:
        _relu_patterns.append(keep)
    return _node(np.where(keep, x.data, 0).astype(x.dtype), (x,), lambda g: (g * keep,))


def dropout(x: Tensor, p: float, training: bool, seed=None) -> Tensor:
    """Inverted dropout; ``seed`` may be an int or a ``numpy.random.Generator``.

    Outside training the input object itself is returned.
    """
    if not 0 <= p < 1:
        raise ValueError(f"dropout probability must lie in [0, 1), got {p}")
    if not training or p == 0:
        return x
    rng = np.random.default_rng(seed)
    scale = np.asarray(1.0 / (1.0 - p), dtype=x.dtype)
    mask = (rng.random(x.shape) >= p).astype(x.dtype) * scale
    return _node(x.data * mask, (x,), lambda g: (g * mask,))


# ---------------------------------------------------------------- reductions / shape


def tsum(x: Tensor, axis=None) -> Tensor:
    def _back(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape).astype(x.dtype),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape).astype(x.dtype),)

    return _node(np.asarray(x.data.sum(axis=axis), dtype=x.dtype), (x,), _back)


def tmean(x: Tensor, axis=None) -> Tensor:
    count = x.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(tsum(x, axis), 1.0 / count)


def reshape(x: Tensor, shape) -> Tensor:
    return _node(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes) -> Tensor:
    inverse = np.argsort(axes)
    return _node(x.data.transpose(axes), (x,), lambda g: (g.transpose(inverse),))


def gather(x: Tensor, index) -> Tensor:
    """``x[index]`` for integer-array (advanced) indices."""
    def _back(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        return (full,)

    return _node(x.data[index], (x,), _back)


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(f"ids outside [0, {table.shape[0]})")
    return gather(table, ids)


# ---------------------------------------------------------------- linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a = _wrap(a)
    b = _wrap(b, a.dtype)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError(f"matmul needs operands of rank >= 2, got {a.shape} and {b.shape}")

    def _back(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _node(np.matmul(a.data, b.data), (a, b), _back)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight + bias`` over the last axis of ``x``."""
    if x.ndim < 1 or weight.ndim != 2 or x.shape[-1] != weight.shape[0]:
        raise ValueError(f"linear shape mismatch: input {x.shape} vs weight {weight.shape}")
    if bias is not None and bias.shape != (weight.shape[1],):
        raise ValueError(f"linear shape mismatch: weight {weight.shape} vs bias {bias.shape}")
    d_in, d_out = weight.shape
    flat = x.data.reshape(-1, d_in)
    out = flat @ weight.data
    if bias is not None:
        out = out + bias.data
    out = out.reshape(x.shape[:-1] + (d_out,))

    def _back(g):
        g2 = g.reshape(-1, d_out)
        gx = (g2 @ weight.data.T).reshape(x.shape)
        gw = flat.T @ g2
        gb = g2.sum(axis=0) if bias is not None else None
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _node(out, parents, _back)


# ---------------------------------------------------------------- normalisation


def softmax_rows(x: Tensor, mask=None) -> Tensor:
    """Softmax over the last axis.

    ``mask`` is a 0/1 array broadcastable to ``x``; zero entries are excluded
    and come out exactly 0.
    """
    data = x.data
    if mask is None:
        shifted = data - data.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
    else:
        keep = np.broadcast_to(np.asarray(mask) != 0, data.shape)
        if not keep.any(axis=-1).all():
            raise ValueError("softmax row has every column masked")
        row_max = np.where(keep, data, -np.inf).max(axis=-1, keepdims=True)
        e = np.where(keep, np.exp(np.where(keep, data - row_max, 0)), 0)
    y = (e / e.sum(axis=-1, keepdims=True)).astype(x.dtype)

    def _back(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _node(y, (x,), _back)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-12) -> Tensor:
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ValueError(f"layer_norm parameter shape mismatch: input {x.shape}, gain {gain.shape}, bias {bias.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    centred = x.data - mu
    var = (centred * centred).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (centred * inv_std).astype(x.dtype)
    out = xhat * gain.data + bias.data

    def _back(g):
        lead = tuple(range(g.ndim - 1))
        g_gain = (g * xhat).sum(axis=lead)
        g_bias = g.sum(axis=lead)
        gx_hat = g * gain.data
        gx = inv_std * (
            gx_hat
            - gx_hat.mean(axis=-1, keepdims=True)
            - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True)
        )
        return gx.astype(x.dtype), g_gain, g_bias

    return _node(out, (x, gain, bias), _back)


# ---------------------------------------------------------------- losses


def cross_entropy(logits: Tensor, targets: np.ndarray, ignore_index: int = IGNORE_INDEX) -> tuple[Tensor, int]:
    """Mean softmax cross-entropy over entries whose target is not ``ignore_index``.

    Returns the scalar loss tensor and the number of supervised entries.
    """
    targets = np.asarray(targets)
    if targets.shape != logits.shape[:-1]:
        raise ValueError(f"targets shape {targets.shape} does not match logits {logits.shape}")
    n_classes = logits.shape[-1]
    flat = logits.data.reshape(-1, n_classes)
    t = targets.reshape(-1)
    sel = np.flatnonzero(t != ignore_index)
    if sel.size == 0:
        raise ValueError("no supervised positions: every label is IGNORE")
    if t[sel].min() < 0 or t[sel].max() >= n_classes:
        raise ValueError("target id outside the logit range")
    z = flat[sel].astype(np.float64)
    z = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    picked = z[np.arange(sel.size), t[sel]]
    loss = float(np.mean(log_norm - picked))
    n = int(sel.size)

    def _back(g):
        probs = np.exp(z - log_norm[:, None])
        probs[np.arange(n), t[sel]] -= 1.0
        full = np.zeros(flat.shape, dtype=np.float64)
        full[sel] = probs * (float(np.asarray(g).reshape(-1)[0]) / n)
        return (full.reshape(logits.shape).astype(logits.dtype),)

    # The scalar stays float64 so finite differences are not limited by a float32 round.
    return _node(np.asarray(loss, dtype=np.float64), (logits,), _back), n


# ---------------------------------------------------------------- autodiff


def _topological(root: Tensor) -> list[Tensor]:
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


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every tracked leaf, then drop the graph."""
    if loss.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ValueError("loss does not depend on any tensor that requires grad")
    order = _topological(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones(loss.shape, dtype=loss.dtype)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            if id(parent) in grads:
                grads[id(parent)] = grads[id(parent)] + pg
            else:
                grads[id(parent)] = pg
    for node in order:
        node._parents = ()
        node._backward = None
