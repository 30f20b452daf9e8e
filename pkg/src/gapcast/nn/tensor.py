"""A small reverse-mode autodiff tensor over numpy arrays.

Only the operations the forecasting network uses are provided. Every op
records its parents and a closure that maps the output gradient to parent
gradients; :meth:`Tensor.backward` walks the graph in reverse topological
order.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..errors import ShapeError

DTYPE = np.float64


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], tuple] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data.item())

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def sum(self):
        return tsum(self)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)

    def backward(self) -> None:
        backward(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data, parents: Sequence[Tensor], fn) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = fn
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf that requires grad.

    Repeated calls add to existing leaf gradients.
    """
    if loss.data.size != 1 or loss.data.ndim > 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(loss, False)]
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

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
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
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else pg


# -- elementwise ---------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _result(a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _result(a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _result(a.data * b.data, (a, b),
                   lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.data.shape)))


def square(a: Tensor) -> Tensor:
    return _result(a.data * a.data, (a,), lambda g: (2.0 * a.data * g,))


def relu(a: Tensor) -> Tensor:
    """max(0, x); the subgradient at exactly 0 is taken as 0."""
    a = as_tensor(a)
    mask = a.data > 0
    return _result(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def tsum(a: Tensor) -> Tensor:
    return _result(a.data.sum(), (a,), lambda g: (np.broadcast_to(g, a.shape).copy(),))


def mean(a: Tensor) -> Tensor:
    n = a.data.size
    return _result(a.data.mean(), (a,), lambda g: (np.full(a.shape, g / n),))


def reshape(a: Tensor, shape) -> Tensor:
    return _result(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def flatten(a: Tensor) -> Tensor:
    """Collapse all but the leading (batch) axis."""
    return reshape(a, (a.shape[0], -1))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def grad_fn(g):
        return tuple(np.split(g, cuts, axis=axis))

    return _result(np.concatenate([t.data for t in tensors], axis=axis), tensors, grad_fn)


# -- layers --------------------------------------------------------------------

def dense(x: Tensor, weights: Tensor, bias: Tensor) -> Tensor:
    """``W x + b`` for a vector ``x`` of length p, or row-wise for a (batch, p) matrix."""
    x = as_tensor(x)
    q, p = weights.shape
    if x.shape[-1] != p or bias.shape != (q,):
        raise ShapeError(f"dense: input {x.shape}, weights {weights.shape}, bias {bias.shape}")

    def grad_fn(g):
        g2 = g.reshape(-1, q)
        x2 = x.data.reshape(-1, p)
        return g @ weights.data, g2.T @ x2, g2.sum(axis=0)

    return _result(x.data @ weights.data.T + bias.data, (x, weights, bias), grad_fn)


def _im2col(xh: np.ndarray, n: int, m: int) -> np.ndarray:
    """Rows of same-padded n x m patches of a channel-last (N, H, W, C) array.

    Row order is (N, H, W); column order is (n, m, C).
    """
    N, H, W, C = xh.shape
    ph, pw = n // 2, m // 2
    xp = np.pad(xh, ((0, 0), (ph, ph), (pw, pw), (0, 0)))
    view = np.lib.stride_tricks.sliding_window_view(xp, (n, m), axis=(1, 2))
    return view.transpose(0, 1, 2, 4, 5, 3).reshape(N * H * W, n * m * C)


def conv2d(x: Tensor, filters: Tensor, bias: Tensor) -> Tensor:
    """Same-padded, stride-1 cross-correlation summed over input channels, plus bias.

    ``x`` is (C_in, H, W) or batched (N, C_in, H, W); ``filters`` is
    (C_out, C_in, n, m) with odd n and m.
    """
    x = as_tensor(x)
    unbatched = x.data.ndim == 3
    if unbatched:
        x = reshape(x, (1,) + x.shape)
    if x.data.ndim != 4:
        raise ShapeError(f"conv2d input must be 3-d or 4-d, got shape {x.shape}")
    c_out, c_in, n, m = filters.shape
    N, C, H, W = x.shape
    if C != c_in:
        raise ShapeError(f"conv2d channel mismatch: input {x.shape} vs filters {filters.shape}")
    if n % 2 == 0 or m % 2 == 0:
        raise ShapeError(f"filter size must be odd, got {n}x{m}")
    if H < n or W < m:
        raise ShapeError(f"input {x.shape} smaller than filter {n}x{m}")
    if bias.shape != (c_out,):
        raise ShapeError(f"bias shape {bias.shape} does not match {c_out} output channels")
    cols = _im2col(x.data.transpose(0, 2, 3, 1), n, m)
    fmat = filters.data.transpose(0, 2, 3, 1).reshape(c_out, -1)
    rows = cols @ fmat.T + bias.data
    out = rows.reshape(N, H, W, c_out).transpose(0, 3, 1, 2)

    def grad_fn(g):
        gh = g.transpose(0, 2, 3, 1)
        g_rows = gh.reshape(-1, c_out)
        d_filters = (g_rows.T @ cols).reshape(c_out, n, m, C).transpose(0, 3, 1, 2)
        d_bias = g_rows.sum(axis=0)
        d_x = None
        if x.requires_grad:
            # input gradient = same-padded correlation of g with the
            # spatially flipped, channel-swapped filters
            flipped = filters.data[:, :, ::-1, ::-1].transpose(1, 2, 3, 0).reshape(C, -1)
            d_x = (_im2col(gh, n, m) @ flipped.T).reshape(N, H, W, C).transpose(0, 3, 1, 2)
        return d_x, d_filters, d_bias

    result = _result(out, (x, filters, bias), grad_fn)
    return reshape(result, result.shape[1:]) if unbatched else result


def embed(tokens, table: Tensor) -> Tensor:
    """Concatenate the table rows for ``tokens``.

    A 1-d token list gives a ``(len(tokens) * dim,)`` vector; a 2-d
    (batch, k) array gives ``(batch, k * dim)``.
    """
    idx = np.asarray(tokens, dtype=np.int64)
    vocab, dim = table.shape
    if idx.size and (idx.min() < 0 or idx.max() >= vocab):
        bad = idx[(idx < 0) | (idx >= vocab)].flat[0]
        raise IndexError(f"token index {bad} outside vocabulary of size {vocab}")
    rows = table.data[idx]
    out_shape = idx.shape[:-1] + (idx.shape[-1] * dim,)

    def grad_fn(g):
        d_table = np.zeros_like(table.data)
        np.add.at(d_table, idx.reshape(-1), g.reshape(-1, dim))
        return (d_table,)

    return _result(rows.reshape(out_shape), (table,), grad_fn)


def mse_loss(pred: Tensor, actual) -> Tensor:
    """Mean squared difference over every element (i.e. the batch)."""
    actual = as_tensor(actual)
    if pred.shape != actual.shape:
        raise ShapeError(f"mse_loss shapes differ: {pred.shape} vs {actual.shape}")
    diff = pred.data - actual.data
    n = diff.size

    def grad_fn(g):
        d = 2.0 * diff * g / n
        return d, -d

    return _result(np.mean(diff * diff), (pred, actual), grad_fn)
