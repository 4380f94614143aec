"""Dense float64 tensors with reverse-mode automatic differentiation.

Everything is numpy under the hood; this module only adds the tape.  A
``Tensor`` is simultaneously the value container and the tape node: leaves
(parameters, constants) have no parents, interior nodes record their parents
and a backward rule.  The tape is built per forward pass and freed during
``backward``, so memory stays bounded even for long training runs.

Any op producing NaN/Inf raises ``NumericError`` immediately; silent
non-finite values are never allowed to propagate.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class NumericError(ArithmeticError):
    """A forward op produced NaN or Inf from finite inputs."""


_state = threading.local()


def _grad_enabled():
    return getattr(_state, "grad_enabled", True)


@contextmanager
def no_grad():
    """Disable tape recording inside the block (evaluation-only forwards).

    The flag is thread-local, so concurrent inference over shared frozen
    parameters stays safe.
    """
    prev = _grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


class Tensor:
    """Value plus tape bookkeeping.

    ``data`` is a float64 ndarray and must not be mutated while any tape
    referencing it is alive.  The single sanctioned mutation is the optimizer
    updating parameter leaves in place between passes.
    """

    __slots__ = ("data", "parents", "backward_rule", "grad", "requires_grad")

    def __init__(self, data, requires_grad=False, parents=(), backward_rule=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.parents = parents
        self.backward_rule = backward_rule
        self.grad = None
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={'yes' if self.requires_grad else 'no'})"

    # Operator sugar; all real work happens in the module-level functions.
    def __add__(self, other):
        return add(self, as_tensor(other))

    def __radd__(self, other):
        return add(as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, as_tensor(other))

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, as_tensor(other))

    def __rmul__(self, other):
        return mul(as_tensor(other), self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return sub(as_tensor(0.0), self)


def parameter(data, rng=None, shape=None, scale=None):
    """Create a trainable leaf. Either pass data, or (rng, shape, scale)."""
    if data is None:
        data = rng.uniform(-scale, scale, size=shape)
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def constant(data):
    return Tensor(data)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_finite(data, op):
    # Single-pass sum screen; the exact check only runs when the sum is
    # non-finite (which a finite array can cause only by overflowing).
    if not np.isfinite(np.sum(data)) and not np.all(np.isfinite(data)):
        raise NumericError(f"non-finite values produced by {op}")


def _node(data, op, parents, rule):
    _check_finite(data, op)
    if _grad_enabled() and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, parents=parents, backward_rule=rule)
    return Tensor(data)


def custom_op(data, parents, rule, name="custom"):
    """Wire an externally computed forward value into the tape.

    ``rule(grad_out)`` must return one gradient (or None) per parent, in
    order, each safe for the engine to own.
    """
    return _node(data, name, tuple(parents), rule)


def _unbroadcast(g, shape):
    """Sum gradient over the axes numpy broadcasting introduced."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# primitive ops
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.data.shape} x {b.data.shape}")
    out = a.data @ b.data

    def rule(g):
        return (
            g @ b.data.T if a.requires_grad else None,
            a.data.T @ g if b.requires_grad else None,
        )

    return _node(out, "matmul", (a, b), rule)


def _binary(a, b, out, op, da, db):
    def rule(g):
        return (
            _unbroadcast(da(g), a.data.shape) if a.requires_grad else None,
            _unbroadcast(db(g), b.data.shape) if b.requires_grad else None,
        )

    return _node(out, op, (a, b), rule)


def _broadcast_guard(a, b, op):
    try:
        np.broadcast_shapes(a.data.shape, b.data.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.data.shape} and {b.data.shape}") from None


def add(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_guard(a, b, "add")
    return _binary(a, b, a.data + b.data, "add", lambda g: g, lambda g: g)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_guard(a, b, "sub")
    return _binary(a, b, a.data - b.data, "sub", lambda g: g, lambda g: -g)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_guard(a, b, "mul")
    return _binary(a, b, a.data * b.data, "mul", lambda g: g * b.data, lambda g: g * a.data)


def sigmoid(x: Tensor) -> Tensor:
    # Split by sign so exp never overflows.
    d = x.data
    out = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))), np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))

    def rule(g):
        return (g * out * (1.0 - out),)

    return _node(out, "sigmoid", (x,), rule)


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)

    def rule(g):
        return (g * (1.0 - out * out),)

    return _node(out, "tanh", (x,), rule)


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0.0)

    def rule(g):
        return (g * (x.data > 0.0),)

    return _node(out, "relu", (x,), rule)


def exp(x: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = np.exp(x.data)

    def rule(g):
        return (g * out,)

    return _node(out, "exp", (x,), rule)


def log(x: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(x.data)

    def rule(g):
        return (g / x.data,)

    return _node(out, "log", (x,), rule)


def softmax(x: Tensor, axis: int = -1, mask=None) -> Tensor:
    """Max-shifted softmax along ``axis``; masked positions get probability 0.

    ``mask`` is a boolean array broadcastable to x; True marks positions that
    participate in the normalization.
    """
    d = x.data
    if d.shape[axis] == 0:
        raise ShapeError("softmax: empty axis")
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), d.shape)
        if not mask.any(axis=axis).all():
            raise ShapeError("softmax: a slice has every position masked")
        shifted = np.where(mask, d, -np.inf)
        m = shifted.max(axis=axis, keepdims=True)
        e = np.where(mask, np.exp(shifted - m), 0.0)
    else:
        m = d.max(axis=axis, keepdims=True)
        e = np.exp(d - m)
    out = e / e.sum(axis=axis, keepdims=True)

    def rule(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return ((g - dot) * out,)

    return _node(out, "softmax", (x,), rule)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    d = x.data
    if d.shape[axis] == 0:
        raise ShapeError("log_softmax: empty axis")
    m = d.max(axis=axis, keepdims=True)
    shifted = d - m
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))

    def rule(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return _node(out, "log_softmax", (x,), rule)


def concat(parts, axis: int = 0) -> Tensor:
    parts = list(parts)
    if not parts:
        raise ShapeError("concat: no parts")
    base = list(parts[0].data.shape)
    for p in parts[1:]:
        other = list(p.data.shape)
        if len(other) != len(base) or any(
            o != b for i, (o, b) in enumerate(zip(other, base)) if i != axis % len(base)
        ):
            raise ShapeError(f"concat: mismatched part shapes {base} vs {other}")
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def rule(g):
        slices = np.split(g, splits, axis=axis)
        return tuple(s if p.requires_grad else None for p, s in zip(parts, slices))

    return _node(out, "concat", tuple(parts), rule)


def reduce_sum(x: Tensor, axis=None) -> Tensor:
    out = x.data.sum(axis=axis)

    def rule(g):
        if axis is None:
            return (np.full_like(x.data, g),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.data.shape).copy(),)

    return _node(out, "sum", (x,), rule)


def reduce_mean(x: Tensor, axis=None) -> Tensor:
    if axis is not None and x.data.shape[axis] == 0:
        raise ShapeError("mean: empty reduction axis")
    if axis is None and x.data.size == 0:
        raise ShapeError("mean: empty reduction axis")
    out = x.data.mean(axis=axis)
    n = x.data.size if axis is None else x.data.shape[axis]

    def rule(g):
        if axis is None:
            return (np.full_like(x.data, g / n),)
        return (np.broadcast_to(np.expand_dims(g / n, axis), x.data.shape).copy(),)

    return _node(out, "mean", (x,), rule)


def reduce_max(x: Tensor, axis=None) -> Tensor:
    """Max reduction; gradient routes to the first maximal element (ties
    break low, matching the argmax used by decoding)."""
    if axis is None and x.data.size == 0 or axis is not None and x.data.shape[axis] == 0:
        raise ShapeError("max: empty reduction axis")
    out = x.data.max(axis=axis)

    def rule(g):
        onehot = np.zeros_like(x.data)
        if axis is None:
            onehot.flat[np.argmax(x.data)] = 1.0
            return (onehot * g,)
        idx = np.expand_dims(np.argmax(x.data, axis=axis), axis)
        np.put_along_axis(onehot, idx, 1.0, axis=axis)
        return (onehot * np.expand_dims(g, axis),)

    return _node(out, "max", (x,), rule)


def gather_rows(x: Tensor, idx) -> Tensor:
    """Select rows by index; repeated indices accumulate gradient."""
    idx = np.asarray(idx)
    v = x.data.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= v):
        raise IndexError(f"gather_rows: index out of range for {v} rows")
    out = x.data[idx]

    def rule(g):
        z = np.zeros_like(x.data)
        np.add.at(z, idx, g)
        return (z,)

    return _node(out, "gather_rows", (x,), rule)


def embedding_lookup(table: Tensor, idx) -> Tensor:
    """Alias of gather_rows for embedding tables."""
    return gather_rows(table, idx)


def scatter_sum(x: Tensor, idx, n: int) -> Tensor:
    """Sum rows of x into an n-row output at positions idx (segment sum)."""
    idx = np.asarray(idx)
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexError(f"scatter_sum: target index out of range for {n} rows")
    out = np.zeros((n,) + x.data.shape[1:], dtype=np.float64)
    np.add.at(out, idx, x.data)

    def rule(g):
        return (g[idx],)

    return _node(out, "scatter_sum", (x,), rule)


def slice_rows(x: Tensor, start: int, stop: int) -> Tensor:
    if not (0 <= start < stop <= x.data.shape[0]):
        raise ShapeError(f"slice_rows: bad range [{start}, {stop}) for {x.data.shape[0]} rows")
    out = x.data[start:stop].copy()

    def rule(g):
        z = np.zeros_like(x.data)
        z[start:stop] = g
        return (z,)

    return _node(out, "slice_rows", (x,), rule)


def reshape(x: Tensor, shape) -> Tensor:
    out = x.data.reshape(shape)

    def rule(g):
        return (g.reshape(x.data.shape),)

    return _node(out, "reshape", (x,), rule)


# ---------------------------------------------------------------------------
# backward engine
# ---------------------------------------------------------------------------

def _topo_order(root: Tensor):
    # Iterative postorder: tapes routinely exceed Python's recursion limit.
    order = []
    seen = set()
    stack = [(root, iter(root.parents))]
    seen.add(id(root))
    while stack:
        node, it = stack[-1]
        advanced = False
        for parent in it:
            if id(parent) not in seen and parent.requires_grad:
                seen.add(id(parent))
                stack.append((parent, iter(parent.parents)))
                advanced = True
                break
        if not advanced:
            order.append(node)
            stack.pop()
    return order


def backward(root: Tensor):
    """Accumulate gradients of the scalar ``root`` into every reachable leaf.

    Interior-node gradients are freed as soon as they are consumed; leaves
    keep ``.grad`` until cleared.
    """
    if root.data.size != 1:
        raise ShapeError(f"backward: root must be scalar, got shape {root.data.shape}")
    if not root.requires_grad:
        return
    order = _topo_order(root)
    root.grad = np.ones_like(root.data)
    for node in reversed(order):
        g = node.grad
        if node.backward_rule is None or g is None:
            continue
        for parent, pg in zip(node.parents, node.backward_rule(g)):
            if pg is None or not parent.requires_grad:
                continue
            if pg is g:
                pg = pg.copy()
            if parent.grad is None:
                parent.grad = pg
            else:
                parent.grad += pg
        node.grad = None


def zero_grads(tensors):
    for t in tensors:
        t.grad = None


# ---------------------------------------------------------------------------
# finite-difference checking
# ---------------------------------------------------------------------------

def relative_error(analytic, numeric):
    return np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic) + np.abs(numeric)))


def finite_difference_check(build, leaves, step=1e-5):
    """Compare tape gradients of ``build()`` (a scalar) against central
    differences over every element of every leaf.

    Returns the worst relative error, using max(1, |analytic|+|numeric|)
    denominators. ``build`` must recompute the forward pass from the current
    leaf data on every call.
    """
    zero_grads(leaves)
    backward(build())
    analytic = [np.zeros_like(l.data) if l.grad is None else l.grad.copy() for l in leaves]
    worst = 0.0
    for leaf, ana in zip(leaves, analytic):
        flat = leaf.data.reshape(-1)
        num = np.zeros_like(flat)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + step
            up = float(build().data)
            flat[i] = keep - step
            down = float(build().data)
            flat[i] = keep
            num[i] = (up - down) / (2.0 * step)
        worst = max(worst, float(relative_error(ana.reshape(-1), num)))
    zero_grads(leaves)
    return worst
