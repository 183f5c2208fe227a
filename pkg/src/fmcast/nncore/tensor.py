"""Reverse-mode automatic differentiation over float64 numpy arrays.

Every backward rule is written in terms of differentiable ``Tensor`` ops, so
calling :func:`grad` with ``create_graph=True`` records the backward pass as a
new graph that can itself be differentiated (needed for gradient penalties).
"""

from __future__ import annotations

import contextlib
import threading
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class NonFiniteError(FloatingPointError):
    """Raised when an op produces NaN or Inf."""


_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextlib.contextmanager
def set_grad_enabled(mode: bool):
    prev = is_grad_enabled()
    _state.enabled = mode
    try:
        yield
    finally:
        _state.enabled = prev


def no_grad():
    return set_grad_enabled(False)


BackwardFn = Callable[["Tensor"], Sequence["Tensor | None"]]


class Tensor:
    __slots__ = ("data", "parents", "backward_fn", "requires_grad", "op", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, parents: tuple = (), op: str = "leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.parents = parents
        self.backward_fn: BackwardFn | None = None
        self.op = op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    __array_priority__ = 100

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

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p: float):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)

    def sum(self, axis=None, keepdims: bool = False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: np.ndarray, parents: tuple[Tensor, ...], op: str) -> Tensor:
    data = np.asarray(data, dtype=np.float64)
    # a sum is non-finite iff some entry is (or the total overflows, also an error)
    if not np.isfinite(data.sum()):
        raise NonFiniteError(f"non-finite values produced by op {op!r}")
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, parents=parents, op=op)
    return Tensor(data, op=op)


# ---------------------------------------------------------------------------
# broadcasting helpers


def broadcast_to(x, shape) -> Tensor:
    x = as_tensor(x)
    shape = tuple(shape)
    if x.shape == shape:
        return x
    out = _result(np.broadcast_to(x.data, shape).copy(), (x,), "broadcast_to")
    if out.requires_grad:
        out.backward_fn = lambda g: (sum_to(g, x.shape),)
    return out


def sum_to(x, shape) -> Tensor:
    """Sum ``x`` down to ``shape`` (the adjoint of broadcasting)."""
    x = as_tensor(x)
    shape = tuple(shape)
    if x.shape == shape:
        return x
    lead = x.ndim - len(shape)
    axes = tuple(range(lead)) + tuple(
        i + lead for i, n in enumerate(shape) if n == 1 and x.shape[i + lead] != 1
    )
    data = x.data.sum(axis=axes, keepdims=True)
    if lead:
        data = data.reshape(data.shape[lead:])
    out = _result(data.reshape(shape), (x,), "sum_to")
    if out.requires_grad:
        out.backward_fn = lambda g: (broadcast_to(g, x.shape),)
    return out


# ---------------------------------------------------------------------------
# elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = _result(a.data + b.data, (a, b), "add")
    if out.requires_grad:
        out.backward_fn = lambda g: (sum_to(g, a.shape), sum_to(g, b.shape))
    return out


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = _result(a.data - b.data, (a, b), "sub")
    if out.requires_grad:
        out.backward_fn = lambda g: (sum_to(g, a.shape), sum_to(neg(g), b.shape))
    return out


def neg(a) -> Tensor:
    a = as_tensor(a)
    out = _result(-a.data, (a,), "neg")
    if out.requires_grad:
        out.backward_fn = lambda g: (neg(g),)
    return out


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = _result(a.data * b.data, (a, b), "mul")
    if out.requires_grad:
        def backward(g):
            ga = sum_to(mul(g, b), a.shape) if a.requires_grad else None
            gb = sum_to(mul(g, a), b.shape) if b.requires_grad else None
            return ga, gb
        out.backward_fn = backward
    return out


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = _result(a.data / b.data, (a, b), "div")
    if out.requires_grad:
        def backward(g):
            ga = sum_to(div(g, b), a.shape) if a.requires_grad else None
            gb = sum_to(neg(div(mul(g, a), mul(b, b))), b.shape) if b.requires_grad else None
            return ga, gb
        out.backward_fn = backward
    return out


def power(a, p: float) -> Tensor:
    a = as_tensor(a)
    p = float(p)
    out = _result(a.data**p, (a,), "power")
    if out.requires_grad:
        if p == 1.0:
            out.backward_fn = lambda g: (g,)
        else:
            out.backward_fn = lambda g: (mul(g, mul(p, power(a, p - 1.0))),)
    return out


def square(a) -> Tensor:
    a = as_tensor(a)
    return mul(a, a)


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = _result(np.exp(a.data), (a,), "exp")
    if out.requires_grad:
        out.backward_fn = lambda g: (mul(g, out),)
    return out


def log(a) -> Tensor:
    a = as_tensor(a)
    out = _result(np.log(a.data), (a,), "log")
    if out.requires_grad:
        out.backward_fn = lambda g: (div(g, a),)
    return out


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = _result(0.5 * (1.0 + np.tanh(0.5 * a.data)), (a,), "sigmoid")
    if out.requires_grad:
        out.backward_fn = lambda g: (mul(g, mul(out, sub(1.0, out))),)
    return out


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = _result(np.tanh(a.data), (a,), "tanh")
    if out.requires_grad:
        out.backward_fn = lambda g: (mul(g, sub(1.0, mul(out, out))),)
    return out


def silu(a) -> Tensor:
    a = as_tensor(a)
    return mul(a, sigmoid(a))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = (a.data > 0).astype(np.float64)
    out = _result(a.data * mask, (a,), "relu")
    if out.requires_grad:
        out.backward_fn = lambda g: (mul(g, mask),)
    return out


# ---------------------------------------------------------------------------
# reductions and shape ops


def _norm_axes(axis, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _norm_axes(axis, a.ndim)
    out = _result(a.data.sum(axis=axes, keepdims=keepdims), (a,), "sum")
    if out.requires_grad:
        kept = tuple(1 if i in axes else n for i, n in enumerate(a.shape))

        def backward(g):
            return (broadcast_to(reshape(g, kept), a.shape),)
        out.backward_fn = backward
    return out


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _norm_axes(axis, a.ndim)
    count = int(np.prod([a.shape[i] for i in axes])) if axes else 1
    return mul(sum_(a, axes, keepdims), 1.0 / count)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = _result(a.data.reshape(shape), (a,), "reshape")
    if out.requires_grad:
        out.backward_fn = lambda g: (reshape(g, a.shape),)
    return out


def transpose(a, axes: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    out = _result(a.data.transpose(axes), (a,), "transpose")
    if out.requires_grad:
        out.backward_fn = lambda g: (transpose(g, inverse),)
    return out


def swap_last(a) -> Tensor:
    a = as_tensor(a)
    axes = list(range(a.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(a, axes)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError(f"matmul needs operands of rank >= 2, got {a.shape} @ {b.shape}")
    out = _result(np.matmul(a.data, b.data), (a, b), "matmul")
    if out.requires_grad:
        def backward(g):
            ga = sum_to(matmul(g, swap_last(b)), a.shape) if a.requires_grad else None
            gb = sum_to(matmul(swap_last(a), g), b.shape) if b.requires_grad else None
            return ga, gb
        out.backward_fn = backward
    return out


def take(a, index) -> Tensor:
    """Basic (slice) indexing; the backward scatters into zeros."""
    a = as_tensor(a)
    out = _result(a.data[index], (a,), "take")
    if out.requires_grad:
        out.backward_fn = lambda g: (scatter(g, index, a.shape),)
    return out


def scatter(g, index, shape) -> Tensor:
    """Place ``g`` at ``index`` inside a zero array of ``shape`` (adjoint of take)."""
    g = as_tensor(g)
    data = np.zeros(shape)
    data[index] = g.data
    out = _result(data, (g,), "scatter")
    if out.requires_grad:
        out.backward_fn = lambda h: (take(h, index),)
    return out


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    ndim = tensors[0].ndim
    axis = axis % ndim
    out = _result(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), "concat")
    if out.requires_grad:
        bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

        def backward(g):
            grads = []
            for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
                if not t.requires_grad:
                    grads.append(None)
                    continue
                index = (slice(None),) * axis + (slice(int(lo), int(hi)),)
                grads.append(take(g, index))
            return grads
        out.backward_fn = backward
    return out


# ---------------------------------------------------------------------------
# image ops (NCHW)


def _im2col(x: np.ndarray, k: int, pad: int) -> np.ndarray:
    b, c, h, w = x.shape
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(x, (k, k), axis=(2, 3))  # b, c, h, w, k, k
    return win.transpose(0, 1, 4, 5, 2, 3).reshape(b, c * k * k, h * w)


def _col2im(cols: np.ndarray, shape, k: int, pad: int) -> np.ndarray:
    b, c, h, w = shape
    cols = cols.reshape(b, c, k, k, h, w)
    out = np.zeros((b, c, h + 2 * pad, w + 2 * pad))
    for i in range(k):
        for j in range(k):
            out[:, :, i:i + h, j:j + w] += cols[:, :, i, j]
    return out[:, :, pad:pad + h, pad:pad + w]


def im2col(x, k: int, pad: int) -> Tensor:
    """Unfold ``k x k`` zero-padded patches: (B,C,H,W) -> (B, C*k*k, H*W)."""
    x = as_tensor(x)
    shape = x.shape
    out = _result(_im2col(x.data, k, pad), (x,), "im2col")
    if out.requires_grad:
        out.backward_fn = lambda g: (col2im(g, shape, k, pad),)
    return out


def col2im(cols, shape, k: int, pad: int) -> Tensor:
    cols = as_tensor(cols)
    out = _result(_col2im(cols.data, shape, k, pad), (cols,), "col2im")
    if out.requires_grad:
        out.backward_fn = lambda g: (im2col(g, k, pad),)
    return out


def sum_pool2(x) -> Tensor:
    x = as_tensor(x)
    b, c, h, w = x.shape
    out = _result(x.data.reshape(b, c, h // 2, 2, w // 2, 2).sum(axis=(3, 5)), (x,), "sum_pool2")
    if out.requires_grad:
        out.backward_fn = lambda g: (upsample2(g),)
    return out


def upsample2(x) -> Tensor:
    """Nearest-neighbour 2x upsampling; adjoint of :func:`sum_pool2`."""
    x = as_tensor(x)
    out = _result(x.data.repeat(2, axis=2).repeat(2, axis=3), (x,), "upsample2")
    if out.requires_grad:
        out.backward_fn = lambda g: (sum_pool2(g),)
    return out


def avg_pool2(x) -> Tensor:
    return mul(sum_pool2(x), 0.25)


# ---------------------------------------------------------------------------
# backward pass


def _topo_order(root: Tensor) -> list[Tensor]:
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
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def grad(
    output: Tensor,
    inputs: Iterable[Tensor],
    grad_output: Tensor | None = None,
    create_graph: bool = False,
) -> list[Tensor]:
    """Gradients of ``output`` with respect to ``inputs``.

    ``output`` must be a scalar unless ``grad_output`` is supplied. Inputs the
    output does not depend on receive zeros. With ``create_graph=True`` the
    returned tensors are part of a differentiable graph.
    """
    inputs = list(inputs)
    if grad_output is None:
        if output.size != 1:
            raise ValueError(f"grad requires a scalar output, got shape {output.shape}")
        grad_output = Tensor(np.ones_like(output.data))
    wanted = {id(t) for t in inputs}
    found: dict[int, Tensor] = {}
    if not output.requires_grad:
        return [Tensor(np.zeros_like(t.data)) for t in inputs]

    grads: dict[int, Tensor] = {id(output): grad_output}
    with set_grad_enabled(create_graph):
        for node in reversed(_topo_order(output)):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if id(node) in wanted:
                found[id(node)] = g
            if node.backward_fn is None:
                continue
            for parent, pg in zip(node.parents, node.backward_fn(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = add(grads[key], pg) if key in grads else pg
    return [found.get(id(t), Tensor(np.zeros_like(t.data))) for t in inputs]


def backward(loss: Tensor, params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss for each named parameter tensor."""
    if loss.size != 1:
        raise ValueError(f"loss must be scalar, got shape {loss.shape}")
    names = list(params)
    gs = grad(loss, [params[n] for n in names])
    return {n: g.data for n, g in zip(names, gs)}


def value_and_grad(fn: Callable[[dict[str, Tensor]], Tensor], params: dict[str, np.ndarray]):
    """Evaluate ``fn`` on leaf tensors built from ``params`` and differentiate it."""
    leaves = {k: Tensor(v, requires_grad=True) for k, v in params.items()}
    with set_grad_enabled(True):
        loss = fn(leaves)
    return float(loss.data), backward(loss, leaves)
