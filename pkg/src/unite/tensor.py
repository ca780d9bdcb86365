"""Dense float64 tensors with reverse-mode automatic differentiation.

A small tape-based engine: every op records a node on an implicit global
tape (creation-ordered), and ``backward`` walks the reachable nodes in
reverse creation order exactly once.  All values are checked for
finiteness after every op; a NaN/Inf raises ``NumericError`` instead of
propagating silently.
"""

from __future__ import annotations

import itertools
import math
from typing import Callable, Sequence

import numpy as np
from scipy.special import erf


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested op."""


class NumericError(ArithmeticError):
    """A non-finite value appeared in an op's output."""


_NODE_COUNTER = itertools.count()


def _check_finite(data: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(data)):
        raise NumericError(f"non-finite value produced by op '{op}'")


class _Node:
    __slots__ = ("nid", "op", "parents", "backward_fn")

    def __init__(self, op: str, parents: Sequence["Tensor"],
                 backward_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]]):
        self.nid = next(_NODE_COUNTER)
        self.op = op
        self.parents = tuple(parents)
        self.backward_fn = backward_fn


class Tensor:
    """Row-major float64 array plus autodiff bookkeeping.

    Tensors are immutable once created (ops return fresh tensors); the
    ``grad`` buffer is the only mutable field and is written by
    ``backward`` / ``zero_grad``.
    """

    __slots__ = ("data", "requires_grad", "grad", "_node")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        _check_finite(arr, "tensor")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._node: _Node | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=False)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; constants are wrapped as non-grad tensors.
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __neg__(self):
        return mul(self, _as_tensor(-1.0))

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))

    def backward(self) -> None:
        """Reverse-mode pass from a scalar output.

        Visits the reachable tape nodes in reverse creation order exactly
        once and accumulates gradients into every tensor on the path that
        has ``requires_grad`` set.
        """
        if self.data.size != 1:
            raise ShapeError(f"backward requires a scalar output, got shape {self.shape}")
        # Collect reachable graph nodes and their output tensors.
        nodes: dict[int, _Node] = {}
        out_of: dict[int, Tensor] = {}
        stack = [self]
        seen: set[int] = set()
        while stack:
            t = stack.pop()
            if id(t) in seen:
                continue
            seen.add(id(t))
            if t._node is not None:
                nodes[t._node.nid] = t._node
                out_of[t._node.nid] = t
                stack.extend(t._node.parents)
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for nid in sorted(nodes, reverse=True):
            node = nodes[nid]
            out = out_of[nid]
            g = grads.get(id(out))
            if g is None:
                continue
            parent_grads = node.backward_fn(g)
            for parent, pg in zip(node.parents, parent_grads):
                if pg is None:
                    continue
                acc = grads.get(id(parent))
                grads[id(parent)] = pg if acc is None else acc + pg
        # Publish gradients on requires_grad tensors.
        stack = [self]
        seen.clear()
        while stack:
            t = stack.pop()
            if id(t) in seen:
                continue
            seen.add(id(t))
            if t.requires_grad and id(t) in grads:
                g = grads[id(t)]
                t.grad = g if t.grad is None else t.grad + g
            if t._node is not None:
                stack.extend(t._node.parents)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _make(op: str, data: np.ndarray, parents: Sequence[Tensor],
          backward_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]]) -> Tensor:
    _check_finite(data, op)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.requires_grad = any(p.requires_grad for p in parents)
    out.grad = None
    out._node = _Node(op, parents, backward_fn) if out.requires_grad else None
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# Elementwise arithmetic


def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data
    return _make("add", data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    data = a.data - b.data
    return _make("sub", data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data
    return _make("mul", data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape),
                            _unbroadcast(g * a.data, b.shape)))


def div(a: Tensor, b: Tensor) -> Tensor:
    data = a.data / b.data
    return _make("div", data, (a, b),
                 lambda g: (_unbroadcast(g / b.data, a.shape),
                            _unbroadcast(-g * a.data / (b.data * b.data), b.shape)))


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.data)
    return _make("exp", y, (x,), lambda g: (g * y,))


def log(x: Tensor) -> Tensor:
    y = np.log(x.data)
    return _make("log", y, (x,), lambda g: (g / x.data,))


def relu(x: Tensor) -> Tensor:
    y = np.maximum(x.data, 0.0)
    mask = (x.data > 0.0).astype(np.float64)
    return _make("relu", y, (x,), lambda g: (g * mask,))


def gelu(x: Tensor) -> Tensor:
    """Exact Gaussian-CDF GELU: x * Phi(x)."""
    phi_cdf = 0.5 * (1.0 + erf(x.data / math.sqrt(2.0)))
    y = x.data * phi_cdf
    pdf = np.exp(-0.5 * x.data * x.data) / math.sqrt(2.0 * math.pi)
    dydx = phi_cdf + x.data * pdf
    return _make("gelu", y, (x,), lambda g: (g * dydx,))


# ---------------------------------------------------------------------------
# Shape manipulation


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    data = x.data.reshape(shape)
    return _make("reshape", data, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    data = x.data.transpose(axes)
    return _make("transpose", data, (x,), lambda g: (g.transpose(inv),))


def take(x: Tensor, index: int, axis: int = 0) -> Tensor:
    """Select one index along an axis (that axis is dropped)."""
    data = np.take(x.data, index, axis=axis)

    def bwd(g: np.ndarray):
        gx = np.zeros_like(x.data)
        sl = [slice(None)] * x.data.ndim
        sl[axis] = index
        gx[tuple(sl)] = g
        return (gx,)

    return _make("take", data, (x,), bwd)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    data = np.stack([t.data for t in tensors], axis=axis)

    def bwd(g: np.ndarray):
        pieces = np.split(g, len(tensors), axis=axis)
        return [p.reshape(t.shape) for p, t in zip(pieces, tensors)]

    return _make("stack", data, tuple(tensors), bwd)


# ---------------------------------------------------------------------------
# Reductions


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = x.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g: np.ndarray):
        if axis is None:
            return (np.broadcast_to(g, x.shape).copy(),)
        gg = g
        if not keepdims:
            axes = axis if isinstance(axis, tuple) else (axis,)
            for ax in sorted(a % x.data.ndim for a in axes):
                gg = np.expand_dims(gg, ax)
        return (np.broadcast_to(gg, x.shape).copy(),)

    return _make("sum", np.asarray(data, dtype=np.float64), (x,), bwd)


def tmean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = x.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = 1
        for ax in axes:
            count *= x.data.shape[ax]
    return mul(tsum(x, axis=axis, keepdims=keepdims), _as_tensor(1.0 / count))


# ---------------------------------------------------------------------------
# Linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; supports identical stacked leading dims."""
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {a.shape} and {b.shape}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} vs {b.shape}")
    if a.data.shape[:-2] != b.data.shape[:-2] and a.data.ndim > 2 and b.data.ndim > 2:
        raise ShapeError(f"matmul leading dims differ: {a.shape} vs {b.shape}")
    data = np.matmul(a.data, b.data)

    def bwd(g: np.ndarray):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return (_unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape))

    return _make("matmul", data, (a, b), bwd)


# ---------------------------------------------------------------------------
# Normalizations and activations with fused gradients


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def bwd(g: np.ndarray):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - dot),)

    return _make("softmax", y, (x,), bwd)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Standardize over the last axis, then apply the affine (gain, bias)."""
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    y = gain.data * xhat + bias.data

    def bwd(g: np.ndarray):
        d = x.data.shape[-1]
        dgain = _unbroadcast(g * xhat, gain.shape)
        dbias = _unbroadcast(g, bias.shape)
        dxhat = g * gain.data
        dx = inv * (dxhat
                    - dxhat.mean(axis=-1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        del d
        return (dx, dgain, dbias)

    return _make("layer_norm", y, (x, gain, bias), bwd)


def l2_norm(x: Tensor, axis=None) -> Tensor:
    """sqrt(sum of squares) along axis; subgradient 0 at the origin."""
    sq = (x.data * x.data).sum(axis=axis)
    norm = np.sqrt(sq)

    def bwd(g: np.ndarray):
        if axis is None:
            n = norm if norm > 0.0 else 1.0
            gx = (float(g) / n) * x.data if norm > 0.0 else np.zeros_like(x.data)
            return (gx,)
        safe = np.where(norm > 0.0, norm, 1.0)
        gg = np.expand_dims(g / safe, axis)
        gx = gg * x.data
        mask = np.expand_dims((norm > 0.0).astype(np.float64), axis)
        return (gx * mask,)

    return _make("l2_norm", np.asarray(norm, dtype=np.float64), (x,), bwd)


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; identity outside training or at rate 0."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return _make("dropout", x.data.copy(), (x,), lambda g: (g,))
    keep = (rng.random(x.shape) >= rate).astype(np.float64) / (1.0 - rate)
    return _make("dropout", x.data * keep, (x,), lambda g: (g * keep,))


# ---------------------------------------------------------------------------
# Gradient checking


def grad_check(f: Callable[..., Tensor], inputs: Sequence[Tensor],
               eps: float = 1e-5) -> float:
    """Max relative error between reverse-mode and central finite differences.

    ``f`` must return a scalar Tensor.  The relative error is
    ``max |a - n| / max(scale, 1e-4)`` where scale is the largest gradient
    magnitude seen, which keeps near-zero gradients from drowning in
    finite-difference round-off.
    """
    for t in inputs:
        t.zero_grad()
    out = f(*inputs)
    out.backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy()
                for t in inputs]
    worst = 0.0
    for t, a in zip(inputs, analytic):
        flat = t.data.reshape(-1)
        num = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = float(f(*inputs).data)
            flat[i] = orig - eps
            fm = float(f(*inputs).data)
            flat[i] = orig
            num[i] = (fp - fm) / (2.0 * eps)
        num = num.reshape(t.data.shape)
        scale = max(float(np.max(np.abs(a)) if a.size else 0.0),
                    float(np.max(np.abs(num)) if num.size else 0.0), 1e-4)
        err = float(np.max(np.abs(a - num))) / scale if a.size else 0.0
        worst = max(worst, err)
    return worst
