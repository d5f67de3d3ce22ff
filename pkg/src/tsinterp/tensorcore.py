"""Dense float64 tensors with tape-based reverse-mode differentiation.

Each primitive computes its forward value with numpy and, when any input
requires a gradient, records a node holding its inputs and a local backward
rule. ``backward`` orders the recorded nodes topologically (the tape), runs
the rules in reverse and frees the tape.
"""

from __future__ import annotations

import contextlib
import threading
import warnings

import numpy as np

from .errors import (
    DisconnectedLeafWarning,
    NonPositiveDilation,
    NotScalar,
    ShapeMismatch,
)

DTYPE = np.float64

_state = threading.local()


def grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextlib.contextmanager
def no_grad():
    """Disable recording on the current thread."""
    prev = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.array(data, dtype=DTYPE)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def is_leaf(self):
        return self._backward is None

    def numpy(self):
        return self.data

    def item(self):
        if self.data.size != 1:
            raise NotScalar(f"tensor of shape {self.shape} is not a scalar")
        return float(self.data.reshape(-1)[0])

    def detach(self):
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return index(self, key)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(out_data, parents, backward):
    out = Tensor(out_data)
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _check_broadcast(a, b, op):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatch(f"{op}: cannot broadcast {a.shape} with {b.shape}") from None


# --- elementwise binary -----------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(a.data - b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(a.data * b.data, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "div")
    out = a.data / b.data

    def backward(g):
        return (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * out / b.data, b.shape),
        )

    return _make(out, (a, b), backward)


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)
    return _make(a.data * c, (a,), lambda g: (g * c,))


# --- linear algebra -------------------------------------------------------

def matmul(a, b) -> Tensor:
    """Batched matrix product over the last two axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch(f"matmul: {a.shape} @ {b.shape}")

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make(np.matmul(a.data, b.data), (a, b), backward)


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(range(a.ndim))[:-2] + (a.ndim - 1, a.ndim - 2)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _make(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),))


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeMismatch(f"reshape: {a.shape} -> {shape}") from None
    return _make(out, (a,), lambda g: (g.reshape(a.shape),))


def flatten(a, start_axis=1) -> Tensor:
    a = as_tensor(a)
    return reshape(a, a.shape[:start_axis] + (-1,))


def concat(tensors, axis=-1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError as exc:
        raise ShapeMismatch(f"concat: {exc}") from None
    sizes = np.cumsum([t.shape[axis] for t in ts])[:-1]

    def backward(g):
        return tuple(np.split(g, sizes, axis=axis))

    return _make(out, ts, backward)


def index(a, key) -> Tensor:
    """Basic or advanced numpy indexing; gradients scatter back with add.at."""
    a = as_tensor(a)
    out = a.data[key]

    basic = not any(isinstance(k, (list, np.ndarray)) for k in (key if isinstance(key, tuple) else (key,)))

    def backward(g):
        full = np.zeros_like(a.data)
        if basic:
            full[key] += g
        else:
            np.add.at(full, key, g)
        return (full,)

    return _make(np.array(out), (a,), backward)


def slice_rows(a, start, stop) -> Tensor:
    """Rows ``start:stop`` along the time axis (second to last)."""
    a = as_tensor(a)
    return index(a, (Ellipsis, slice(start, stop), slice(None)))


# --- reductions -------------------------------------------------------------

def sum(a, axis=None, keepdims=False) -> Tensor:  # noqa: A001
    a = as_tensor(a)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward)


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return scale(sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


# --- elementwise unary ------------------------------------------------------

def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    # split by sign to avoid overflow in exp
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _make(a.data * mask, (a,), lambda g: (g * mask,))


def identity(a) -> Tensor:
    return as_tensor(a)


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return _make(out, (a,), lambda g: (g * 0.5 / out,))


def absolute(a) -> Tensor:
    a = as_tensor(a)
    sign = np.sign(a.data)
    return _make(np.abs(a.data), (a,), lambda g: (g * sign,))


def softmax_rows(a) -> Tensor:
    """Softmax over the last axis."""
    a = as_tensor(a)
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return _make(out, (a,), backward)


def log_softmax_rows(a) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    out = z - lse
    soft = np.exp(out)

    def backward(g):
        return (g - soft * g.sum(axis=-1, keepdims=True),)

    return _make(out, (a,), backward)


ACTIVATIONS = {"relu": relu, "tanh": tanh, "sigmoid": sigmoid, "identity": identity}


# --- convolution ------------------------------------------------------------

def conv1d(x, kernels, dilation=1, causal=True) -> Tensor:
    """1-D convolution along time.

    x is (L, C_in) or (B, L, C_in); kernels are (k, C_in, C_out). Causal mode
    left-pads (k-1)*dilation zeros so the output keeps length L and position p
    only sees inputs <= p. Non-causal mode is a valid convolution of length
    L - (k-1)*dilation.
    """
    x, w = as_tensor(x), as_tensor(kernels)
    dilation = int(dilation)
    if dilation < 1:
        raise NonPositiveDilation(f"dilation must be >= 1, got {dilation}")
    if w.ndim != 3:
        raise ShapeMismatch(f"conv1d: kernels must be (k, C_in, C_out), got {w.shape}")
    squeeze = x.ndim == 2
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 3 or xd.shape[-1] != w.shape[1]:
        raise ShapeMismatch(f"conv1d: input {x.shape} vs kernels {w.shape}")
    k = w.shape[0]
    span = (k - 1) * dilation
    if causal:
        xp = np.concatenate([np.zeros((xd.shape[0], span, xd.shape[2])), xd], axis=1)
    else:
        xp = xd
    L_out = xp.shape[1] - span
    if L_out < 1:
        raise ShapeMismatch(f"conv1d: input length {xd.shape[1]} shorter than span {span + 1}")
    out = np.zeros((xd.shape[0], L_out, w.shape[2]))
    for j in range(k):
        out += xp[:, j * dilation: j * dilation + L_out, :] @ w.data[j]

    def backward(g):
        g3 = g[None] if squeeze else g
        gxp = np.zeros_like(xp)
        gw = np.zeros_like(w.data)
        for j in range(k):
            seg = slice(j * dilation, j * dilation + L_out)
            gxp[:, seg, :] += g3 @ w.data[j].T
            gw[j] = np.einsum("blc,bld->cd", xp[:, seg, :], g3)
        gx = gxp[:, span:, :] if causal else gxp
        return (gx[0] if squeeze else gx), gw

    return _make(out[0] if squeeze else out, (x, w), backward)


def layer_norm(a, gain=None, bias=None, eps=1e-5) -> Tensor:
    """Normalize over the last axis, then apply optional affine parameters."""
    a = as_tensor(a)
    mu = mean(a, axis=-1, keepdims=True)
    centered = sub(a, mu)
    var = mean(mul(centered, centered), axis=-1, keepdims=True)
    out = div(centered, sqrt(add(var, eps)))
    if gain is not None:
        out = mul(out, gain)
    if bias is not None:
        out = add(out, bias)
    return out


def dropout(a, rate, rng) -> Tensor:
    if rate <= 0.0:
        return as_tensor(a)
    a = as_tensor(a)
    mask = (rng.random(a.shape) >= rate) / (1.0 - rate)
    return mul(a, Tensor(mask))


# --- backward ---------------------------------------------------------------

def _tape(loss):
    """Recorded nodes reachable from ``loss`` in topological order."""
    order, seen = [], set()
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
        for p in node._parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    return order


def backward(loss: Tensor, inputs=None) -> None:
    """Populate ``.grad`` on every requires_grad leaf connected to ``loss``.

    Gradients accumulate into existing ``.grad`` arrays. Leaves listed in
    ``inputs`` that the loss does not depend on get a zero gradient and a
    DisconnectedLeafWarning.
    """
    if loss.data.size != 1:
        raise NotScalar(f"backward needs a scalar loss, got shape {loss.shape}")
    tape = _tape(loss)
    grads = {id(loss): np.ones_like(loss.data)}
    reached = set()
    for node in reversed(tape):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            reached.add(id(node))
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            if id(parent) in grads:
                grads[id(parent)] = grads[id(parent)] + pg
            else:
                grads[id(parent)] = pg
    # free the tape
    for node in tape:
        if not node.is_leaf:
            node._parents = ()
            node._backward = None
    for leaf in inputs or ():
        if id(leaf) not in reached:
            warnings.warn(
                f"leaf {leaf.name or leaf.shape} is not connected to the loss",
                DisconnectedLeafWarning,
                stacklevel=2,
            )
            if leaf.grad is None:
                leaf.grad = np.zeros_like(leaf.data)


def grad(fn, inputs):
    """Gradients of scalar ``fn(*inputs)`` w.r.t. each input array."""
    leaves = [Tensor(np.array(x, dtype=DTYPE), requires_grad=True) for x in inputs]
    out = fn(*leaves)
    backward(out, leaves)
    return [leaf.grad for leaf in leaves]


def numerical_grad(fn, inputs, h=1e-4):
    """Central finite differences of scalar ``fn`` on plain arrays."""
    arrays = [np.array(x, dtype=DTYPE) for x in inputs]
    result = []
    with no_grad():
        for arr in arrays:
            g = np.zeros_like(arr)
            flat, gflat = arr.reshape(-1), g.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                fp = float(fn(*[Tensor(a) for a in arrays]).data.sum())
                flat[i] = orig - h
                fm = float(fn(*[Tensor(a) for a in arrays]).data.sum())
                flat[i] = orig
                gflat[i] = (fp - fm) / (2 * h)
            result.append(g)
    return result


def grad_error(analytic, numeric, floor=1e-7):
    """Largest elementwise relative error |a - n| / max(|a|, |n|).

    Entries whose absolute error is at most ``floor`` count as exact.
    """
    worst = 0.0
    for a, n in zip(analytic, numeric):
        a, n = np.asarray(a), np.asarray(n)
        diff = np.abs(a - n)
        mag = np.maximum(np.abs(a), np.abs(n))
        rel = np.where(diff <= floor, 0.0, diff / np.maximum(mag, floor))
        if rel.size:
            worst = max(worst, float(rel.max()))
    return worst


def gradcheck(fn, inputs, h=1e-4, rtol=1e-4, floor=1e-7):
    """True when analytic and central-difference gradients agree."""
    return grad_error(grad(fn, inputs), numerical_grad(fn, inputs, h), floor) < rtol
