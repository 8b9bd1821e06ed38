"""Dense tensors with tape-based reverse-mode differentiation.

Values are numpy arrays (row-major).  Every differentiable operation records
its parents and a closure mapping the upstream gradient to parent gradients;
:func:`backward` walks that record in reverse topological order.

Two working precisions are supported: float32 (training default) and
float64 (required for gradient checks).  Extended precision (longdouble) is
accepted for evaluating finite-difference oracles.  See :func:`precision`.
"""
from __future__ import annotations

import contextlib
import os

import numpy as np

from . import kernels
from .errors import ContractError, DegenerateInputError, NonFiniteError, ShapeError

NORM_EPS = 1e-12

_state = {
    "grad_enabled": True,
    "dtype": np.float32,
    "deterministic": os.environ.get("SMRE_DETERMINISM", "") == "1",
}


def default_dtype():
    return _state["dtype"]


def set_default_dtype(dtype):
    dtype = np.dtype(dtype).type
    if dtype not in (np.float32, np.float64, np.longdouble):
        raise ContractError(f"unsupported dtype {dtype}")
    _state["dtype"] = dtype


@contextlib.contextmanager
def precision(dtype):
    """Temporarily switch the default floating dtype."""
    old = _state["dtype"]
    set_default_dtype(dtype)
    try:
        yield
    finally:
        _state["dtype"] = old


@contextlib.contextmanager
def no_grad():
    old = _state["grad_enabled"]
    _state["grad_enabled"] = False
    try:
        yield
    finally:
        _state["grad_enabled"] = old


def is_grad_enabled():
    return _state["grad_enabled"]


def deterministic():
    return _state["deterministic"]


def set_deterministic(flag):
    _state["deterministic"] = bool(flag)


@contextlib.contextmanager
def deterministic_reductions(flag=None):
    """Pin BLAS to one thread so reductions run in a fixed order.

    With ``flag=None`` the process-wide setting (``SMRE_DETERMINISM``) decides.
    """
    if flag is None:
        flag = _state["deterministic"]
    if not flag:
        yield
        return
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=1):
        yield


def _check_finite(arr, op):
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"non-finite value produced by {op}")


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    ndiff = grad.ndim - len(shape)
    if ndiff > 0:
        grad = grad.sum(axis=tuple(range(ndiff)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """An n-dimensional array that can take part in the gradient tape."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "name")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad=False, dtype=None, name=None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            if isinstance(data, np.ndarray) and data.dtype.kind == "f":
                arr = data
            else:
                arr = np.asarray(data, dtype=_state["dtype"])
        else:
            arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(_state["dtype"])
        _check_finite(arr, "Tensor()")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None
        self.name = name

    # -- basic introspection -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def __len__(self):
        return self.data.shape[0]

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    # -- operators -----------------------------------------------------------
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

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    @property
    def T(self):
        return transpose(self, None)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def tanh(self):
        return tanh(self)

    def sigmoid(self):
        return sigmoid(self)

    def relu(self):
        return relu(self)

    def astype(self, dtype):
        return astype(self, dtype)


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    if dtype is None and isinstance(x, (int, float)):
        # python scalars adopt the dtype of whatever they meet
        return Tensor(np.asarray(x, dtype=_state["dtype"]))
    return Tensor(x, dtype=dtype)


def _result(data, parents, backward_fn, op):
    _check_finite(data, op)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out.requires_grad = _state["grad_enabled"] and any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = parents
        out._backward = backward_fn
    else:
        out._parents = ()
        out._backward = None
    return out


_SCALARS = (int, float, np.integer, np.floating)


def _pair(a, b):
    # bare scalars take the dtype of the tensor they meet
    a_const, b_const = isinstance(a, _SCALARS), isinstance(b, _SCALARS)
    a = as_tensor(a)
    b = as_tensor(b)
    if a_const and a.dtype != b.dtype:
        a = Tensor(a.data.astype(b.dtype))
    if b_const and a.dtype != b.dtype:
        b = Tensor(b.data.astype(a.dtype))
    return a, b


# -- elementwise arithmetic ----------------------------------------------------

def add(a, b):
    a, b = _pair(a, b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result(a.data + b.data, (a, b), bw, "add")


def sub(a, b):
    a, b = _pair(a, b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _result(a.data - b.data, (a, b), bw, "sub")


def mul(a, b):
    a, b = _pair(a, b)

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _result(a.data * b.data, (a, b), bw, "mul")


def div(a, b):
    a, b = _pair(a, b)
    out = a.data / b.data

    def bw(g):
        ga = g / b.data
        return _unbroadcast(ga, a.shape), _unbroadcast(-ga * out, b.shape)

    return _result(out, (a, b), bw, "div")


def power(a, p):
    a = as_tensor(a)
    p = float(p)

    def bw(g):
        return (g * p * a.data ** (p - 1.0),)

    return _result(a.data ** p, (a,), bw, "power")


def exp(a):
    out = np.exp(a.data)
    return _result(out, (a,), lambda g: (g * out,), "exp")


def log(a):
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.log(a.data)
    return _result(out, (a,), lambda g: (g / a.data,), "log")


def tanh(a):
    out = np.tanh(a.data)
    return _result(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def sigmoid(a):
    out = kernels._pykernels._sigmoid(a.data)
    return _result(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def relu(a):
    """max(0, x); the subgradient at exactly 0 is taken as 0."""
    mask = a.data > 0
    return _result(np.where(mask, a.data, 0).astype(a.dtype), (a,),
                   lambda g: (g * mask,), "relu")


def astype(a, dtype):
    src = a.dtype
    return _result(a.data.astype(dtype), (a,), lambda g: (g.astype(src),), "astype")


# -- linear algebra and reductions -------------------------------------------

def matmul(a, b):
    """Matrix product, numpy broadcasting rules over leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs ≥2-d operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} @ {b.shape}")

    def bw(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _result(a.data @ b.data, (a, b), bw, "matmul")


def tsum(a, axis=None, keepdims=False):
    shape = a.shape

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _result(np.asarray(a.data.sum(axis=axis, keepdims=keepdims)), (a,), bw, "sum")


def mean(a, axis=None, keepdims=False):
    if axis is None:
        n = a.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = int(np.prod([a.shape[ax] for ax in axes]))
    if n == 0:
        raise ShapeError(f"mean over an empty axis of shape {a.shape}")
    return tsum(a, axis, keepdims) * (1.0 / n)


def reshape(a, shape):
    src = a.shape
    return _result(a.data.reshape(shape), (a,), lambda g: (g.reshape(src),), "reshape")


def transpose(a, axes=None):
    if axes is None:
        inv = None
    else:
        inv = tuple(np.argsort(axes))
    return _result(np.transpose(a.data, axes), (a,),
                   lambda g: (np.transpose(g, inv),), "transpose")


def _is_basic_index(idx):
    items = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(i, (int, slice, type(None), type(Ellipsis))) for i in items)


def getitem(a, idx):
    basic = _is_basic_index(idx)

    def bw(g):
        full = np.zeros_like(a.data)
        if basic:
            full[idx] += g
        else:
            np.add.at(full, idx, g)
        return (full,)

    return _result(np.asarray(a.data[idx]), (a,), bw, "getitem")


def embedding(table, ids):
    """Row lookup ``table[ids]`` for an integer array of any shape."""
    ids = np.asarray(ids, dtype=np.int64)

    def bw(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (full,)

    return _result(table.data[ids], (table,), bw, "embedding")


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return _result(np.concatenate([t.data for t in tensors], axis=axis),
                   tuple(tensors), bw, "concat")


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]

    def bw(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _result(np.stack([t.data for t in tensors], axis=axis), tuple(tensors), bw, "stack")


# -- softmax family ------------------------------------------------------------

def softmax_lastdim(x, scale=1.0):
    """Row-wise softmax of ``scale * x`` over the last axis (max-subtracted)."""
    x = as_tensor(x)
    if x.ndim == 0 or x.shape[-1] == 0:
        raise ShapeError(f"softmax over empty last dimension, shape {x.shape}")
    if not np.isfinite(scale):
        raise ContractError(f"softmax scale must be finite, got {scale}")
    z = x.data * scale
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        return (scale * y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _result(y, (x,), bw, "softmax")


def log_softmax_lastdim(x):
    z = x.data - x.data.max(axis=-1, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))

    def bw(g):
        return (g - np.exp(out) * g.sum(axis=-1, keepdims=True),)

    return _result(out, (x,), bw, "log_softmax")


def cross_entropy_masked(logits, targets, mask):
    """Mean negative log-likelihood of ``targets`` over positions where mask is 1.

    ``logits`` is [..., V]; ``targets`` and ``mask`` match its leading shape.
    """
    targets = np.asarray(targets, dtype=np.int64)
    mask = np.asarray(mask, dtype=logits.dtype)
    if targets.shape != logits.shape[:-1] or mask.shape != targets.shape:
        raise ShapeError(
            f"cross entropy shapes disagree: logits {logits.shape}, "
            f"targets {targets.shape}, mask {mask.shape}")
    count = mask.sum()
    if count == 0:
        raise DegenerateInputError("cross entropy with every position masked")
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    picked = np.take_along_axis(logp, targets[..., None], axis=-1)[..., 0]
    loss = -(picked * mask).sum() / count

    def bw(g):
        p = np.exp(logp)
        onehot = np.zeros_like(p)
        np.put_along_axis(onehot, targets[..., None], 1.0, axis=-1)
        return (g * (p - onehot) * (mask / count)[..., None],)

    return _result(np.asarray(loss, dtype=logits.dtype), (logits,), bw, "cross_entropy")


# -- similarity ----------------------------------------------------------------

def _row_norms(x, what):
    norms = np.sqrt((x * x).sum(axis=1))
    bad = np.nonzero(norms < NORM_EPS)[0]
    if bad.size:
        raise DegenerateInputError(f"zero-norm row {int(bad[0])} in {what}")
    return norms


def cosine_similarity_matrix(a, b):
    """All-pairs cosine: entry (i, j) is cos(a_i, b_j)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeError(f"cosine similarity needs [B,d] operands, got {a.shape}, {b.shape}")
    na = _row_norms(a.data, "first operand")
    nb = _row_norms(b.data, "second operand")
    an = a.data / na[:, None]
    bn = b.data / nb[:, None]
    s = np.clip(an @ bn.T, -1.0, 1.0)

    def bw(g):
        dan = g @ bn
        dbn = g.T @ an
        ga = (dan - an * (dan * an).sum(axis=1, keepdims=True)) / na[:, None]
        gb = (dbn - bn * (dbn * bn).sum(axis=1, keepdims=True)) / nb[:, None]
        return ga, gb

    return _result(s, (a, b), bw, "cosine_similarity_matrix")


def paired_cosine(a, b):
    """Row-wise cosine: entry i is cos(a_i, b_i)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape or a.ndim != 2:
        raise ShapeError(f"paired cosine needs equal [B,d] operands, got {a.shape}, {b.shape}")
    na = _row_norms(a.data, "first operand")
    nb = _row_norms(b.data, "second operand")
    an = a.data / na[:, None]
    bn = b.data / nb[:, None]
    s = np.clip((an * bn).sum(axis=1), -1.0, 1.0)

    def bw(g):
        g = g[:, None]
        ga = g * (bn - an * s[:, None]) / na[:, None]
        gb = g * (an - bn * s[:, None]) / nb[:, None]
        return ga, gb

    return _result(s, (a, b), bw, "paired_cosine")


# -- recurrent cell --------------------------------------------------------------

def lstm_cell(z, c_prev):
    """Fused LSTM nonlinearity.

    ``z`` holds pre-activations [B, 4H] in gate order input, forget, cell,
    output.  Returns a [B, 2H] tensor: new hidden state then new cell state.
    """
    B, H = c_prev.shape
    if z.shape != (B, 4 * H):
        raise ShapeError(f"lstm gates {z.shape} do not match cell state {c_prev.shape}")
    dtype = z.dtype
    zc = np.ascontiguousarray(z.data)
    cp = np.ascontiguousarray(c_prev.data, dtype=dtype)
    hc = np.empty((B, 2 * H), dtype=dtype)
    gates = np.empty((B, 4 * H), dtype=dtype)
    tanh_c = np.empty((B, H), dtype=dtype)
    # the compiled kernel covers float32/float64 only
    impl = kernels if dtype in (np.float32, np.float64) else kernels._pykernels
    impl.lstm_forward(zc, cp, hc, gates, tanh_c)

    def bw(g):
        dz = np.empty_like(gates)
        dcp = np.empty_like(cp)
        impl.lstm_backward(np.ascontiguousarray(g, dtype=dtype), gates, tanh_c, cp, dz, dcp)
        return dz, dcp

    return _result(hc, (z, c_prev), bw, "lstm_cell")


# -- backward pass ---------------------------------------------------------------

def _topological(root):
    order, seen = [], set()
    stack = [(root, False)]
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


def backward(loss):
    """Populate ``.grad`` on every requires_grad ancestor of a scalar loss.

    Leaf gradients accumulate across calls; the recorded graph is released.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("loss does not depend on any tensor requiring grad")
    order = _topological(loss)
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        node.grad = g
        parent_grads = node._backward(g)
        for p, pg in zip(node._parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            key = id(p)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
        node._parents = ()
        node._backward = None
