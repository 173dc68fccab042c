"""A small dense reverse-mode differentiation engine on float64 numpy arrays.

Every operation returns a :class:`Tensor` that remembers its parents and a
closure mapping the upstream gradient to gradients for those parents.
:func:`backward` orders the recorded graph into a :class:`Tape` and walks it
in reverse.

Broadcasting is limited to adding or multiplying a ``(1, n)`` row onto an
``(m, n)`` matrix, and to scalar constants.
"""

from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

NORM_EPS = 1e-12

_ids = itertools.count()
_state = threading.local()


class ShapeMismatch(ValueError):
    pass


class NonFiniteValue(FloatingPointError):
    pass


class NotScalar(ValueError):
    pass


def grad_enabled() -> bool:
    return getattr(_state, "grad", True)


@contextmanager
def no_grad():
    """Operations inside produce constants (no parents recorded)."""
    prev = grad_enabled()
    _state.grad = False
    try:
        yield
    finally:
        _state.grad = prev


@contextmanager
def debug_mode(enabled: bool = True):
    """Check every produced value for NaN/Inf while active."""
    prev = getattr(_state, "debug", False)
    _state.debug = enabled
    try:
        yield
    finally:
        _state.debug = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "node_id", "parents", "backward_fn", "op")

    def __init__(self, data, requires_grad: bool = False, parents=(), backward_fn=None, op: str = "leaf"):
        # leaves own a private copy; op outputs are fresh arrays already
        if op == "leaf":
            self.data = np.array(data, dtype=np.float64)
        else:
            self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self.node_id = next(_ids)
        self.parents = parents
        self.backward_fn = backward_fn
        self.op = op
        if getattr(_state, "debug", False) and not np.all(np.isfinite(self.data)):
            raise NonFiniteValue(f"non-finite value produced by {op}")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _not_scalar(self)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{flag})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, other)
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not np.isscalar(other):
            raise TypeError("only division by a scalar constant is supported")
        return scale(self, 1.0 / other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    @property
    def T(self):
        return transpose(self)


def _not_scalar(t):
    raise NotScalar(f"expected a single value, got shape {t.shape}")


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def _make(data, parents, backward_fn, op) -> Tensor:
    if grad_enabled() and any(p.requires_grad for p in parents):
        return Tensor(data, True, parents, backward_fn, op)
    return Tensor(data, op=op)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == tuple(shape):
        return g
    if len(shape) == 2 and shape[0] == 1:
        return g.sum(axis=0, keepdims=True)
    if len(shape) == 0 or int(np.prod(shape)) == 1:
        return np.asarray(g.sum()).reshape(shape)
    raise ShapeMismatch(f"cannot reduce gradient {g.shape} to {shape}")


def _check_broadcast(a, b, name):
    if a.shape == b.shape:
        return
    ok = (
        len(a.shape) == 2
        and len(b.shape) == 2
        and a.shape[1] == b.shape[1]
        and (a.shape[0] == 1 or b.shape[0] == 1)
    ) or a.data.size == 1 or b.data.size == 1
    if not ok:
        raise ShapeMismatch(f"{name}: incompatible shapes {a.shape} and {b.shape}")


# --- primitive operations ------------------------------------------------------


def matmul(a, b) -> Tensor:
    """Matrix product. ``a`` may be a constant dense or scipy.sparse matrix."""
    if sp.issparse(a):
        if not isinstance(b, Tensor):
            b = as_tensor(b)
        if a.shape[1] != b.shape[0]:
            raise ShapeMismatch(f"matmul: {a.shape} @ {b.shape}")
        return _make(np.asarray(a @ b.data), (b,), lambda g: (np.asarray(a.T @ g),), "spmm")
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul: {a.shape} @ {b.shape}")
    return _make(
        a.data @ b.data,
        (a, b),
        lambda g: (g @ b.data.T, a.data.T @ g),
        "matmul",
    )


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    return _make(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        "add",
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    return _make(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)),
        "sub",
    )


def mul(a, b) -> Tensor:
    """Elementwise product."""
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    return _make(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
        "mul",
    )


mul_elementwise = mul


def scale(x, c: float) -> Tensor:
    x = as_tensor(x)
    c = float(c)
    return _make(x.data * c, (x,), lambda g: (g * c,), "scale")


def relu(x) -> Tensor:
    x = as_tensor(x)
    on = x.data > 0  # subgradient 0 at exactly 0
    return _make(np.where(on, x.data, 0.0), (x,), lambda g: (g * on,), "relu")


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    y = _sigmoid(x.data)
    return _make(y, (x,), lambda g: (g * y * (1.0 - y),), "sigmoid")


def _sigmoid(v):
    # split by sign so exp never overflows
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def softplus(x) -> Tensor:
    """log(1 + exp(x)), computed without overflow."""
    x = as_tensor(x)
    return _make(np.logaddexp(0.0, x.data), (x,), lambda g: (g * _sigmoid(x.data),), "softplus")


def exp(x) -> Tensor:
    x = as_tensor(x)
    y = np.exp(x.data)
    return _make(y, (x,), lambda g: (g * y,), "exp")


def log(x) -> Tensor:
    x = as_tensor(x)
    return _make(np.log(x.data), (x,), lambda g: (g / x.data,), "log")


def tensor_sum(x, axis: int | None = None) -> Tensor:
    """Sum all entries (shape (1, 1)) or along an axis keeping dimensions."""
    x = as_tensor(x)
    if axis is None:
        return _make(
            np.array([[x.data.sum()]]),
            (x,),
            lambda g: (np.full(x.shape, g.reshape(-1)[0]),),
            "sum",
        )
    y = x.data.sum(axis=axis, keepdims=True)
    return _make(y, (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),), "sum")


def mean_rows(x) -> Tensor:
    """Column-wise mean over the rows of an (N, D) matrix, giving (1, D)."""
    x = as_tensor(x)
    n = x.shape[0]
    if n == 0:
        raise ShapeMismatch("mean_rows of an empty matrix")
    return _make(
        x.data.mean(axis=0, keepdims=True),
        (x,),
        lambda g: (np.broadcast_to(g / n, x.shape).copy(),),
        "mean_rows",
    )


def transpose(x) -> Tensor:
    x = as_tensor(x)
    return _make(x.data.T.copy(), (x,), lambda g: (g.T,), "transpose")


def concat_rows(parts) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    widths = {p.shape[1] for p in parts}
    if len(widths) != 1:
        raise ShapeMismatch(f"concat_rows: column counts differ {sorted(widths)}")
    bounds = np.cumsum([0] + [p.shape[0] for p in parts])

    def back(g):
        return tuple(g[bounds[i] : bounds[i + 1]] for i in range(len(parts)))

    return _make(np.vstack([p.data for p in parts]), tuple(parts), back, "concat_rows")


def l2_normalize_rows(x) -> Tensor:
    """Divide each row by its Euclidean norm plus 1e-12."""
    x = as_tensor(x)
    norms = np.sqrt((x.data**2).sum(axis=1, keepdims=True))
    denom = norms + NORM_EPS
    y = x.data / denom

    def back(g):
        dot = (g * x.data).sum(axis=1, keepdims=True)
        safe = np.where(norms > 0, norms, 1.0)
        return (g / denom - x.data * dot / (denom**2 * safe),)

    return _make(y, (x,), back, "l2_normalize_rows")


# --- reverse pass --------------------------------------------------------------


@dataclass
class Tape:
    """Differentiable nodes reachable from a root, parents before children."""

    records: list[Tensor]

    @classmethod
    def from_root(cls, root: Tensor) -> "Tape":
        order: list[Tensor] = []
        seen: set[int] = set()
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if node.node_id in seen:
                continue
            seen.add(node.node_id)
            stack.append((node, True))
            for p in node.parents:
                if p.requires_grad and p.node_id not in seen:
                    stack.append((p, False))
        return cls(order)


def backward(loss: Tensor, params=()) -> dict[int, np.ndarray]:
    """Gradients of a scalar ``loss`` for every differentiable node it depends on.

    Leaves reached get their ``.grad`` set. Every tensor in ``params`` is
    guaranteed an entry, zero-filled when it did not take part in the loss.
    """
    if loss.data.size != 1:
        raise NotScalar(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {}
    if loss.requires_grad:
        tape = Tape.from_root(loss)
        grads[loss.node_id] = np.ones_like(loss.data)
        for node in reversed(tape.records):
            g = grads.get(node.node_id)
            if g is None or node.backward_fn is None:
                continue
            for parent, pg in zip(node.parents, node.backward_fn(g)):
                if not parent.requires_grad:
                    continue
                if parent.node_id in grads:
                    grads[parent.node_id] = grads[parent.node_id] + pg
                else:
                    grads[parent.node_id] = pg
        for node in tape.records:
            if node.backward_fn is None:
                node.grad = grads[node.node_id]
    for p in params:
        if p.node_id not in grads:
            grads[p.node_id] = np.zeros_like(p.data)
            p.grad = grads[p.node_id]
    return grads


def finite_difference_check(f, params, step: float = 1e-5, max_coords: int | None = None, rng=None) -> float:
    """Largest relative disagreement between backward() and central differences.

    ``f`` is a zero-argument callable rebuilding the scalar loss from the
    current values of ``params``. With ``max_coords`` set, each parameter is
    probed at that many randomly chosen coordinates instead of all of them.
    """
    params = list(params)
    loss = f()
    grads = backward(loss, params)
    rng = np.random.default_rng(0) if rng is None else rng
    worst = 0.0
    for p in params:
        g_ad = grads[p.node_id].reshape(-1)
        flat = p.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = rng.choice(flat.size, size=max_coords, replace=False)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + step
            up = f().item()
            flat[c] = orig - step
            down = f().item()
            flat[c] = orig
            g_fd = (up - down) / (2 * step)
            err = abs(g_ad[c] - g_fd) / max(1e-8, abs(g_ad[c]) + abs(g_fd))
            worst = max(worst, err)
    return worst
