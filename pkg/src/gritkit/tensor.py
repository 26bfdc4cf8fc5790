"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every op on tensors that require grad is appended to the active :class:`Tape`;
``backward`` walks that tape in exact reverse recording order. Broadcasting is
limited to scalar-with-anything and a row vector against a matrix; any other
shape mix raises.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

EPS_RHO = 1e-8


class ShapeError(ValueError):
    pass


class Tape:
    """Ordered record of differentiable ops."""

    def __init__(self) -> None:
        self.nodes: list[Tensor] = []

    def record(self, t: "Tensor") -> None:
        t._tape = self
        t.tape_id = len(self.nodes)
        self.nodes.append(t)

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPES.remove(self)

    def backward(self, loss: "Tensor") -> None:
        if loss.data.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss._tape is not self:
            if loss.requires_grad and loss.tape_id is None:
                loss._accumulate(np.ones_like(loss.data))
                return
            raise ValueError("loss was not recorded on this tape")
        pending = {loss.tape_id: np.ones_like(loss.data)}
        for node in reversed(self.nodes[: loss.tape_id + 1]):
            g = pending.pop(node.tape_id, None)
            if g is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if parent._tape is self:
                    prev = pending.get(parent.tape_id)
                    pending[parent.tape_id] = pg if prev is None else prev + pg
                else:
                    parent._accumulate(pg)

    def reset(self) -> None:
        self.nodes.clear()


_TAPES: list[Tape] = []
_DEFAULT_TAPE = Tape()
_GRAD_ENABLED = [True]
_COUNTERS: list["OpCounter"] = []


def current_tape() -> Tape:
    return _TAPES[-1] if _TAPES else _DEFAULT_TAPE


@contextlib.contextmanager
def no_grad():
    _GRAD_ENABLED.append(False)
    try:
        yield
    finally:
        _GRAD_ENABLED.pop()


@dataclass
class OpCounter:
    """Counts floating-point operations (a multiply-add is 2) inside a ``with`` block."""

    flops: int = 0
    by_op: dict[str, int] = field(default_factory=dict)

    def __enter__(self) -> "OpCounter":
        _COUNTERS.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _COUNTERS.remove(self)


def _count(op: str, flops: int) -> None:
    for c in _COUNTERS:
        c.flops += flops
        c.by_op[op] = c.by_op.get(op, 0) + flops


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward",
                 "_tape", "tape_id")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None) -> None:
        self.data = np.array(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self._tape: Tape | None = None
        self.tape_id: int | None = None

    # -- bookkeeping -----------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        self.grad = g.copy() if self.grad is None else self.grad + g

    def backward(self) -> None:
        tape = self._tape if self._tape is not None else current_tape()
        tape.backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # -- operators -------------------------------------------------------------

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
        if isinstance(other, Tensor):
            return mul(self, pow_scalar(other, -1.0))
        return mul(self, 1.0 / other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out._tape = None
    out.tape_id = None
    out.requires_grad = _GRAD_ENABLED[-1] and any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward
        current_tape().record(out)
    else:
        out._parents = ()
        out._backward = None
    return out


# -- broadcasting ------------------------------------------------------------------

def _broadcast_ok(a: tuple, b: tuple) -> bool:
    if a == b or a == () or b == ():
        return True
    for row, mat in ((a, b), (b, a)):
        if len(mat) == 2 and row in ((mat[1],), (1, mat[1])):
            return True
    return False


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    if shape == ():
        return np.asarray(g.sum())
    if len(shape) == 1:
        return g.sum(axis=0)
    return g.sum(axis=0, keepdims=True)


def _binary_check(a: Tensor, b: Tensor, op: str) -> None:
    if not _broadcast_ok(a.shape, b.shape):
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


# -- elementwise ---------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_check(a, b, "add")
    out = a.data + b.data
    _count("add", out.size)
    return _make(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_check(a, b, "sub")
    out = a.data - b.data
    _count("sub", out.size)
    return _make(out, (a, b), lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)))


def mul(a, b) -> Tensor:
    """Elementwise product (Hadamard)."""
    a, b = as_tensor(a), as_tensor(b)
    _binary_check(a, b, "mul")
    out = a.data * b.data
    _count("mul", out.size)
    return _make(out, (a, b), lambda g: (_unbroadcast(g * b.data, a.shape),
                                         _unbroadcast(g * a.data, b.shape)))


def pow_scalar(x: Tensor, p: float) -> Tensor:
    out = x.data ** p
    _count("pow", out.size)
    return _make(out, (x,), lambda g: (g * p * x.data ** (p - 1),))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    _count("exp", out.size)
    return _make(out, (x,), lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    out = np.log(x.data)
    _count("log", out.size)
    return _make(out, (x,), lambda g: (g / x.data,))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    _count("relu", x.data.size)
    return _make(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def signed_sqrt(x: Tensor) -> Tensor:
    """``sqrt(relu(x)) - sqrt(relu(-x))``; the derivative is clamped at ``|x| = EPS_RHO``."""
    mag = np.abs(x.data)
    out = np.sign(x.data) * np.sqrt(mag)
    _count("signed_sqrt", out.size)
    return _make(out, (x,), lambda g: (g * 0.5 / np.sqrt(np.maximum(mag, EPS_RHO)),))


def scale_rows(x: Tensor, c) -> Tensor:
    """Multiply row ``i`` of ``x`` by the constant ``c[i]`` (e.g. ``log(1 + d_i)``)."""
    c = np.asarray(c, dtype=np.float64)
    if x.ndim != 2 or c.shape != (x.shape[0],):
        raise ShapeError(f"scale_rows: {c.shape} does not match rows of {x.shape}")
    _count("scale_rows", x.data.size)
    return _make(x.data * c[:, None], (x,), lambda g: (g * c[:, None],))


# -- linear algebra ------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    """2-D matrix product, or batched product of two 3-D stacks with equal batch size."""
    a, b = as_tensor(a), as_tensor(b)
    ok = (a.ndim == b.ndim == 2 and a.shape[1] == b.shape[0]) or (
        a.ndim == b.ndim == 3 and a.shape[0] == b.shape[0] and a.shape[2] == b.shape[1])
    if not ok:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = a.data @ b.data
    _count("matmul", 2 * out.size * a.shape[-1])

    def backward(g):
        return g @ np.swapaxes(b.data, -1, -2), np.swapaxes(a.data, -1, -2) @ g

    return _make(out, (a, b), backward)


def transpose(x: Tensor) -> Tensor:
    """Swap the last two axes."""
    if x.ndim < 2:
        raise ShapeError("transpose needs at least 2 dimensions")
    return _make(np.swapaxes(x.data, -1, -2).copy(), (x,), lambda g: (np.swapaxes(g, -1, -2),))


def reshape(x: Tensor, shape: tuple) -> Tensor:
    out = x.data.reshape(shape)
    return _make(out, (x,), lambda g: (g.reshape(x.shape),))


def gather_rows(x: Tensor, idx) -> Tensor:
    """``x[idx]`` along axis 0; the backward pass scatter-adds."""
    idx = np.asarray(idx, dtype=np.int64)

    def backward(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, g)
        return (gx,)

    return _make(x.data[idx], (x,), backward)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _make(out, tensors, lambda g: tuple(np.split(g, splits, axis=axis)))


# -- reductions ----------------------------------------------------------------------

def sum_(x: Tensor, axis=None, keepdims=False) -> Tensor:
    out = np.asarray(x.data.sum(axis=axis, keepdims=keepdims))
    _count("sum", x.data.size)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _make(out, (x,), backward)


def mean(x: Tensor, axis=None, keepdims=False) -> Tensor:
    count = x.data.size if axis is None else x.shape[axis]
    return mul(sum_(x, axis, keepdims), 1.0 / count)


def softmax_rows(x: Tensor) -> Tensor:
    """Softmax over the last axis of a 2-D tensor, shifted by the row max."""
    if x.ndim != 2:
        raise ShapeError("softmax_rows expects a 2-D tensor")
    if x.shape[1] == 0:
        raise ShapeError("softmax over an empty axis")
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=1, keepdims=True)
    _count("softmax", 4 * y.size)
    return _make(y, (x,), lambda g: (y * (g - (g * y).sum(axis=1, keepdims=True)),))


def l1_loss(pred: Tensor, target) -> Tensor:
    """Mean absolute error against a constant target."""
    target = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=np.float64)
    if target.shape != pred.shape:
        raise ShapeError(f"l1_loss: {pred.shape} vs target {target.shape}")
    diff = pred.data - target
    _count("l1", 2 * diff.size)
    return _make(np.asarray(np.abs(diff).mean()), (pred,),
                 lambda g: (g * np.sign(diff) / diff.size,))


# -- gradient checking -----------------------------------------------------------------

@dataclass
class GradcheckReport:
    max_rel_error: float
    tol: float
    checked: int
    per_input: list[float]

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tol

    def as_dict(self) -> dict:
        return {"max_rel_error": self.max_rel_error, "tol": self.tol,
                "checked": self.checked, "pass": self.passed}


def gradcheck(f: Callable[[], Tensor], inputs: Iterable[Tensor], h: float = 1e-5,
              tol: float = 1e-4) -> GradcheckReport:
    """Compare tape gradients of scalar ``f()`` with central differences.

    The error for each input is ``max|analytic - numeric| / max(||analytic||_inf,
    ||numeric||_inf, 1)``; the report keeps the worst input. The floor makes
    inputs whose exact gradient vanishes (a bias feeding a softmax or a batch
    norm) compare absolutely instead of dividing noise by noise. ``f`` must rebuild
    its graph from the current contents of ``inputs`` on every call, and the
    inputs should stay away from kinks (relu at 0, signed sqrt at 0) by more
    than ``10 * sqrt(h)``.
    """
    inputs = list(inputs)
    for x in inputs:
        x.zero_grad()
    with Tape() as tape:
        loss = f()
        tape.backward(loss)
    per_input = []
    checked = 0
    for x in inputs:
        analytic = np.zeros_like(x.data) if x.grad is None else x.grad
        numeric = np.zeros_like(x.data)
        flat = x.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            with no_grad():
                flat[i] = orig + h
                fp = f().item()
                flat[i] = orig - h
                fm = f().item()
            flat[i] = orig
            numeric.reshape(-1)[i] = (fp - fm) / (2 * h)
        checked += flat.size
        scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), 1.0)
        err = np.abs(analytic - numeric).max(initial=0.0)
        per_input.append(float(err / scale))
    return GradcheckReport(max(per_input, default=0.0), tol, checked, per_input)


# -- optimizer -------------------------------------------------------------------------

@dataclass
class AdamState:
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray | None], state: AdamState,
              lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> AdamState:
    """In-place Adam update with bias correction; missing gradients count as zero."""
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.data.shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, param {p.data.shape}")
        m = state.m.setdefault(name, np.zeros_like(p.data))
        v = state.v.setdefault(name, np.zeros_like(p.data))
        if m.shape != p.data.shape:
            raise ShapeError(f"optimizer state for {name} does not match parameter shape")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return state
