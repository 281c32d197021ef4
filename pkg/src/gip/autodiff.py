"""Minimal reverse-mode differentiation over dense float64 matrices.

Every value is a 2-D ``float64`` array wrapped in a :class:`Tensor`. Operations
on tensors that belong to a :class:`Tape` are recorded in execution order, which
is a valid topological order, so :meth:`Tape.backward` is a single reverse sweep.

Tensors without a tape (or whose inputs are all constants) are evaluated eagerly
and never recorded, so the same model code serves training and inference:

>>> tape = Tape()
>>> x = tape.param([[1.0, 2.0]])
>>> loss = sum_(x * x)
>>> tape.backward(loss)[x]
array([[2., 4.]])

Non-differentiable points use subgradient 0: ``relu`` at 0, ``maximum`` at the
threshold, ``sqrt`` at 0 and ``frobenius_norm`` at the zero matrix.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from .errors import NonFiniteError, ShapeError

__all__ = [
    "Tensor",
    "Tape",
    "record",
    "matmul",
    "transpose",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "power",
    "row_softmax",
    "sigmoid",
    "relu",
    "log",
    "exp",
    "sqrt",
    "sum_",
    "trace",
    "frobenius_norm",
    "concat_rows",
    "concat_cols",
    "slice_",
    "maximum",
    "reshape",
    "log1p_sum_exp",
    "as_tensor",
]

VJP = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Tensor:
    """An immutable 2-D float64 matrix, optionally tracked by a tape."""

    __slots__ = ("value", "tape", "index", "name")
    # make ``ndarray + Tensor`` dispatch to Tensor.__radd__
    __array_priority__ = 1000

    def __init__(self, value, tape: Tape | None = None, index: int = -1, name: str | None = None):
        self.value = value
        self.tape = tape
        self.index = index
        self.name = name

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    @property
    def rows(self) -> int:
        return self.value.shape[0]

    @property
    def cols(self) -> int:
        return self.value.shape[1]

    @property
    def tracked(self) -> bool:
        return self.index >= 0

    @property
    def T(self) -> Tensor:
        return transpose(self)

    def item(self) -> float:
        if self.value.size != 1:
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.value[0, 0])

    def numpy(self) -> np.ndarray:
        return self.value

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, tracked={self.tracked}{tag})"

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

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __pow__(self, p):
        return power(self, p)


class Tape:
    """Records operations and computes adjoints by one reverse sweep."""

    def __init__(self):
        self._parents: list[tuple[int, ...]] = []
        self._vjps: list[VJP | None] = []
        self._params: list[Tensor] = []

    def __len__(self):
        return len(self._vjps)

    @property
    def params(self) -> list[Tensor]:
        return list(self._params)

    def param(self, value, name: str | None = None) -> Tensor:
        """Register a leaf tensor whose adjoint is reported by :meth:`backward`."""
        arr = _as_matrix(value).copy()
        _check_finite(arr, "param")
        t = Tensor(arr, self, len(self._vjps), name)
        self._parents.append(())
        self._vjps.append(None)
        self._params.append(t)
        return t

    def const(self, value) -> Tensor:
        return Tensor(_as_matrix(value), self)

    def _record(self, value: np.ndarray, inputs: Sequence[Tensor], vjp: VJP) -> Tensor:
        t = Tensor(value, self, len(self._vjps))
        self._parents.append(tuple(x.index for x in inputs))
        self._vjps.append(vjp)
        return t

    def backward(self, output: Tensor) -> dict[Tensor, np.ndarray]:
        """Adjoints of ``output`` with respect to every parameter on this tape."""
        if output.shape != (1, 1):
            raise ShapeError(f"backward needs a 1x1 output, got {output.shape}")
        if output.tape is not None and output.tape is not self:
            raise ValueError("output was recorded on a different tape")
        adj: list[np.ndarray | None] = [None] * len(self._vjps)
        if output.index >= 0:
            adj[output.index] = np.ones((1, 1))
            for i in range(output.index, -1, -1):
                g = adj[i]
                vjp = self._vjps[i]
                if g is None or vjp is None:
                    continue
                for parent, pg in zip(self._parents[i], vjp(g)):
                    if parent < 0 or pg is None:
                        continue
                    prev = adj[parent]
                    adj[parent] = pg if prev is None else prev + pg
        return {
            p: (adj[p.index] if adj[p.index] is not None else np.zeros_like(p.value))
            for p in self._params
        }


def _as_matrix(value) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        return arr.reshape(1, 1)
    if arr.ndim == 1:
        return arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ShapeError(f"tensors are 2-D, got array of shape {arr.shape}")
    return arr


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(_as_matrix(x))


def _check_finite(value: np.ndarray, op: str):
    # a finite sum proves every entry finite; only overflowing sums need the full scan
    if not math.isfinite(value.sum()) and not np.isfinite(value).all():
        raise NonFiniteError(f"{op} produced non-finite values")


def _emit(op: str, value: np.ndarray, inputs: Sequence[Tensor], vjp: VJP) -> Tensor:
    _check_finite(value, op)
    tape = None
    tracked = False
    for x in inputs:
        if x.tape is not None:
            if tape is None:
                tape = x.tape
            elif x.tape is not tape:
                raise ValueError(f"{op}: operands belong to different tapes")
        tracked = tracked or x.index >= 0
    if not tracked:
        return Tensor(value, tape)
    return tape._record(value, inputs, vjp)


def _unbroadcast(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if g.shape == shape:
        return g
    if shape[0] == 1 and g.shape[0] != 1:
        g = g.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        g = g.sum(axis=1, keepdims=True)
    return g


def _broadcast_check(op: str, a: Tensor, b: Tensor):
    if a.value.shape == b.value.shape:
        return
    for da, db in zip(a.shape, b.shape):
        if da != db and da != 1 and db != 1:
            raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


# --- linear algebra -------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.cols != b.rows:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    av, bv = a.value, b.value

    def vjp(g):
        return (g @ bv.T if a.index >= 0 else None, av.T @ g if b.index >= 0 else None)

    return _emit("matmul", av @ bv, (a, b), vjp)


def transpose(a) -> Tensor:
    a = as_tensor(a)
    return _emit("transpose", a.value.T.copy(), (a,), lambda g: (g.T,))


def trace(a) -> Tensor:
    a = as_tensor(a)
    if a.rows != a.cols:
        raise ShapeError(f"trace: matrix must be square, got {a.shape}")
    n = a.rows
    return _emit("trace", np.array([[np.trace(a.value)]]), (a,), lambda g: (g[0, 0] * np.eye(n),))


def frobenius_norm(a) -> Tensor:
    a = as_tensor(a)
    av = a.value
    n = float(np.sqrt(np.sum(av * av)))

    def vjp(g):
        if n == 0.0:
            return (np.zeros_like(av),)
        return (g[0, 0] * av / n,)

    return _emit("frobenius_norm", np.array([[n]]), (a,), vjp)


# --- elementwise ----------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("add", a, b)
    sa, sb = a.shape, b.shape
    return _emit("add", a.value + b.value, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("sub", a, b)
    sa, sb = a.shape, b.shape
    return _emit("sub", a.value - b.value, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("mul", a, b)
    av, bv = a.value, b.value

    def vjp(g):
        return (
            _unbroadcast(g * bv, av.shape) if a.index >= 0 else None,
            _unbroadcast(g * av, bv.shape) if b.index >= 0 else None,
        )

    return _emit("mul", av * bv, (a, b), vjp)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("div", a, b)
    av, bv = a.value, b.value
    with np.errstate(divide="ignore", invalid="ignore"):
        out = av / bv

    def vjp(g):
        return (
            _unbroadcast(g / bv, av.shape) if a.index >= 0 else None,
            _unbroadcast(-g * out / bv, bv.shape) if b.index >= 0 else None,
        )

    return _emit("div", out, (a, b), vjp)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _emit("neg", -a.value, (a,), lambda g: (-g,))


def power(a, p: float) -> Tensor:
    """Elementwise ``a ** p`` for a scalar exponent."""
    a = as_tensor(a)
    av = a.value
    with np.errstate(divide="ignore", invalid="ignore"):
        out = av**p
    return _emit("power", out, (a,), lambda g: (g * p * av ** (p - 1),))


def exp(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        out = np.exp(a.value)
    return _emit("exp", out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    av = a.value
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(av)
    return _emit("log", out, (a,), lambda g: (g / av,))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(invalid="ignore"):
        out = np.sqrt(a.value)

    def vjp(g):
        safe = np.where(out > 0, out, 1.0)
        return (np.where(out > 0, g / (2.0 * safe), 0.0),)

    return _emit("sqrt", out, (a,), vjp)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * a.value))
    return _emit("sigmoid", out, (a,), lambda g: (g * out * (1.0 - out),))


def relu(a) -> Tensor:
    a = as_tensor(a)
    on = a.value > 0
    return _emit("relu", np.where(on, a.value, 0.0), (a,), lambda g: (g * on,))


def maximum(a, c: float) -> Tensor:
    """Elementwise ``max(a, c)`` against a scalar threshold."""
    a = as_tensor(a)
    on = a.value > c
    return _emit("maximum", np.where(on, a.value, c), (a,), lambda g: (g * on,))


def row_softmax(a) -> Tensor:
    a = as_tensor(a)
    z = a.value - a.value.max(axis=1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=1, keepdims=True)

    def vjp(g):
        return (out * (g - np.sum(g * out, axis=1, keepdims=True)),)

    return _emit("row_softmax", out, (a,), vjp)


# --- reductions and structure ---------------------------------------------


def sum_(a, axis: int | None = None) -> Tensor:
    """Sum all entries (1x1 result) or along ``axis`` keeping two dimensions."""
    a = as_tensor(a)
    shape = a.shape
    if axis is None:
        out = np.array([[a.value.sum()]])
    elif axis in (0, 1):
        out = a.value.sum(axis=axis, keepdims=True)
    else:
        raise ValueError(f"axis must be None, 0 or 1, got {axis}")
    return _emit("sum", out, (a,), lambda g: (np.broadcast_to(g, shape).copy(),))


def log1p_sum_exp(a) -> Tensor:
    """``log(1 + sum(exp(a)))`` over all entries, evaluated stably; 1x1 result."""
    a = as_tensor(a)
    av = a.value
    m = max(0.0, float(av.max())) if av.size else 0.0
    val = m + np.log(np.exp(-m) + np.exp(av - m).sum())
    return _emit("log1p_sum_exp", np.array([[val]]), (a,), lambda g: (g[0, 0] * np.exp(av - val),))


def concat_rows(parts: Sequence) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    if len({p.cols for p in parts}) > 1:
        raise ShapeError(f"concat_rows: column counts differ: {[p.shape for p in parts]}")
    bounds = np.cumsum([0] + [p.rows for p in parts])

    def vjp(g):
        return [g[bounds[i] : bounds[i + 1]] for i in range(len(parts))]

    return _emit("concat_rows", np.vstack([p.value for p in parts]), parts, vjp)


def concat_cols(parts: Sequence) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    if len({p.rows for p in parts}) > 1:
        raise ShapeError(f"concat_cols: row counts differ: {[p.shape for p in parts]}")
    bounds = np.cumsum([0] + [p.cols for p in parts])

    def vjp(g):
        return [g[:, bounds[i] : bounds[i + 1]] for i in range(len(parts))]

    return _emit("concat_cols", np.hstack([p.value for p in parts]), parts, vjp)


def slice_(a, rows: slice = slice(None), cols: slice = slice(None)) -> Tensor:
    a = as_tensor(a)
    if not isinstance(rows, slice) or not isinstance(cols, slice):
        raise TypeError("slice_ takes python slice objects")
    shape = a.shape
    out = a.value[rows, cols].copy()

    def vjp(g):
        full = np.zeros(shape)
        full[rows, cols] = g
        return (full,)

    return _emit("slice", out, (a,), vjp)


def reshape(a, rows: int, cols: int) -> Tensor:
    """Row-major reshape."""
    a = as_tensor(a)
    if rows * cols != a.value.size:
        raise ShapeError(f"reshape: cannot view {a.shape} as {(rows, cols)}")
    shape = a.shape
    return _emit("reshape", a.value.reshape(rows, cols).copy(), (a,), lambda g: (g.reshape(shape),))


_OPS = {
    "matmul": matmul,
    "transpose": transpose,
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "neg": neg,
    "power": power,
    "row_softmax": row_softmax,
    "sigmoid": sigmoid,
    "relu": relu,
    "log": log,
    "exp": exp,
    "sqrt": sqrt,
    "sum": sum_,
    "trace": trace,
    "frobenius_norm": frobenius_norm,
    "concat_rows": lambda *xs: concat_rows(xs),
    "concat_cols": lambda *xs: concat_cols(xs),
    "slice": slice_,
    "maximum": maximum,
    "reshape": reshape,
    "log1p_sum_exp": log1p_sum_exp,
}


def record(op_kind: str, *inputs, **kwargs) -> Tensor:
    """Apply the named operation; equivalent to calling the function directly."""
    try:
        fn = _OPS[op_kind]
    except KeyError:
        raise ValueError(f"unknown op kind {op_kind!r}; known: {sorted(_OPS)}") from None
    return fn(*inputs, **kwargs)
