"""A small reverse-mode automatic-differentiation tape.

Each node holds a numpy value (0-d for scalars) and, for every input, the
index of that input plus a vector-Jacobian closure standing in for the local
partial. Nodes only reference earlier nodes, so a single reverse sweep over
the node list accumulates adjoints.

Conventions:
  * ``abs`` has subgradient 0 at 0; ``relu`` has derivative 0 at 0.
  * ``sqrt`` is guarded: at exactly 0 the value is 0 and the derivative 0.
  * ``relu`` and ``abs`` record which side of their kink each element fell on;
    ``Tape.branch_trace()`` exposes that record so finite-difference checks can
    detect perturbations that cross a kink.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tape:
    def __init__(self):
        self.values: list[np.ndarray] = []
        self.parents: list[tuple] = []
        self.ops: list[str] = []
        self._branches: list[tuple[str, np.ndarray]] = []

    def __len__(self):
        return len(self.values)

    def leaf(self, value) -> "Var":
        return self.record("leaf", np.array(value, dtype=float), ())

    def constant(self, value) -> "Var":
        return self.leaf(value)

    def record(self, op: str, value, parents: Sequence[tuple[int, Callable]]) -> "Var":
        for idx, _ in parents:
            if not 0 <= idx < len(self.values):
                raise ValueError(f"parent index {idx} is not on this tape")
        self.values.append(np.asarray(value, dtype=float))
        self.parents.append(tuple(parents))
        self.ops.append(op)
        return Var(self, len(self.values) - 1)

    def mark_branch(self, kind: str, mask) -> None:
        self._branches.append((kind, np.asarray(mask, dtype=bool).copy()))

    def branch_trace(self) -> tuple:
        return tuple((k, m.tobytes()) for k, m in self._branches)

    def backward(self, output: "Var", wrt: Sequence["Var"] | None = None):
        """Adjoints of ``output`` (summed if non-scalar) for each of ``wrt``."""
        if output.tape is not self:
            raise ValueError("output does not live on this tape")
        adj: list = [None] * (output.index + 1)
        adj[output.index] = np.ones_like(self.values[output.index])
        for i in range(output.index, -1, -1):
            g = adj[i]
            if g is None:
                continue
            for p, vjp in self.parents[i]:
                contrib = vjp(g)
                adj[p] = contrib if adj[p] is None else adj[p] + contrib
        if wrt is None:
            return adj
        out = []
        for v in wrt:
            g = adj[v.index] if v.index < len(adj) else None
            out.append(np.zeros_like(self.values[v.index]) if g is None else g)
        return out


def backward(tape: Tape, output: "Var", params: Sequence["Var"]):
    return tape.backward(output, params)


class Var:
    """A handle to one tape node."""

    __slots__ = ("tape", "index")
    __array_ufunc__ = None  # make ndarray <op> Var defer to Var

    def __init__(self, tape: Tape, index: int):
        self.tape = tape
        self.index = index

    @property
    def value(self) -> np.ndarray:
        return self.tape.values[self.index]

    @property
    def shape(self):
        return self.value.shape

    def __float__(self):
        return float(self.value)

    def __repr__(self):
        return f"Var({self.value!r}, node={self.index})"

    # arithmetic -----------------------------------------------------------
    def _binary(self, other, op, fwd, da, db):
        t = self.tape
        if isinstance(other, Var):
            if other.tape is not t:
                raise ValueError("operands live on different tapes")
            a, b = self.value, other.value
            out = fwd(a, b)
            return t.record(op, out, (
                (self.index, lambda g: _unbroadcast(da(g, a, b), a.shape)),
                (other.index, lambda g: _unbroadcast(db(g, a, b), b.shape)),
            ))
        a, b = self.value, np.asarray(other, dtype=float)
        out = fwd(a, b)
        return t.record(op, out, ((self.index, lambda g: _unbroadcast(da(g, a, b), a.shape)),))

    def _rbinary(self, other, op, fwd, db):
        a, b = np.asarray(other, dtype=float), self.value
        out = fwd(a, b)
        return self.tape.record(op, out, ((self.index, lambda g: _unbroadcast(db(g, a, b), b.shape)),))

    def __add__(self, other):
        return self._binary(other, "add", np.add, lambda g, a, b: g, lambda g, a, b: g)

    def __radd__(self, other):
        return self._rbinary(other, "add", np.add, lambda g, a, b: g)

    def __sub__(self, other):
        return self._binary(other, "sub", np.subtract, lambda g, a, b: g, lambda g, a, b: -g)

    def __rsub__(self, other):
        return self._rbinary(other, "sub", np.subtract, lambda g, a, b: -g)

    def __mul__(self, other):
        return self._binary(other, "mul", np.multiply, lambda g, a, b: g * b, lambda g, a, b: g * a)

    def __rmul__(self, other):
        return self._rbinary(other, "mul", np.multiply, lambda g, a, b: g * a)

    def __truediv__(self, other):
        bval = other.value if isinstance(other, Var) else np.asarray(other, dtype=float)
        if np.any(bval == 0):
            raise ZeroDivisionError("division by zero on tape")
        return self._binary(other, "div", np.divide, lambda g, a, b: g / b, lambda g, a, b: -g * a / (b * b))

    def __rtruediv__(self, other):
        if np.any(self.value == 0):
            raise ZeroDivisionError("division by zero on tape")
        return self._rbinary(other, "div", np.divide, lambda g, a, b: -g * a / (b * b))

    def __neg__(self):
        return self.tape.record("neg", -self.value, ((self.index, lambda g: -g),))

    def __pow__(self, k):
        if isinstance(k, Var):
            raise TypeError("only constant exponents are supported")
        a = self.value
        return self.tape.record("pow", a**k, ((self.index, lambda g: g * k * a ** (k - 1)),))

    def __matmul__(self, other):
        t = self.tape
        a = self.value
        if isinstance(other, Var):
            b = other.value
            return t.record("matmul", a @ b, (
                (self.index, lambda g: g @ b.T),
                (other.index, lambda g: a.T @ g),
            ))
        b = np.asarray(other, dtype=float)
        return t.record("matmul", a @ b, ((self.index, lambda g: g @ b.T),))

    def __rmatmul__(self, other):
        a = np.asarray(other, dtype=float)
        b = self.value
        return self.tape.record("matmul", a @ b, ((self.index, lambda g: a.T @ g),))

    @property
    def T(self):
        return self.tape.record("transpose", self.value.T, ((self.index, lambda g: g.T),))

    def __getitem__(self, key):
        a = self.value

        def vjp(g):
            out = np.zeros_like(a)
            np.add.at(out, key, g)
            return out

        return self.tape.record("getitem", a[key], ((self.index, vjp),))

    # unary primitives -----------------------------------------------------
    def exp(self):
        out = np.exp(self.value)
        return self.tape.record("exp", out, ((self.index, lambda g: g * out),))

    def log(self):
        a = self.value
        if np.any(a <= 0):
            raise ValueError("log of non-positive value on tape")
        return self.tape.record("log", np.log(a), ((self.index, lambda g: g / a),))

    def abs(self):
        a = self.value
        sign = np.sign(a)
        self.tape.mark_branch("abs", a > 0)
        return self.tape.record("abs", np.abs(a), ((self.index, lambda g: g * sign),))

    def relu(self):
        a = self.value
        mask = a > 0
        self.tape.mark_branch("relu", mask)
        return self.tape.record("relu", np.where(mask, a, 0.0), ((self.index, lambda g: g * mask),))

    def sqrt(self):
        a = self.value
        if np.any(a < 0):
            raise ValueError("sqrt of negative value on tape")
        out = np.sqrt(a)
        safe = np.where(out > 0, out, 1.0)
        return self.tape.record("sqrt", out, ((self.index, lambda g: np.where(out > 0, g * 0.5 / safe, 0.0)),))

    def sum(self, axis=None):
        a = self.value
        out = a.sum(axis=axis)

        def vjp(g):
            if axis is not None:
                g = np.expand_dims(g, axis)
            return np.broadcast_to(g, a.shape).copy()

        return self.tape.record("sum", out, ((self.index, vjp),))

    def mean(self, axis=None):
        n = self.value.size if axis is None else self.value.shape[axis]
        return self.sum(axis) * (1.0 / n)

    def __abs__(self):
        return self.abs()


# backend-neutral helpers: numpy arrays in, numpy out; Vars in, Vars out ------

def relu(x):
    return x.relu() if isinstance(x, Var) else np.maximum(x, 0.0)


def absolute(x):
    return x.abs() if isinstance(x, Var) else np.abs(x)


def sqrt(x):
    return x.sqrt() if isinstance(x, Var) else np.sqrt(x)


def linear(x, w, b):
    """Affine layer ``x @ w.T + b`` recorded as a single node.

    ``x`` is (n, in) or (in,), ``w`` is (out, in), ``b`` is (out,).
    """
    vars_ = [v for v in (x, w, b) if isinstance(v, Var)]
    if not vars_:
        return np.asarray(x) @ np.asarray(w).T + b
    tape = vars_[0].tape
    xv, wv, bv = (v.value if isinstance(v, Var) else np.asarray(v, dtype=float) for v in (x, w, b))
    out = xv @ wv.T + bv
    x2 = xv.reshape(-1, xv.shape[-1])
    parents = []
    if isinstance(x, Var):
        parents.append((x.index, lambda g: (g @ wv).reshape(xv.shape)))
    if isinstance(w, Var):
        parents.append((w.index, lambda g: g.reshape(-1, wv.shape[0]).T @ x2))
    if isinstance(b, Var):
        parents.append((b.index, lambda g: g.reshape(-1, bv.shape[0]).sum(axis=0)))
    return tape.record("linear", out, parents)


def stack_columns(cols):
    """Stack 1-D columns into a (n, k) matrix; any Var column makes the result a Var."""
    var = next((c for c in cols if isinstance(c, Var)), None)
    if var is None:
        return np.stack([np.asarray(c, dtype=float) for c in cols], axis=-1)
    tape = var.tape
    n = var.value.shape[0] if var.value.ndim else 1
    vals = [c.value if isinstance(c, Var) else np.broadcast_to(np.asarray(c, dtype=float), (n,)) for c in cols]
    vals = [np.broadcast_to(v, (n,)) for v in vals]
    out = np.stack(vals, axis=-1)
    parents = []
    for j, c in enumerate(cols):
        if isinstance(c, Var):
            shape = c.value.shape
            parents.append((c.index, lambda g, j=j, shape=shape: _unbroadcast(g[..., j], shape)))
    return tape.record("stack", out, parents)


def sample_std(x):
    """Sample (n - 1) standard deviation of a 1-D array or Var."""
    n = x.shape[0]
    if n < 2:
        raise ValueError("standard deviation needs at least 2 values")
    if not isinstance(x, Var):
        return float(np.std(x, ddof=1))
    centered = x - x.mean()
    var = (centered * centered).sum() * (1.0 / (n - 1))
    return var.sqrt()
