"""Compile expression DAGs to a flat instruction tape and evaluate it over
many points.

The kernel that runs the tape is the hot loop of every grid check.  It is
provided by the compiled extension :mod:`bachlab._tape_c` when available and
by the numpy implementation :mod:`bachlab._tape_py` otherwise.  Set
``BACHLAB_PURE=1`` to force the fallback.
"""
from __future__ import annotations

import os
from typing import Sequence

import numpy as np

from .expr import ADD, FN, MUL, NUM, SYM, DomainError, Expr, ExprError, as_expr
from . import _tape_py

OP_SET, OP_LOAD, OP_AXPY, OP_POWMUL, OP_FN = range(5)
FN_CODES = {"ln": 0, "exp": 1, "sin": 2, "cos": 3, "sqrt": 4}

_kernel = _tape_py
BACKEND = "python"
if os.environ.get("BACHLAB_PURE", "") in ("", "0"):
    try:
        from . import _tape_c as _kernel  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        pass

__all__ = ["Tape", "compile_exprs", "evaluate_exprs", "BACKEND", "kernel"]


def kernel(name: str | None = None):
    """Return a kernel module by name ('cython' or 'python'); default active."""
    if name is None:
        return _kernel
    if name == "python":
        return _tape_py
    if name == "cython":
        from . import _tape_c

        return _tape_c
    raise ValueError(f"unknown backend {name!r}")


class Tape:
    """Linear program computing a list of expressions from named inputs."""

    def __init__(self, roots: Sequence[Expr], names: Sequence[str]):
        self.names = tuple(names)
        index = {nm: i for i, nm in enumerate(self.names)}
        roots = [as_expr(r) for r in roots]
        order = _toposort(roots)
        reg = {id(n): i for i, n in enumerate(order)}
        ops, dst, arg, iarg, val = [], [], [], [], []
        owner = []

        def emit(o, d, a=0, ia=0, v=0.0, node=None):
            ops.append(o)
            dst.append(d)
            arg.append(a)
            iarg.append(ia)
            val.append(v)
            owner.append(node)

        for n in order:
            r = reg[id(n)]
            k = n.kind
            if k == NUM:
                emit(OP_SET, r, v=float(n.a), node=n)
            elif k == SYM:
                if n.a not in index:
                    raise ExprError(f"unbound symbol {n.a!r}")
                emit(OP_LOAD, r, a=index[n.a], node=n)
            elif k == ADD:
                emit(OP_SET, r, v=float(n.a), node=n)
                for t, c in n.b:
                    emit(OP_AXPY, r, a=reg[id(t)], v=float(c), node=n)
            elif k == MUL:
                emit(OP_SET, r, v=float(n.a), node=n)
                for b, p in n.b:
                    emit(OP_POWMUL, r, a=reg[id(b)], ia=p, node=b)
            else:
                emit(OP_FN, r, a=reg[id(n.b)], ia=FN_CODES[n.a], node=n.b)
        self.op = np.asarray(ops, dtype=np.int32)
        self.dst = np.asarray(dst, dtype=np.int32)
        self.arg = np.asarray(arg, dtype=np.int32)
        self.iarg = np.asarray(iarg, dtype=np.int32)
        self.val = np.asarray(val, dtype=np.float64)
        self.outputs = np.asarray([reg[id(r)] for r in roots], dtype=np.int32)
        self.nregs = len(order)
        self._owner = owner

    def __len__(self):
        return len(self.op)

    def __call__(self, points, backend: str | None = None) -> np.ndarray:
        """Evaluate at ``points`` (shape (m, len(names))); returns (m, nroots)."""
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(points, dtype=np.float64)))
        if X.shape[1] != len(self.names):
            raise ValueError(f"expected {len(self.names)} input columns, got {X.shape[1]}")
        out = np.empty((X.shape[0], len(self.outputs)), dtype=np.float64)
        k = kernel(backend)
        p, instr = k.run(self.op, self.dst, self.arg, self.iarg, self.val,
                         self.outputs, X, out, self.nregs)
        if p >= 0:
            raise self._domain_error(int(instr), X[p])
        return out

    def _domain_error(self, instr, row):
        node = self._owner[instr]
        o = int(self.op[instr])
        if o == OP_FN:
            code = int(self.iarg[instr])
            what = "ln of non-positive value" if code == 0 else "sqrt of negative value"
        else:
            what = "division by zero"
        point = dict(zip(self.names, (float(x) for x in row)))
        return DomainError(what, node, point)


def _toposort(roots):
    order = []
    seen = set()
    stack = [(r, False) for r in reversed(roots)]
    while stack:
        n, ready = stack.pop()
        if ready:
            order.append(n)
            continue
        if id(n) in seen:
            continue
        seen.add(id(n))
        stack.append((n, True))
        k = n.kind
        if k == ADD or k == MUL:
            stack.extend((c, False) for c, _ in reversed(n.b) if id(c) not in seen)
        elif k == FN:
            if id(n.b) not in seen:
                stack.append((n.b, False))
    return order


def compile_exprs(exprs: Sequence[Expr], names: Sequence[str]) -> Tape:
    return Tape(exprs, names)


def evaluate_exprs(exprs: Sequence[Expr], names: Sequence[str], points,
                   backend: str | None = None) -> np.ndarray:
    """One-shot compile and evaluate; returns array of shape (m, len(exprs))."""
    return Tape(exprs, names)(points, backend=backend)
