"""Dense symbolic tensor fields and their numeric values.

Variance is a string with one character per slot: ``"l"`` for a covariant
(lower) index, ``"u"`` for a contravariant (upper) index.  Components are
stored densely in numpy object arrays of shape ``(n,) * rank``.

Riemann-type (0,4) tensors use the convention ``R[a, b, c, d] =
g(R(e_c, e_d) e_b, e_a)``, so a round sphere has ``R[0, 1, 0, 1] > 0``.  The
Kulkarni-Nomizu product below is normalised to match:
``(g ⊙ g)[i, j, i, j] = 2 (g_ii g_jj - g_ij^2)``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .expr import ZERO, Expr, add, as_expr, mul, node_count
from .tape import Tape

__all__ = [
    "TensorField",
    "TensorValue",
    "VarianceError",
    "contract",
    "raise_index",
    "lower_index",
    "raise_lower",
    "kulkarni_nomizu",
    "trace_with_metric",
    "tensor_product",
    "esum",
    "evaluate_fields",
]


class VarianceError(ValueError):
    pass


def esum(terms) -> Expr:
    """Sum of expressions, skipping structural zeros."""
    return add(*[t for t in terms if t is not ZERO])


def _prod(*factors) -> Expr:
    for f in factors:
        if f is ZERO:
            return ZERO
    return mul(*factors)


def _object_array(shape, fill: Callable[[tuple], Expr]) -> np.ndarray:
    arr = np.empty(shape, dtype=object)
    for idx in itertools.product(*(range(s) for s in shape)):
        arr[idx] = fill(idx)
    return arr


@dataclass(frozen=True, eq=False)
class TensorField:
    """Tensor field with :class:`Expr` components over a chart."""

    components: np.ndarray
    variance: str

    def __post_init__(self):
        comps = self.components
        if not isinstance(comps, np.ndarray) or comps.dtype != object:
            comps = np.asarray(comps, dtype=object)
            object.__setattr__(self, "components", comps)
        if len(self.variance) != comps.ndim or set(self.variance) - {"l", "u"}:
            raise VarianceError(f"variance {self.variance!r} does not match rank {comps.ndim}")
        for idx in np.ndindex(comps.shape):
            if not isinstance(comps[idx], Expr):
                comps[idx] = as_expr(comps[idx])

    @classmethod
    def build(cls, n: int, variance: str, fill: Callable[[tuple], Expr]) -> "TensorField":
        return cls(_object_array((n,) * len(variance), fill), variance)

    @classmethod
    def zeros(cls, n: int, variance: str) -> "TensorField":
        return cls.build(n, variance, lambda idx: ZERO)

    @classmethod
    def scalar(cls, e) -> "TensorField":
        arr = np.empty((), dtype=object)
        arr[()] = as_expr(e)
        return cls(arr, "")

    @property
    def rank(self) -> int:
        return self.components.ndim

    @property
    def dim(self) -> int:
        return self.components.shape[0] if self.rank else 0

    def __getitem__(self, idx) -> Expr:
        return self.components[idx]

    def flat(self) -> list:
        return list(self.components.reshape(-1))

    def map(self, f: Callable[[Expr], Expr]) -> "TensorField":
        out = np.empty_like(self.components)
        for idx in np.ndindex(out.shape):
            out[idx] = f(self.components[idx])
        return TensorField(out, self.variance)

    def _combine(self, other: "TensorField", op) -> "TensorField":
        if other.variance != self.variance or other.components.shape != self.components.shape:
            raise VarianceError("tensor shapes or variances differ")
        out = np.empty_like(self.components)
        for idx in np.ndindex(out.shape):
            out[idx] = op(self.components[idx], other.components[idx])
        return TensorField(out, self.variance)

    def __add__(self, other: "TensorField") -> "TensorField":
        return self._combine(other, lambda a, b: add(a, b))

    def __sub__(self, other: "TensorField") -> "TensorField":
        return self._combine(other, lambda a, b: add(a, mul(-1, b)))

    def scale(self, c) -> "TensorField":
        c = as_expr(c)
        return self.map(lambda e: _prod(c, e))

    def node_count(self) -> int:
        return node_count(self.flat())

    def evaluate(self, names: Sequence[str], points) -> "TensorValue":
        """Evaluate at points (rows ordered as ``names``); values gain a leading
        point axis."""
        vals = evaluate_fields([self], names, points)[0]
        return TensorValue(vals, self.variance)


@dataclass(frozen=True, eq=False)
class TensorValue:
    """Numeric tensor values at one or more points.

    ``values`` has shape ``(m,) + (n,) * rank`` where ``m`` is the number of
    points.
    """

    values: np.ndarray
    variance: str

    @property
    def rank(self) -> int:
        return len(self.variance)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def contract(self, a: int, b: int) -> "TensorValue":
        _check_contractible(self.variance, a, b)
        vals = np.trace(self.values, axis1=a + 1, axis2=b + 1)
        return TensorValue(vals, _drop(self.variance, a, b))

    def is_symmetric(self, a: int, b: int, tol: float = 1e-12) -> bool:
        sw = np.swapaxes(self.values, a + 1, b + 1)
        return bool(np.all(np.abs(sw - self.values) <= tol))


def evaluate_fields(fields: Sequence[TensorField], names: Sequence[str], points) -> list:
    """Evaluate several fields with one shared tape."""
    exprs = []
    for f in fields:
        exprs.extend(f.flat())
    tape = Tape(exprs, names)
    flat = tape(points)
    m = flat.shape[0]
    out = []
    pos = 0
    for f in fields:
        size = int(np.prod(f.components.shape)) if f.rank else 1
        out.append(flat[:, pos:pos + size].reshape((m,) + f.components.shape))
        pos += size
    return out


def _check_contractible(variance: str, a: int, b: int):
    r = len(variance)
    if not (0 <= a < r and 0 <= b < r):
        raise IndexError(f"slot out of range for rank {r}")
    if a == b:
        raise VarianceError("contraction slots must be distinct")
    if {variance[a], variance[b]} != {"l", "u"}:
        raise VarianceError(
            f"cannot contract slots {a} ({variance[a]}) and {b} ({variance[b]}); raise or lower one first")


def _drop(variance: str, a: int, b: int) -> str:
    return "".join(v for i, v in enumerate(variance) if i not in (a, b))


def contract(t: TensorField, a: int, b: int) -> TensorField:
    """Contract a covariant slot with a contravariant slot."""
    _check_contractible(t.variance, a, b)
    n = t.dim
    rest = t.rank - 2
    keep = [i for i in range(t.rank) if i not in (a, b)]

    def fill(idx):
        terms = []
        for s in range(n):
            full = [0] * t.rank
            for slot, v in zip(keep, idx):
                full[slot] = v
            full[a] = full[b] = s
            terms.append(t.components[tuple(full)])
        return esum(terms)

    arr = _object_array((n,) * rest, fill) if rest else _scalar_array(fill(()))
    return TensorField(arr, _drop(t.variance, a, b))


def _scalar_array(e):
    arr = np.empty((), dtype=object)
    arr[()] = e
    return arr


def _apply_matrix(t: TensorField, slot: int, matrix: TensorField, new: str) -> TensorField:
    n = t.dim
    m = matrix.components

    def fill(idx):
        terms = []
        for s in range(n):
            c = m[idx[slot], s]
            if c is ZERO:
                continue
            src = list(idx)
            src[slot] = s
            terms.append(_prod(c, t.components[tuple(src)]))
        return esum(terms)

    var = t.variance[:slot] + new + t.variance[slot + 1:]
    return TensorField(_object_array(t.components.shape, fill), var)


def lower_index(t: TensorField, slot: int, metric: TensorField) -> TensorField:
    if t.variance[slot] != "u":
        raise VarianceError(f"slot {slot} is already covariant")
    return _apply_matrix(t, slot, metric, "l")


def raise_index(t: TensorField, slot: int, inverse_metric: TensorField) -> TensorField:
    if t.variance[slot] != "l":
        raise VarianceError(f"slot {slot} is already contravariant")
    return _apply_matrix(t, slot, inverse_metric, "u")


def raise_lower(t: TensorField, slot: int, metric: TensorField,
                inverse_metric: TensorField) -> TensorField:
    """Flip the variance of ``slot`` using the metric or its inverse."""
    if not 0 <= slot < t.rank:
        raise IndexError(f"slot {slot} out of range for rank {t.rank}")
    if t.variance[slot] == "l":
        return raise_index(t, slot, inverse_metric)
    return lower_index(t, slot, metric)


def kulkarni_nomizu(h: TensorField, k: TensorField) -> TensorField:
    """(h ⊙ k)_ijkl = h_ik k_jl + h_jl k_ik - h_il k_jk - h_jk k_il."""
    if h.variance != "ll" or k.variance != "ll":
        raise VarianceError("Kulkarni-Nomizu product needs two (0,2) tensors")
    H, K = h.components, k.components

    def fill(idx):
        i, j, a, b = idx
        return esum([
            _prod(H[i, a], K[j, b]),
            _prod(H[j, b], K[i, a]),
            _prod(-1, H[i, b], K[j, a]),
            _prod(-1, H[j, a], K[i, b]),
        ])

    return TensorField.build(h.dim, "llll", fill)


def trace_with_metric(t: TensorField, inverse_metric: TensorField) -> Expr:
    """g^ij t_ij."""
    if t.variance != "ll":
        raise VarianceError("trace_with_metric needs a (0,2) tensor")
    n = t.dim
    G = inverse_metric.components
    return esum(_prod(G[i, j], t.components[i, j]) for i in range(n) for j in range(n))


def tensor_product(a: TensorField, b: TensorField) -> TensorField:
    A, B = a.components, b.components
    ra = a.rank

    def fill(idx):
        return _prod(A[idx[:ra]], B[idx[ra:]])

    return TensorField(_object_array(A.shape + B.shape, fill), a.variance + b.variance)
