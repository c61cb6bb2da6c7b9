"""Levi-Civita connection and curvature of a chart, all symbolic.

Conventions (used consistently everywhere in the package):

* ``Gamma[k, i, j]`` is Γ^k_ij.
* ``R^a_bcd = ∂_c Γ^a_db - ∂_d Γ^a_cb + Γ^a_ce Γ^e_db - Γ^a_de Γ^e_cb`` and
  ``R[a, b, c, d] = g_am R^m_bcd``, so the Gaussian curvature of a surface is
  ``R[0, 1, 0, 1] / det g`` (positive on the round sphere).
* Ricci ``S_bd = g^ac R_abcd``; scalar ``r = g^bd S_bd``.
* Covariant derivatives put the new covariant slot first:
  ``(∇T)[m, ...] = ∇_m T[...]``.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .chart import Chart
from .expr import ZERO, Expr, differentiate, mul, node_count
from .tensor import TensorField, VarianceError, esum, kulkarni_nomizu

__all__ = [
    "Connection",
    "CurvatureBundle",
    "CovariantDerivative",
    "DimensionError",
    "NodeBudgetWarning",
    "NODE_BUDGET",
    "christoffel",
    "riemann",
    "ricci_scalar",
    "weyl",
    "curvature",
    "covariant_derivative",
    "divergence",
    "gaussian_curvature",
    "check_node_budget",
]

#: Expressions above this many DAG nodes trigger a :class:`NodeBudgetWarning`.
NODE_BUDGET = 200_000


class DimensionError(ValueError):
    pass


class NodeBudgetWarning(UserWarning):
    pass


def check_node_budget(exprs, label: str, budget: int | None = None) -> int:
    budget = NODE_BUDGET if budget is None else budget
    count = node_count(exprs)
    if count > budget:
        warnings.warn(f"{label}: {count} expression nodes exceed the budget of {budget}",
                      NodeBudgetWarning, stacklevel=3)
    return count


@dataclass(frozen=True, eq=False)
class Connection:
    """Christoffel symbols of the second kind, Γ^k_ij = gamma[k, i, j]."""

    gamma: np.ndarray
    coords: tuple

    @property
    def dim(self) -> int:
        return len(self.coords)

    def __post_init__(self):
        n = self.dim
        # nonzero patterns used by covariant derivatives
        lower = {}
        upper = {}
        for m in range(n):
            for i in range(n):
                lower[m, i] = [(p, self.gamma[p, m, i]) for p in range(n)
                               if self.gamma[p, m, i] is not ZERO]
                upper[m, i] = [(p, self.gamma[i, m, p]) for p in range(n)
                               if self.gamma[i, m, p] is not ZERO]
        object.__setattr__(self, "_lower", lower)
        object.__setattr__(self, "_upper", upper)

    def as_field(self) -> TensorField:
        return TensorField(self.gamma.copy(), "ull")


def christoffel(chart: Chart) -> Connection:
    def compute():
        n = chart.dim
        g = chart.metric
        ginv = chart.inverse_metric().components
        x = chart.coords
        dg = [[[differentiate(g[i][j], x[k]) for k in range(n)] for j in range(n)] for i in range(n)]
        half = Fraction(1, 2)
        first = {}
        for l in range(n):
            for i in range(n):
                for j in range(i, n):
                    first[l, i, j] = mul(half, esum([dg[j][l][i], dg[i][l][j], mul(-1, dg[i][j][l])]))
        gamma = np.empty((n, n, n), dtype=object)
        for k in range(n):
            for i in range(n):
                for j in range(i, n):
                    e = esum([mul(ginv[k, l], first[l, i, j]) for l in range(n)
                              if ginv[k, l] is not ZERO and first[l, i, j] is not ZERO])
                    gamma[k, i, j] = gamma[k, j, i] = e
        return Connection(gamma, chart.coords)

    return chart.cached("christoffel", compute)


def riemann(chart: Chart, conn: Connection | None = None) -> TensorField:
    """Fully covariant Riemann tensor ``R[a, b, c, d] = g(R(∂_c, ∂_d)∂_b, ∂_a)``."""
    def compute():
        G = (conn or christoffel(chart)).gamma
        n = chart.dim
        x = chart.coords
        g = chart.metric
        up = np.empty((n, n, n, n), dtype=object)
        for a, b in itertools.product(range(n), repeat=2):
            for c in range(n):
                up[a, b, c, c] = ZERO
                for d in range(c + 1, n):
                    terms = [differentiate(G[a, d, b], x[c]), mul(-1, differentiate(G[a, c, b], x[d]))]
                    for e in range(n):
                        if G[a, c, e] is not ZERO and G[e, d, b] is not ZERO:
                            terms.append(mul(G[a, c, e], G[e, d, b]))
                        if G[a, d, e] is not ZERO and G[e, c, b] is not ZERO:
                            terms.append(mul(-1, G[a, d, e], G[e, c, b]))
                    v = esum(terms)
                    up[a, b, c, d] = v
                    up[a, b, d, c] = mul(-1, v)
        low = np.empty((n, n, n, n), dtype=object)
        for idx in itertools.product(range(n), repeat=4):
            a, b, c, d = idx
            low[idx] = esum([mul(g[a][m], up[m, b, c, d]) for m in range(n)
                             if g[a][m] is not ZERO and up[m, b, c, d] is not ZERO])
        return TensorField(low, "llll")

    return chart.cached("riemann", compute)


def ricci_scalar(chart: Chart, riem: TensorField | None = None):
    """(Ricci tensor, scalar curvature)."""
    def compute():
        R = (riem or riemann(chart)).components
        ginv = chart.inverse_metric().components
        n = chart.dim
        ric = TensorField.build(n, "ll", lambda idx: esum([
            mul(ginv[a, c], R[c, idx[0], a, idx[1]])
            for a in range(n) for c in range(n) if ginv[a, c] is not ZERO]))
        scal = esum([mul(ginv[b, d], ric[b, d]) for b in range(n) for d in range(n)
                     if ginv[b, d] is not ZERO])
        return ric, scal

    return chart.cached("ricci_scalar", compute)


def weyl(chart: Chart) -> TensorField:
    """W = R - S⊙g/(n-2) + r g⊙g/(2(n-1)(n-2)) with the standard ⊙."""
    n = chart.dim
    if n != 4:
        raise DimensionError(f"Weyl tensor is only computed for n = 4 (got {n})")

    def compute():
        R = riemann(chart)
        S, r = ricci_scalar(chart)
        g = chart.metric_field()
        sg = kulkarni_nomizu(S, g)
        gg = kulkarni_nomizu(g, g)
        c1 = Fraction(-1, n - 2)
        c2 = mul(Fraction(1, 2 * (n - 1) * (n - 2)), r)
        return TensorField.build(n, "llll", lambda idx: esum([
            R[idx], mul(c1, sg[idx]), mul(c2, gg[idx])]))

    return chart.cached("weyl", compute)


@dataclass(frozen=True)
class CurvatureBundle:
    riemann: TensorField
    ricci: TensorField
    scalar: Expr
    weyl: TensorField | None


def curvature(chart: Chart) -> CurvatureBundle:
    R = riemann(chart)
    S, r = ricci_scalar(chart)
    W = weyl(chart) if chart.dim == 4 else None
    return CurvatureBundle(R, S, r, W)


def gaussian_curvature(chart: Chart) -> Expr:
    """K = R_1212 / det g for a 2-dimensional chart."""
    if chart.dim != 2:
        raise DimensionError("Gaussian curvature needs a 2-dimensional chart")
    g = chart.metric
    det = esum([mul(g[0][0], g[1][1]), mul(-1, g[0][1], g[1][0])])
    return mul(riemann(chart)[0, 1, 0, 1], det ** -1)


class CovariantDerivative:
    """Lazily evaluated ∇T; components are computed and memoised on demand.

    ``source`` maps a full index tuple of T to its component.  Indexing the
    result with ``(m, i1, ..., ir)`` gives ∇_m T_{i1...ir}.
    """

    def __init__(self, source, variance: str, conn: Connection):
        self.source = source
        self.variance = "l" + variance
        self.src_variance = variance
        self.conn = conn
        self._memo = {}

    @classmethod
    def of(cls, t: TensorField, conn: Connection) -> "CovariantDerivative":
        comps = t.components
        return cls(lambda idx: comps[idx], t.variance, conn)

    def __getitem__(self, full) -> Expr:
        hit = self._memo.get(full)
        if hit is not None:
            return hit
        m, idx = full[0], full[1:]
        x = self.conn.coords[m]
        terms = [differentiate(self.source(idx), x)]
        lower, upper = self.conn._lower, self.conn._upper
        for s, v in enumerate(self.src_variance):
            i = idx[s]
            if v == "l":
                for p, gam in lower[m, i]:
                    c = self.source(idx[:s] + (p,) + idx[s + 1:])
                    if c is not ZERO:
                        terms.append(mul(-1, gam, c))
            else:
                for p, gam in upper[m, i]:
                    c = self.source(idx[:s] + (p,) + idx[s + 1:])
                    if c is not ZERO:
                        terms.append(mul(gam, c))
        out = esum(terms)
        self._memo[full] = out
        return out

    def materialize(self) -> TensorField:
        n = self.conn.dim
        return TensorField.build(n, self.variance, self.__getitem__)


def covariant_derivative(t: TensorField, conn: Connection) -> TensorField:
    """∇T with the derivative slot first."""
    return CovariantDerivative.of(t, conn).materialize()


def divergence(t: TensorField, conn: Connection, inverse_metric: TensorField) -> TensorField:
    """(div t)_k = g^ij (∇_i t)_jk for a (0,2) tensor."""
    if t.variance != "ll":
        raise VarianceError("divergence expects a (0,2) tensor")
    D = CovariantDerivative.of(t, conn)
    G = inverse_metric.components
    n = conn.dim
    return TensorField.build(n, "l", lambda idx: esum([
        mul(G[i, j], D[i, j, idx[0]]) for i in range(n) for j in range(n) if G[i, j] is not ZERO]))
