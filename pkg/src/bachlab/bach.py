"""Bach and ω-Bach tensors.

The Bach tensor is built from its defining formula in dimension four,

    B_ab = κ [1/(n-3) g^ki g^lj (∇_k ∇_l W)_aijb + 1/(n-2) g^ki g^lj S_kl W_aijb],

with orthonormal-frame sums realised as raw metric contractions and
κ = :data:`BACH_NORMALIZATION`.  With the Riemann convention of
:mod:`bachlab.curvature` this equals -2 times the textbook Bach tensor
∇^c∇^d W_acbd + ½ R^cd W_acbd; the factor matches the product-splitting
normalisation that the soliton systems and the flow are written against.  For
products of constant-curvature surfaces a closed-form splitting is available
(:func:`bach_split_product`) and serves as an independent cross-check.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .chart import Chart
from .curvature import (
    CovariantDerivative,
    DimensionError,
    check_node_budget,
    christoffel,
    divergence,
    ricci_scalar,
    weyl,
)
from .expr import ZERO, Expr, as_expr, differentiate, mul
from .tape import Tape
from .tensor import TensorField, esum, lower_index, tensor_product, trace_with_metric

__all__ = [
    "OmegaBachSpec",
    "CurvatureNotConstant",
    "bach_tensor",
    "bach_covariant_derivative",
    "omega_bach",
    "bach_split_product",
    "split_bach_field",
    "divergence_omega_bach",
    "DivergenceCheck",
    "lemma_residuals",
    "SPLIT_CONSTANCY_TOL",
    "BACH_NORMALIZATION",
]

#: Overall factor applied to the contracted Weyl expression.
BACH_NORMALIZATION = 2

#: Sampled standard deviation below which a factor curvature counts as constant.
SPLIT_CONSTANCY_TOL = 1e-9


class CurvatureNotConstant(ValueError):
    pass


def bach_tensor(chart: Chart) -> TensorField:
    """Full-formula Bach tensor (cached per chart)."""
    n = chart.dim
    if n != 4:
        raise DimensionError(f"Bach tensor is only defined here for n = 4 (got {n})")

    def compute():
        conn = christoffel(chart)
        W = weyl(chart)
        S, _ = ricci_scalar(chart)
        G = chart.inverse_metric().components
        D1 = CovariantDerivative.of(W, conn)
        D2 = CovariantDerivative(D1.__getitem__, D1.variance, conn)
        pairs = [(k, i, G[k, i]) for k in range(n) for i in range(n) if G[k, i] is not ZERO]
        c1 = Fraction(BACH_NORMALIZATION, n - 3)
        c2 = Fraction(BACH_NORMALIZATION, n - 2)

        def component(idx):
            a, b = idx
            terms = []
            for k, i, gki in pairs:
                for l, j, glj in pairs:
                    d2 = D2[k, l, a, i, j, b]
                    if d2 is not ZERO:
                        terms.append(mul(c1, gki, glj, d2))
                    s = S[k, l]
                    w = W[a, i, j, b]
                    if s is not ZERO and w is not ZERO:
                        terms.append(mul(c2, gki, glj, s, w))
            return esum(terms)

        B = TensorField.build(n, "ll", component)
        check_node_budget(B.flat(), f"Bach tensor of {chart.name}")
        return B

    return chart.cached("bach", compute)


def bach_covariant_derivative(chart: Chart) -> CovariantDerivative:
    """Lazy ∇B (needs fifth metric derivatives; cached per chart)."""
    return chart.cached("nabla_bach", lambda: CovariantDerivative.of(
        bach_tensor(chart), christoffel(chart)))


@dataclass(frozen=True, eq=False)
class OmegaBachSpec:
    """Parameter β and vector field P (contravariant components)."""

    beta: Expr
    P: tuple

    def __post_init__(self):
        object.__setattr__(self, "beta", as_expr(self.beta))
        object.__setattr__(self, "P", tuple(as_expr(p) for p in self.P))

    def vector(self) -> TensorField:
        return TensorField(np.array(self.P, dtype=object), "u")

    def omega(self, chart: Chart) -> TensorField:
        """ω(X) = g(X, P)."""
        if len(self.P) != chart.dim:
            raise DimensionError("P must have one component per coordinate")
        return lower_index(self.vector(), 0, chart.metric_field())

    def norm_squared(self, chart: Chart) -> Expr:
        g = chart.metric
        n = chart.dim
        return esum([mul(g[i][j], self.P[i], self.P[j]) for i in range(n) for j in range(n)
                     if g[i][j] is not ZERO])


def omega_bach(chart: Chart, spec: OmegaBachSpec, bach: TensorField | None = None) -> TensorField:
    """B_ω = B - β ω⊗ω."""
    B = bach_tensor(chart) if bach is None else bach
    if spec.beta is ZERO:
        return B
    w = spec.omega(chart)
    ww = tensor_product(w, w)
    return B - ww.scale(spec.beta)


# ---------------------------------------------------------------------------
# closed-form splitting on products of constant-curvature surfaces


def _constant_value(chart: Chart, r: Expr, params=None) -> float:
    pts = chart.grid(16, params)
    vals = Tape([r], chart.names())(chart.inputs(pts, chart._params_for_sampling(params)))[:, 0]
    if float(np.std(vals)) > SPLIT_CONSTANCY_TOL:
        raise CurvatureNotConstant(
            f"scalar curvature of {chart.name} is not constant (std {np.std(vals):.3g})")
    return float(np.mean(vals))


def split_blocks(r1: Expr, r2: Expr, g1: TensorField, g2: TensorField):
    """Bach blocks of a product with constant factor curvatures r1, r2:
    B|1 = -(r1² - r2²)/12 g1 and B|2 = -(r2² - r1²)/12 g2."""
    d = esum([mul(r1, r1), mul(-1, r2, r2)])
    return g1.scale(mul(Fraction(-1, 12), d)), g2.scale(mul(Fraction(1, 12), d))


def bach_split_product(a: Chart, b: Chart, params=None):
    """Bach blocks of ``a × b`` from the factor curvatures (must be constant)."""
    if a.dim != 2 or b.dim != 2:
        raise DimensionError("splitting needs two 2-dimensional factors")
    _, r1 = ricci_scalar(a)
    _, r2 = ricci_scalar(b)
    _constant_value(a, r1, params)
    _constant_value(b, r2, params)
    return split_blocks(r1, r2, a.metric_field(), b.metric_field())


def split_bach_field(chart: Chart, params=None) -> TensorField:
    """Full 4x4 Bach tensor of a product chart assembled from the splitting."""
    if len(chart.factors) != 2:
        raise DimensionError(f"{chart.name} is not a product chart")
    a, b = chart.factors
    B1, B2 = bach_split_product(a, b, params)
    na = a.dim

    def fill(idx):
        i, j = idx
        if i < na and j < na:
            return B1[i, j]
        if i >= na and j >= na:
            return B2[i - na, j - na]
        return ZERO

    return TensorField.build(chart.dim, "ll", fill)


# ---------------------------------------------------------------------------
# divergence and the pointwise lemma identities


@dataclass
class DivergenceCheck:
    direct: TensorField
    decomposed: TensorField
    max_discrepancy: float
    points: np.ndarray = field(repr=False)


def _divergence_vector(chart: Chart, P: Sequence[Expr]) -> Expr:
    """div P = ∇_i P^i (computed from the vector, not from ω)."""
    conn = christoffel(chart)
    D = CovariantDerivative(lambda idx: P[idx[0]], "u", conn)
    return esum([D[i, i] for i in range(chart.dim)])


def _div_bach(chart: Chart) -> TensorField:
    def compute():
        D = bach_covariant_derivative(chart)
        G = chart.inverse_metric().components
        n = chart.dim
        return TensorField.build(n, "l", lambda idx: esum([
            mul(G[i, j], D[i, j, idx[0]]) for i in range(n) for j in range(n)
            if G[i, j] is not ZERO]))

    return chart.cached("div_bach", compute)


def divergence_omega_bach(chart: Chart, spec: OmegaBachSpec, points=None,
                          params=None) -> DivergenceCheck:
    """div B_ω computed directly and via the decomposition
    div B - β[(div P) ω + (∇_P ω)]; returns both and their max discrepancy."""
    n = chart.dim
    direct, decomposed = _divergence_pair(chart, spec)
    if points is None:
        points = chart.grid(5, params)
    X = chart.inputs(points, params)
    vals = Tape(direct.flat() + decomposed.flat(), chart.names())(X)
    disc = float(np.max(np.abs(vals[:, :n] - vals[:, n:])))
    return DivergenceCheck(direct, decomposed, disc, np.asarray(points))


def lemma_residuals(chart: Chart, spec: OmegaBachSpec) -> dict:
    """Pointwise residual expressions for the trace identity and the three
    lemma identities (each should vanish identically).

    * ``trace``: g^ij (B_ω)_ij + β |P|²
    * ``L1``: g^ij (∇_i ω)_j - div P
    * ``L2[X]``: g^ij (∇_X B_ω)_ij + β ∂_X |P|², one per coordinate X
    * ``L3[X]``: (div B_ω)_X - [div B - β((div P) ω + ∇_P ω)]_X
    """
    conn = christoffel(chart)
    ginv = chart.inverse_metric()
    G = ginv.components
    n = chart.dim
    x = chart.coords
    Bw = omega_bach(chart, spec)
    p2 = spec.norm_squared(chart)
    out = {"trace": esum([trace_with_metric(Bw, ginv), mul(spec.beta, p2)])}
    w = spec.omega(chart)
    Dw = CovariantDerivative.of(w, conn)
    divP = _divergence_vector(chart, spec.P)
    out["L1"] = esum([esum([mul(G[i, j], Dw[i, j]) for i in range(n) for j in range(n)
                            if G[i, j] is not ZERO]), mul(-1, divP)])
    DB = bach_covariant_derivative(chart)
    ww = tensor_product(w, w).scale(spec.beta)
    Dww = CovariantDerivative.of(ww, conn)
    for m in range(n):
        tr = esum([mul(G[i, j], esum([DB[m, i, j], mul(-1, Dww[m, i, j])]))
                   for i in range(n) for j in range(n) if G[i, j] is not ZERO])
        out[f"L2[{x[m]}]"] = esum([tr, mul(spec.beta, differentiate(p2, x[m]))])
    direct, decomposed = _divergence_pair(chart, spec)
    for m in range(n):
        out[f"L3[{x[m]}]"] = esum([direct[m], mul(-1, decomposed[m])])
    return out


def _divergence_pair(chart, spec):
    conn = christoffel(chart)
    ginv = chart.inverse_metric()
    n = chart.dim
    divB = _div_bach(chart)
    w = spec.omega(chart)
    if spec.beta is ZERO:
        direct = divB
    else:
        ww = tensor_product(w, w).scale(spec.beta)
        direct = divB - divergence(ww, conn, ginv)
    Dw = CovariantDerivative.of(w, conn)
    divP = _divergence_vector(chart, spec.P)

    def fill(idx):
        x = idx[0]
        nabla_p_w = esum([mul(spec.P[i], Dw[i, x]) for i in range(n) if spec.P[i] is not ZERO])
        return esum([divB[x], mul(-1, spec.beta, esum([mul(divP, w[x]), nabla_p_w]))])

    return direct, TensorField.build(n, "l", fill)
