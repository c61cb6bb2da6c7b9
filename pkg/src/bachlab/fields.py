"""Vector fields, Lie derivatives and the symmetry-class taxonomy.

Classification is numeric: every defining identity is turned into a residual
tensor field, evaluated on a sample grid and compared with a tolerance.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .chart import Chart
from .curvature import CovariantDerivative, christoffel
from .expr import ZERO, Expr, as_expr, differentiate, mul
from .tensor import TensorField, esum, evaluate_fields

__all__ = [
    "VectorFieldSpec",
    "ClassificationReport",
    "lie_derivative_metric",
    "lie_derivative_connection",
    "tr_lie_connection",
    "divergence_vector",
    "classify",
    "harmonic_form_check",
    "CLASSES",
    "DEFAULT_TOL",
]

DEFAULT_TOL = 1e-8
CLASSES = ("killing", "conformal", "affine", "affine_conformal", "projective",
           "infinitesimal_harmonic")


@dataclass(frozen=True, eq=False)
class VectorFieldSpec:
    """Named vector field given by contravariant components."""

    name: str
    components: tuple

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(as_expr(c) for c in self.components))

    @classmethod
    def coerce(cls, V, name: str = "V") -> "VectorFieldSpec":
        if isinstance(V, VectorFieldSpec):
            return V
        if isinstance(V, TensorField):
            return cls(name, tuple(V.flat()))
        return cls(name, tuple(V))

    def check(self, chart: Chart):
        if len(self.components) != chart.dim:
            raise ValueError(f"{self.name} has {len(self.components)} components, chart has {chart.dim}")
        allowed = set(chart.names())
        for c in self.components:
            extra = c.free - allowed
            if extra:
                raise ValueError(f"{self.name} uses undeclared symbols {sorted(extra)}")

    def as_field(self) -> TensorField:
        return TensorField(np.array(self.components, dtype=object), "u")


def _vec(V, chart) -> VectorFieldSpec:
    if isinstance(V, (list, tuple)):
        V = tuple(chart.parse(c) if isinstance(c, str) else c for c in V)
    V = VectorFieldSpec.coerce(V)
    V.check(chart)
    return V


def divergence_vector(V, chart: Chart) -> Expr:
    """div V = ∂_i V^i + Γ^i_ik V^k."""
    V = _vec(V, chart)
    D = CovariantDerivative(lambda idx: V.components[idx[0]], "u", christoffel(chart))
    return esum([D[i, i] for i in range(chart.dim)])


def lie_derivative_metric(V, chart: Chart, form: str = "covariant") -> TensorField:
    """(𝔏_V g)_ij.

    ``form="covariant"`` uses ∇_i V_j + ∇_j V_i; ``form="local"`` uses the
    partial-derivative expression
    (∂_i V^k) g_kj + (∂_j V^k) g_ik + V^k (Γ^l_ik g_lj + Γ^l_jk g_il).
    """
    V = _vec(V, chart)
    n = chart.dim
    g = chart.metric
    x = chart.coords
    comps = V.components
    if form == "covariant":
        low = [esum([mul(g[i][k], comps[k]) for k in range(n) if g[i][k] is not ZERO])
               for i in range(n)]
        D = CovariantDerivative(lambda idx: low[idx[0]], "l", christoffel(chart))
        return TensorField.build(n, "ll", lambda idx: esum([D[idx[0], idx[1]], D[idx[1], idx[0]]]))
    if form == "local":
        G = christoffel(chart).gamma

        def fill(idx):
            i, j = idx
            terms = []
            for k in range(n):
                terms.append(mul(differentiate(comps[k], x[i]), g[k][j]))
                terms.append(mul(differentiate(comps[k], x[j]), g[i][k]))
                if comps[k] is ZERO:
                    continue
                for l in range(n):
                    terms.append(mul(comps[k], G[l, i, k], g[l][j]))
                    terms.append(mul(comps[k], G[l, j, k], g[i][l]))
            return esum(terms)

        return TensorField.build(n, "ll", fill)
    raise ValueError(f"unknown form {form!r}")


def lie_derivative_connection(V, chart: Chart) -> TensorField:
    """(𝔏_V ∇)^l_ij with the contravariant slot first, from the commutation
    formula 2 g((𝔏_V∇)(X,Y), Z) = (∇_X h)(Y,Z) + (∇_Y h)(X,Z) - (∇_Z h)(X,Y),
    h = 𝔏_V g."""
    n = chart.dim
    h = lie_derivative_metric(V, chart)
    D = CovariantDerivative.of(h, christoffel(chart))
    G = chart.inverse_metric().components
    half = Fraction(1, 2)
    lowered = {}
    for i in range(n):
        for j in range(i, n):
            for k in range(n):
                lowered[i, j, k] = lowered[j, i, k] = mul(
                    half, esum([D[i, j, k], D[j, i, k], mul(-1, D[k, i, j])]))

    return TensorField.build(n, "ull", lambda idx: esum([
        mul(G[idx[0], k], lowered[idx[1], idx[2], k]) for k in range(n)
        if G[idx[0], k] is not ZERO]))


def tr_lie_connection(V, chart: Chart, L: TensorField | None = None) -> TensorField:
    """tr(𝔏_V∇) as a 1-form: Z ↦ Σ_i g((𝔏_V∇)(e_i, e_i), Z) = g^ij g_zl (𝔏_V∇)^l_ij."""
    n = chart.dim
    L = lie_derivative_connection(V, chart) if L is None else L
    g = chart.metric
    G = chart.inverse_metric().components
    return TensorField.build(n, "l", lambda idx: esum([
        mul(G[i, j], g[idx[0]][l], L[l, i, j])
        for i in range(n) for j in range(n) for l in range(n)
        if G[i, j] is not ZERO and g[idx[0]][l] is not ZERO and L[l, i, j] is not ZERO]))


def _pattern(chart: Chart, df: Sequence[Expr], metric_term: bool) -> TensorField:
    """(Xf)Y + (Yf)X [- g(X,Y)∇f] as a (1,2) field."""
    n = chart.dim
    g = chart.metric
    G = chart.inverse_metric().components
    grad = [esum([mul(G[l, k], df[k]) for k in range(n) if G[l, k] is not ZERO]) for l in range(n)]

    def fill(idx):
        l, i, j = idx
        terms = []
        if l == j:
            terms.append(df[i])
        if l == i:
            terms.append(df[j])
        if metric_term and g[i][j] is not ZERO:
            terms.append(mul(-1, g[i][j], grad[l]))
        return esum(terms)

    return TensorField.build(n, "ull", fill)


@dataclass
class ClassificationReport:
    """Per-class residual max-norms over the sample grid and their verdicts."""

    field: str
    chart: str
    tol: float
    residuals: dict
    verdicts: dict
    conformal_factor: dict
    affine_conformal_gradient: list
    projective_factor: dict
    points: int
    extras: dict = field(default_factory=dict)

    def classes(self) -> list:
        return [c for c in CLASSES if self.verdicts[c]]

    def to_dict(self) -> dict:
        return {
            "field": self.field,
            "chart": self.chart,
            "tol": self.tol,
            "points": self.points,
            "residuals": dict(self.residuals),
            "verdicts": dict(self.verdicts),
            "conformal_factor": dict(self.conformal_factor),
            "affine_conformal_gradient": list(self.affine_conformal_gradient),
            "projective_factor": dict(self.projective_factor),
        }


def _summary(vals: np.ndarray) -> dict:
    return {"mean": float(np.mean(vals)), "min": float(np.min(vals)), "max": float(np.max(vals))}


def classify(V, chart: Chart, tol: float = DEFAULT_TOL, points=None,
             params: Mapping[str, float] | None = None) -> ClassificationReport:
    """Residual-based membership in each symmetry class.

    The conformal factor is fitted as f = tr_g(𝔏_V g)/n, the affine-conformal
    gradient as ∂_i f = (𝔏_V∇)^k_ik / n and the projective factor is
    φ = div V/(n+1); each residual is measured against its fitted factor.
    """
    V = _vec(V, chart)
    n = chart.dim
    g = chart.metric_field()
    x = chart.coords
    h = lie_derivative_metric(V, chart)
    ginv = chart.inverse_metric()
    G = ginv.components
    f_conf = mul(Fraction(1, n), esum([mul(G[i, j], h[i, j]) for i in range(n) for j in range(n)
                                       if G[i, j] is not ZERO]))
    conf_res = h - g.scale(f_conf)
    L = lie_derivative_connection(V, chart)
    df = [mul(Fraction(1, n), esum([L[k, i, k] for k in range(n)])) for i in range(n)]
    ac_res = L - _pattern(chart, df, True)
    phi = mul(Fraction(1, n + 1), divergence_vector(V, chart))
    dphi = [differentiate(phi, xi) for xi in x]
    pr_res = L - _pattern(chart, dphi, False)
    tr = tr_lie_connection(V, chart, L)

    if points is None:
        points = chart.grid(25, params)
    X = chart.inputs(points, params)
    fields = [h, conf_res, L, ac_res, pr_res, tr, TensorField.scalar(f_conf),
              TensorField(np.array(df, dtype=object), "l"), TensorField.scalar(phi)]
    vals = evaluate_fields(fields, chart.names(), X)
    norm = [float(np.max(np.abs(v))) if v.size else 0.0 for v in vals[:6]]
    residuals = dict(zip(CLASSES, norm))
    verdicts = {k: bool(v <= tol) for k, v in residuals.items()}
    return ClassificationReport(
        field=V.name, chart=chart.name, tol=tol, residuals=residuals, verdicts=verdicts,
        conformal_factor=_summary(vals[6]),
        affine_conformal_gradient=[float(np.mean(vals[7][:, i])) for i in range(n)],
        projective_factor=_summary(vals[8]),
        points=len(X),
    )


def harmonic_form_check(omega, chart: Chart, points=None,
                        params: Mapping[str, float] | None = None) -> tuple:
    """(max |dω|, max |δω|) over the grid, with dω_ij = ∂_i ω_j - ∂_j ω_i and
    δω = -g^ij (∇_i ω)_j."""
    n = chart.dim
    if isinstance(omega, TensorField):
        w = omega.flat()
    else:
        w = [as_expr(c) for c in omega]
    if len(w) != n:
        raise ValueError("1-form must have one component per coordinate")
    x = chart.coords
    d = TensorField.build(n, "ll", lambda idx: esum([differentiate(w[idx[1]], x[idx[0]]),
                                                      mul(-1, differentiate(w[idx[0]], x[idx[1]]))]))
    D = CovariantDerivative(lambda idx: w[idx[0]], "l", christoffel(chart))
    G = chart.inverse_metric().components
    delta = mul(-1, esum([mul(G[i, j], D[i, j]) for i in range(n) for j in range(n)
                          if G[i, j] is not ZERO]))
    if points is None:
        points = chart.grid(25, params)
    vd, vdelta = evaluate_fields([d, TensorField.scalar(delta)], chart.names(),
                                 chart.inputs(points, params))
    return float(np.max(np.abs(vd))), float(np.max(np.abs(vdelta)))
