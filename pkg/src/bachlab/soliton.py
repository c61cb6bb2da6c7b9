"""Residuals of ω-Bach soliton equations on charts.

Two residual forms are supported:

* almost mode, ``½ 𝔏_V g + B_ω - λ g`` for a vector field V;
* gradient mode, ``Hess f + B_ω - λ g`` for a potential f.

For the three built-in product charts the Hessian system can also be
regenerated component by component in the form used for hand solution
(:func:`export_pde_system`), substituted with the closed-form potentials
(:func:`builtin_potential`) and audited (:func:`full_system_audit`).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .bach import OmegaBachSpec, bach_tensor, omega_bach, split_bach_field, split_blocks
from .chart import Chart, builtin
from .curvature import CovariantDerivative, christoffel, ricci_scalar
from .expr import ZERO, Expr, ExprError, as_expr, differentiate, mul, sym, to_text
from .fields import VectorFieldSpec, lie_derivative_metric
from .parse import parse
from .tape import Tape
from .tensor import TensorField, esum

__all__ = [
    "SolitonSpec",
    "ResidualReport",
    "PDEEquation",
    "PDESystem",
    "AuditReport",
    "UnboundParameterError",
    "soliton_residual",
    "hessian",
    "builtin_potential",
    "potential_params",
    "export_pde_system",
    "integrated_relation_check",
    "full_system_audit",
    "evaluate_with_params",
    "POTENTIALS",
    "AUDIT_ALIASES",
    "CLAIMED_SCALAR_CURVATURE",
    "default_omega",
]


class UnboundParameterError(ExprError, ValueError):
    def __init__(self, names):
        self.names = tuple(names)
        super().__init__(f"unbound parameters: {', '.join(self.names)}")


def evaluate_with_params(exprs: Sequence[Expr], coords: Sequence[str], points,
                         params: Mapping[str, float] | None = None) -> np.ndarray:
    """Evaluate expressions at coordinate points with parameters bound by name."""
    params = dict(params or {})
    free = set()
    for e in exprs:
        free |= e.free
    extra = sorted(free - set(coords))
    missing = [p for p in extra if p not in params]
    if missing:
        raise UnboundParameterError(missing)
    P = np.atleast_2d(np.asarray(points, dtype=float))
    cols = [np.full(len(P), float(params[p])) for p in extra]
    X = np.column_stack([P] + cols) if cols else P
    return Tape(list(exprs), tuple(coords) + tuple(extra))(X)


# ---------------------------------------------------------------------------
# specs and reports


def default_omega(n: int = 4) -> OmegaBachSpec:
    """β and constant P with symbolic components ``beta``, ``P1``..``Pn``."""
    return OmegaBachSpec(sym("beta"), tuple(sym(f"P{i + 1}") for i in range(n)))


@dataclass(frozen=True, eq=False)
class SolitonSpec:
    """Soliton data on a chart.

    Exactly one of ``potential`` (gradient mode) or ``vector`` (almost mode)
    is given.  ``lam`` may depend on the coordinates.  ``params`` binds every
    free symbol other than the coordinates (β, P components, λ, offsets).
    """

    chart: Chart
    potential: Expr | None = None
    vector: VectorFieldSpec | None = None
    omega: OmegaBachSpec | None = None
    lam: Expr = field(default_factory=lambda: sym("lambda"))
    params: Mapping[str, float] = field(default_factory=dict)
    bach: str = "full"

    def __post_init__(self):
        if (self.potential is None) == (self.vector is None):
            raise ValueError("give exactly one of potential or vector")
        if self.potential is not None:
            object.__setattr__(self, "potential", as_expr(self.potential))
        else:
            V = self.vector
            if isinstance(V, (list, tuple)):
                V = tuple(self.chart.parse(c) if isinstance(c, str) else c for c in V)
            object.__setattr__(self, "vector", VectorFieldSpec.coerce(V))
        if self.omega is None:
            object.__setattr__(self, "omega", default_omega(self.chart.dim))
        object.__setattr__(self, "lam", as_expr(self.lam))
        object.__setattr__(self, "params", dict(self.params))
        if self.bach not in ("full", "split"):
            raise ValueError(f"unknown Bach source {self.bach!r}")

    @property
    def mode(self) -> str:
        return "gradient" if self.potential is not None else "almost"

    def gradient_field(self) -> VectorFieldSpec:
        """V = ∇f (raised gradient of the potential)."""
        if self.potential is None:
            raise ValueError("no potential in almost mode")
        c = self.chart
        G = c.inverse_metric().components
        df = [differentiate(self.potential, x) for x in c.coords]
        n = c.dim
        return VectorFieldSpec("grad f", tuple(
            esum([mul(G[i, k], df[k]) for k in range(n) if G[i, k] is not ZERO])
            for i in range(n)))


@dataclass
class ResidualReport:
    """Residual of one equation (or tensor equation) over a point set."""

    label: str
    points: np.ndarray
    per_point: np.ndarray
    global_max: float
    components: dict = field(default_factory=dict, repr=False)
    component_max: dict = field(default_factory=dict)
    values: np.ndarray | None = field(default=None, repr=False)
    warnings: list = field(default_factory=list)

    def passed(self, tol: float) -> bool:
        return self.global_max <= tol

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "global_max": self.global_max,
            "component_max": dict(self.component_max),
            "per_point": [float(v) for v in self.per_point],
            "points": [[float(x) for x in p] for p in self.points],
            "warnings": list(self.warnings),
        }


def _report(label: str, labels: Sequence[str], exprs: Sequence[Expr], coords, points,
            params, warnings=()) -> ResidualReport:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    vals = evaluate_with_params(exprs, coords, points, params)
    absv = np.abs(vals)
    per_point = absv.max(axis=1) if absv.shape[1] else np.zeros(len(points))
    comp_max = {lab: float(absv[:, k].max()) for k, lab in enumerate(labels)}
    return ResidualReport(label, points, per_point, float(per_point.max()) if len(per_point) else 0.0,
                          dict(zip(labels, exprs)), comp_max, vals, list(warnings))


# ---------------------------------------------------------------------------
# tensor residuals


def hessian(f: Expr, chart: Chart) -> TensorField:
    """∇_i ∇_j f = ∂_i ∂_j f - Γ^k_ij ∂_k f."""
    df = [differentiate(f, x) for x in chart.coords]
    D = CovariantDerivative(lambda idx: df[idx[0]], "l", christoffel(chart))
    return TensorField.build(chart.dim, "ll", lambda idx: D[idx[0], idx[1]])


def _bach_source(spec: SolitonSpec) -> TensorField:
    if spec.bach == "split":
        return split_bach_field(spec.chart)
    return bach_tensor(spec.chart)


def residual_tensor(spec: SolitonSpec, form: str | None = None) -> TensorField:
    """The residual (0,2) field; ``form`` is "gradient" or "almost"."""
    c = spec.chart
    form = form or spec.mode
    Bw = omega_bach(c, spec.omega, _bach_source(spec))
    if form == "gradient":
        lead = hessian(spec.potential, c)
    elif form == "almost":
        V = spec.vector if spec.vector is not None else spec.gradient_field()
        lead = lie_derivative_metric(V, c).scale(Fraction(1, 2))
    else:
        raise ValueError(f"unknown form {form!r}")
    return lead + Bw - c.metric_field().scale(spec.lam)


def _component_labels(chart: Chart) -> list:
    x = chart.coords
    return [f"[{x[i]},{x[j]}]" for i in range(chart.dim) for j in range(i, chart.dim)]


def soliton_residual(spec: SolitonSpec, points=None, grid: int = 25,
                     form: str | None = None) -> ResidualReport:
    """Evaluate the soliton residual tensor over ``points`` (default grid)."""
    c = spec.chart
    T = residual_tensor(spec, form)
    n = c.dim
    exprs = [T[i, j] for i in range(n) for j in range(i, n)]
    if points is None:
        points = c.grid(grid, spec.params)
    label = f"{form or spec.mode} soliton residual on {c.name}"
    return _report(label, _component_labels(c), exprs, c.coords, points, spec.params)


# ---------------------------------------------------------------------------
# closed-form potentials

POTENTIALS = {
    "f_S2H2": ("S2H2", "beta*P1^2/2*(1 + u^2 + v^2)^2 - lambda*ln(y) - 1/2*beta*P3^2*y^2 + C"),
    "F_R2H2": ("R2H2", "1/2*((lambda - 1/3) + beta*P1^2)*s^2 + 1/2*((lambda - 1/3) + beta*P2^2)*t^2"
                       " + beta*P1*P2*s*t + c1*s + c3*t - (lambda + 1/3)*ln(y)"
                       " - 1/2*beta*P3^2*y^2 + c"),
    "G_R2S2": ("R2S2", "1/2*((lambda - 1/3) + beta*P1^2)*s^2 + 1/2*((lambda - 1/3) + beta*P1^2)*t^2"
                       " + beta*P1*P2*s*t + c1p*s + c2p*t + beta*P3^2/2*(1 + u^2 + v^2)^2 + cp"),
}

_POTENTIAL_PARAMS = {
    "f_S2H2": ("lambda", "beta", "P1", "P2", "P3", "P4", "C"),
    "F_R2H2": ("lambda", "beta", "P1", "P2", "P3", "P4", "c1", "c3", "c"),
    "G_R2S2": ("lambda", "beta", "P1", "P2", "P3", "P4", "c1p", "c2p", "cp"),
}

#: Sphere-part and coordinates used by the integrated relation for each potential.
_SPHERE_PART = {"f_S2H2": ("beta*P1^2/2*(1 + u^2 + v^2)^2", "P1", "P2"),
                "G_R2S2": ("beta*P3^2/2*(1 + u^2 + v^2)^2", "P3", "P4")}


def potential_params(name: str) -> tuple:
    """Parameter names appearing in a built-in potential (all default to 0)."""
    if name not in POTENTIALS:
        raise KeyError(f"unknown potential {name!r}; choose from {', '.join(POTENTIALS)}")
    return _POTENTIAL_PARAMS[name]


def builtin_potential(name: str) -> Expr:
    """Closed-form potential over the coordinates of its product chart."""
    chart_name, text = POTENTIALS[name] if name in POTENTIALS else (None, None)
    if text is None:
        raise KeyError(f"unknown potential {name!r}; choose from {', '.join(POTENTIALS)}")
    coords = builtin(chart_name).coords
    return parse(text, coords, potential_params(name))


# ---------------------------------------------------------------------------
# PDE export

#: Scalar curvature each built-in factor is taken to have in the hand systems.
CLAIMED_SCALAR_CURVATURE = {"R2": 0, "H2": -2, "S2_round": 2, "S2_paper": 2}


@dataclass(frozen=True, eq=False)
class PDEEquation:
    """One Hessian component equation

        ∂_i ∂_j f + Σ_k coeffs[k] ∂_k f = rhs

    on the coordinates of a single factor.
    """

    label: str
    slot: tuple
    second: tuple
    coeffs: dict
    rhs: Expr

    def lhs(self, f: Expr) -> Expr:
        a, b = self.second
        terms = [differentiate(differentiate(f, a), b)]
        for x, c in self.coeffs.items():
            if c is not ZERO:
                terms.append(mul(c, differentiate(f, x)))
        return esum(terms)

    def residual(self, f: Expr) -> Expr:
        return esum([self.lhs(f), mul(-1, self.rhs)])

    def to_text(self) -> str:
        a, b = self.second
        parts = [f"d2f/d{a}d{b}" if a != b else f"d2f/d{a}^2"]
        for x, c in self.coeffs.items():
            if c is not ZERO:
                parts.append(f"({to_text(c)})*df/d{x}")
        return " + ".join(parts) + " = " + to_text(self.rhs)

    def to_dict(self) -> dict:
        return {"label": self.label, "slot": list(self.slot), "second": list(self.second),
                "coeffs": {k: to_text(v) for k, v in self.coeffs.items() if v is not ZERO},
                "rhs": to_text(self.rhs), "text": self.to_text()}


@dataclass
class PDESystem:
    chart: Chart
    equations: list
    separable: bool
    omega_convention: str
    notes: list = field(default_factory=list)

    def __iter__(self):
        return iter(self.equations)

    def __getitem__(self, label: str) -> PDEEquation:
        for e in self.equations:
            if e.label == label:
                return e
        raise KeyError(label)

    def labels(self) -> list:
        return [e.label for e in self.equations]


def _factor_label(chart: Chart) -> str:
    return chart.name.split("_")[0]


def _claimed_r(factor: Chart) -> Expr:
    if factor.name in CLAIMED_SCALAR_CURVATURE:
        return as_expr(CLAIMED_SCALAR_CURVATURE[factor.name])
    return ricci_scalar(factor)[1]


def export_pde_system(chart: Chart, omega: OmegaBachSpec | None = None,
                      lam: Expr | None = None, omega_convention: str = "printed") -> PDESystem:
    """Regenerate Hess f = λ g - B + β P⊗P component by component.

    For product charts the potential is assumed separable (f = f₁ + f₂) and
    each factor contributes its own Hessian system with that factor's
    Christoffel symbols and the product-splitting Bach blocks.  Built-in
    factors use their canonical scalar curvatures (R2: 0, H2: -2, S2: 2).

    ``omega_convention="printed"`` writes the β term with the raw constant P
    components, β P_k P_l; ``"lowered"`` uses β ω_k ω_l with ω = g(·, P), which
    agrees exactly with :func:`soliton_residual`.
    """
    if omega_convention not in ("printed", "lowered"):
        raise ValueError(f"unknown convention {omega_convention!r}")
    n = chart.dim
    omega = omega or default_omega(n)
    lam = sym("lambda") if lam is None else as_expr(lam)
    P = omega.P
    w = omega.omega(chart).flat() if omega_convention == "lowered" else list(P)
    notes = []
    if len(chart.factors) == 2:
        a, b = chart.factors
        B1, B2 = split_blocks(_claimed_r(a), _claimed_r(b), a.metric_field(), b.metric_field())
        blocks = [(a, B1, 0), (b, B2, a.dim)]
        separable = True
        notes.append("potential assumed separable across the product factors")
    else:
        blocks = [(chart, bach_tensor(chart), 0)]
        separable = False
    eqs = []
    for fac, B, off in blocks:
        gam = christoffel(fac).gamma
        x = fac.coords
        g = fac.metric
        for i, j in itertools.combinations_with_replacement(range(fac.dim), 2):
            coeffs = {x[k]: mul(-1, gam[k, i, j]) for k in range(fac.dim)}
            rhs = esum([mul(lam, g[i][j]), mul(-1, B[i, j]),
                        mul(omega.beta, w[off + i], w[off + j])])
            label = f"{_factor_label(fac)}[{x[i]},{x[j]}]"
            eqs.append(PDEEquation(label, (off + i, off + j), (x[i], x[j]), coeffs, rhs))
    return PDESystem(chart, eqs, separable, omega_convention, notes)


# ---------------------------------------------------------------------------
# integrated relation on the sphere factor


def integrated_relation_check(f_s, params: Mapping[str, float] | None = None, points=None,
                              coords=("u", "v"), p_names=("P1", "P2"),
                              grid: int = 25) -> ResidualReport:
    """Differentiated form of the sphere-factor comparison relation

        ∫ (2u f_S du - 2v f_S dv)/(1+u²+v²)² = β P_a² u²/2 - β P_b² v²/2 + C₃,

    i.e. the two local residuals 2u f_S/A² - β P_a² u and
    -2v f_S/A² + β P_b² v with A = 1 + u² + v².
    """
    params = {name: 0.0 for name in ("beta",) + tuple(p_names)} | dict(params or {})
    u, v = coords
    su, sv = sym(u), sym(v)
    if isinstance(f_s, str):
        f_s = parse(f_s, coords, tuple(params) + ("beta",) + tuple(p_names))
    f_s = as_expr(f_s)
    A2 = as_expr(1 + su ** 2 + sv ** 2) ** -2
    beta, pa, pb = sym("beta"), sym(p_names[0]), sym(p_names[1])
    ru = esum([mul(2, su, f_s, A2), mul(-1, beta, pa, pa, su)])
    rv = esum([mul(-2, sv, f_s, A2), mul(beta, pb, pb, sv)])
    warnings = []
    try:
        if abs(float(params.get(p_names[0], 0)) ** 2 - float(params.get(p_names[1], 0)) ** 2) > 1e-12:
            warnings.append(f"{p_names[0]}^2 != {p_names[1]}^2: relation derived under equal squares")
    except (TypeError, ValueError):
        pass
    if points is None:
        points = builtin("S2_paper").grid(grid)
    return _report("integrated relation", [f"d/d{u}", f"d/d{v}"], [ru, rv], coords, points,
                   params, warnings)


# ---------------------------------------------------------------------------
# audit


@dataclass
class AuditReport:
    name: str
    chart: str
    params: dict
    equations: list
    integrated: ResidualReport | None
    system: PDESystem = field(repr=False)

    def __getitem__(self, label: str) -> ResidualReport:
        for r in self.equations:
            if r.label == label:
                return r
        raise KeyError(label)

    @property
    def global_max(self) -> float:
        return max(r.global_max for r in self.equations)

    def failing(self, tol: float) -> list:
        return [r.label for r in self.equations if r.global_max > tol]

    def to_dict(self) -> dict:
        out = {"potential": self.name, "chart": self.chart, "params": dict(self.params),
               "equations": [dict(r.to_dict(), equation=self.system[r.label].to_text())
                             for r in self.equations],
               "notes": list(self.system.notes)}
        if self.integrated is not None:
            out["integrated_relation"] = self.integrated.to_dict()
        return out


#: Product chart name -> its built-in potential.
AUDIT_ALIASES = {"S2H2": "f_S2H2", "R2H2": "F_R2H2", "R2S2": "G_R2S2"}


def _audit_chart(name: str) -> Chart:
    return builtin(POTENTIALS[name][0], s2="paper")


def full_system_audit(name: str, params: Mapping[str, float] | None = None, points=None,
                      grid: int = 25, omega_convention: str = "printed") -> AuditReport:
    """Substitute a built-in potential into every component equation of its
    product's hand system and report the residual of each.

    Sphere factors use the 4/(1+u²+v²) chart, matching the hand systems'
    Christoffel symbols.  Parameters not given default to 0.  ``name`` is a
    potential name or its product chart name.
    """
    name = AUDIT_ALIASES.get(name, name)
    if name not in POTENTIALS:
        raise KeyError(f"unknown potential {name!r}; choose from {', '.join(POTENTIALS)}")
    chart = _audit_chart(name)
    bound = {p: 0.0 for p in potential_params(name)}
    bound.update({k: float(v) for k, v in (params or {}).items()})
    system = export_pde_system(chart, omega_convention=omega_convention)
    f = parse(POTENTIALS[name][1], chart.coords, potential_params(name))
    if points is None:
        points = chart.grid(grid)
    reports = [_report(eq.label, [eq.label], [eq.residual(f)], chart.coords, points, bound)
               for eq in system]
    integrated = None
    if name in _SPHERE_PART:
        text, pa, pb = _SPHERE_PART[name]
        sphere = chart.factors[0] if chart.factors[0].name.startswith("S2") else chart.factors[1]
        f_s = parse(text, sphere.coords, potential_params(name))
        cols = [chart.coords.index(c) for c in sphere.coords]
        pts = np.atleast_2d(np.asarray(points, dtype=float))[:, cols]
        integrated = integrated_relation_check(f_s, bound, pts, sphere.coords, (pa, pb))
    return AuditReport(name, chart.name, bound, reports, integrated, system)
