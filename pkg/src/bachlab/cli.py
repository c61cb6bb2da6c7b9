"""``bachlab`` command line.

Exit codes: 0 success, 1 runtime error, 2 soliton residual above tolerance
(``verify-soliton`` only), 64 usage error, 65 manifest error.
"""
from __future__ import annotations

import argparse
import sys
import time
import warnings as _warnings

import numpy as np

from . import __version__
from .bach import OmegaBachSpec, bach_tensor, lemma_residuals, omega_bach
from .chart import BUILTIN_NAMES, Chart, ChartError, builtin
from .curvature import (DimensionError, NodeBudgetWarning, christoffel, gaussian_curvature,
                        ricci_scalar, weyl)
from .expr import ZERO, ExprError, node_count, sym, to_text
from .fields import VectorFieldSpec, classify
from .flow import FAMILIES, FlowError, FlowState, integrate
from .manifest import Manifest, ManifestError, load_manifest
from .parse import parse
from .report import make_report, to_json, to_text as report_text
from .soliton import (AUDIT_ALIASES, POTENTIALS, SolitonSpec, UnboundParameterError,
                      builtin_potential, evaluate_with_params, export_pde_system,
                      full_system_audit, potential_params, soliton_residual)
from .tensor import TensorField, evaluate_fields

EXIT_OK, EXIT_ERROR, EXIT_RESIDUAL, EXIT_USAGE, EXIT_MANIFEST = 0, 1, 2, 64, 65
DEFAULT_TOL = 1e-7
#: Symbolic expressions longer than this many nodes are not echoed as text.
TEXT_NODE_LIMIT = 400


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _param(text: str):
    name, sep, value = text.partition("=")
    if not sep or not name.strip():
        raise argparse.ArgumentTypeError(f"expected name=value, got {text!r}")
    try:
        return name.strip(), float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"parameter value must be a number: {text!r}") from None


def _point(text: str):
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--chart", help=f"built-in chart: {', '.join(BUILTIN_NAMES)}")
    src.add_argument("--manifest", metavar="PATH", help="chart manifest file")
    common.add_argument("--s2", choices=("round", "paper"), default="round",
                        help="sphere metric used inside built-in products")
    common.add_argument("--param", type=_param, action="append", default=[], metavar="NAME=VALUE")
    common.add_argument("--grid", type=int, default=25, metavar="N", help="number of sample points")
    common.add_argument("--seed", type=int, default=None,
                        help="use seeded random interior points instead of the grid")
    common.add_argument("--at", type=_point, action="append", default=[], metavar="X1,X2,...",
                        help="explicit evaluation point (repeatable)")
    common.add_argument("--tol", type=float, default=DEFAULT_TOL)
    fmt = common.add_mutually_exclusive_group()
    fmt.add_argument("--json", dest="fmt", action="store_const", const="json")
    fmt.add_argument("--text", dest="fmt", action="store_const", const="text")
    common.add_argument("--timing", action="store_true", help="include wall time in the report")
    common.set_defaults(fmt="json")

    p = _Parser(prog="bachlab", description="Curvature, Bach tensors and soliton checks on charts.")
    p.add_argument("--version", action="version", version=f"bachlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("curvature", parents=[common], help="Christoffel symbols and curvature")
    b = sub.add_parser("bach", parents=[common], help="Bach (and ω-Bach) tensor values")
    b.add_argument("--omega", action="store_true",
                   help="also report B_ω using parameters beta and P1..Pn")
    v = sub.add_parser("verify-soliton", parents=[common], help="assert a soliton residual")
    g = v.add_mutually_exclusive_group(required=True)
    g.add_argument("--potential", help=f"built-in ({', '.join(POTENTIALS)}) or manifest potential")
    g.add_argument("--vector", help="manifest vector field (almost mode)")
    v.add_argument("--lambda-expr", dest="lambda_expr", default=None,
                   help="λ as an expression (default: parameter lambda)")
    v.add_argument("--bach", choices=("full", "split"), default="full")
    a = sub.add_parser("audit", parents=[common], help="residuals of every component equation")
    a.add_argument("--potential", help=f"one of {', '.join(POTENTIALS)} (or use --chart)")
    a.add_argument("--convention", choices=("printed", "lowered"), default="printed")
    c = sub.add_parser("classify-field", parents=[common], help="symmetry class of a vector field")
    g = c.add_mutually_exclusive_group(required=True)
    g.add_argument("--field", help="manifest vector field name")
    g.add_argument("--components", help="comma-separated component expressions")
    lc = sub.add_parser("lemma-check", parents=[common], help="trace identity and lemma residuals")
    lc.add_argument("--random", type=int, default=5, metavar="K",
                    help="number of random (beta, P) pairs (ignored when beta is given)")
    f = sub.add_parser("flow", parents=[common], help="integrate the reduced Bach flow")
    f.add_argument("--family", choices=tuple(FAMILIES), required=True)
    f.add_argument("--init", type=_point, required=True, metavar="P,Q", help="initial scale factors")
    f.add_argument("--t-end", type=float, default=1.0)
    f.add_argument("--dt", type=float, default=1e-3)
    f.add_argument("--csv", metavar="PATH", help="write the trajectory as CSV ('-' for stdout)")
    e = sub.add_parser("export-pde", parents=[common], help="component PDE system for a potential")
    e.add_argument("--convention", choices=("printed", "lowered"), default="printed")
    return p


# ---------------------------------------------------------------------------
# helpers


class _Context:
    def __init__(self, args):
        self.args = args
        self.stdout = sys.stdout
        self.manifest: Manifest | None = None
        self.params = {}
        self.warnings = []
        if args.manifest:
            self.manifest = load_manifest(args.manifest)
            self.params.update(self.manifest.params)
        self.params.update(dict(args.param))
        self._chart = None

    def chart(self, required=True) -> Chart | None:
        if self._chart is None:
            if self.manifest is not None:
                self._chart = self.manifest.chart
            elif self.args.chart:
                try:
                    self._chart = builtin(self.args.chart, s2=self.args.s2)
                except ChartError as exc:
                    raise UsageError(str(exc)) from None
            elif required:
                raise UsageError("one of --chart or --manifest is required")
        return self._chart

    def chart_info(self):
        c = self._chart
        if c is None:
            return None
        return {"name": c.name, "coords": list(c.coords), "convention": c.convention,
                "params": list(c.params), "source": self.manifest.source if self.manifest else "builtin"}

    def points(self, chart: Chart, params=None) -> np.ndarray:
        params = self.params if params is None else params
        if self.args.at:
            pts = np.array(self.args.at, dtype=float)
            if pts.ndim != 2 or pts.shape[1] != chart.dim:
                raise UsageError(f"--at points need {chart.dim} coordinates")
            return pts
        if self.args.grid < 1:
            raise UsageError("--grid must be positive")
        if self.args.seed is not None:
            return chart.random_points(self.args.grid, self.args.seed, self._chart_params(chart, params))
        return chart.grid(self.args.grid, self._chart_params(chart, params))

    @staticmethod
    def _chart_params(chart, params):
        return {k: v for k, v in params.items() if k in chart.params}

    def inputs(self, chart: Chart, points):
        missing = [p for p in chart.params if p not in self.params]
        if missing:
            raise UnboundParameterError(missing)
        return chart.inputs(points, self._chart_params(chart, self.params))


def _values(arr):
    return np.asarray(arr).tolist()


def _maybe_text(e):
    return to_text(e) if node_count(e) <= TEXT_NODE_LIMIT else None


# ---------------------------------------------------------------------------
# subcommands


def cmd_curvature(ctx: _Context):
    c = ctx.chart()
    pts = ctx.points(c)
    X = ctx.inputs(c, pts)
    conn = christoffel(c)
    S, r = ricci_scalar(c)
    n = c.dim
    names = c.names()
    G = conn.gamma
    chris = {}
    for k in range(n):
        for i in range(n):
            for j in range(i, n):
                if G[k, i, j] is not ZERO:
                    chris[f"{k + 1}{i + 1}{j + 1}"] = to_text(G[k, i, j])
    fields = [TensorField.scalar(r), S]
    W = weyl(c) if n == 4 else None
    if W is not None:
        fields.append(W)
    vals = evaluate_fields(fields, names, X)
    result = {
        "dim": n,
        "points": _values(pts),
        "christoffel": chris,
        "scalar_curvature": {"expr": _maybe_text(r), "values": _values(vals[0])},
        "ricci": _values(vals[1]),
    }
    if n == 2:
        K = gaussian_curvature(c)
        result["gaussian_curvature"] = _values(evaluate_fields([TensorField.scalar(K)], names, X)[0])
    if W is not None:
        result["weyl_max_abs"] = float(np.max(np.abs(vals[2])))
    return result, EXIT_OK


def _omega_from_params(ctx, c) -> OmegaBachSpec:
    n = c.dim
    beta = ctx.params.get("beta", 0.0)
    P = tuple(ctx.params.get(f"P{i + 1}", 0.0) for i in range(n))
    return OmegaBachSpec(beta, P)


def cmd_bach(ctx: _Context):
    c = ctx.chart()
    if c.dim != 4:
        raise UsageError("the bach subcommand needs a 4-dimensional chart")
    pts = ctx.points(c)
    X = ctx.inputs(c, pts)
    B = bach_tensor(c)
    ginv = c.inverse_metric()
    fields = [B, c.metric_field(), ginv]
    spec = None
    if ctx.args.omega:
        spec = _omega_from_params(ctx, c)
        fields.append(omega_bach(c, spec))
    vals = evaluate_fields(fields, c.names(), X)
    Bv, gv, Gv = vals[:3]
    trace = np.einsum("mij,mij->m", Gv, Bv)
    result = {
        "points": _values(pts),
        "values": _values(Bv),
        "max_abs": float(np.max(np.abs(Bv))),
        "symmetry_max": float(np.max(np.abs(Bv - np.swapaxes(Bv, 1, 2)))),
        "trace_max": float(np.max(np.abs(trace))),
    }
    if c.factors:
        na = c.factors[0].dim
        blocks = {}
        for label, sl in ((c.factors[0].name, slice(0, na)), (c.factors[1].name, slice(na, None))):
            d = np.einsum("mii->mi", Bv[:, sl, sl])
            gd = np.einsum("mii->mi", gv[:, sl, sl])
            blocks[label] = {"diagonal_ratio_to_metric": _values(d / gd)}
        result["blocks"] = blocks
    if spec is not None:
        Wv = vals[3]
        result["omega_bach"] = {"beta": float(spec.beta.a), "P": [float(p.a) for p in spec.P],
                                "values": _values(Wv),
                                "trace": _values(np.einsum("mij,mij->m", Gv, Wv))}
    return result, EXIT_OK


def _potential(ctx, c, name):
    if ctx.manifest is not None and name in ctx.manifest.potentials:
        return ctx.manifest.potentials[name], ()
    if name in POTENTIALS:
        f = builtin_potential(name)
        coords_needed = set(builtin(POTENTIALS[name][0]).coords)
        if not coords_needed <= set(c.coords):
            raise UsageError(f"potential {name} lives on {POTENTIALS[name][0]}, not on chart {c.name}")
        return f, potential_params(name)
    raise UsageError(f"unknown potential {name!r}")


def _soliton_params(ctx, c, extra):
    params = {"lambda": 0.0, "beta": 0.0}
    params.update({f"P{i + 1}": 0.0 for i in range(c.dim)})
    params.update({p: 0.0 for p in extra})
    params.update(ctx.params)
    return params


def cmd_verify_soliton(ctx: _Context):
    a = ctx.args
    c = ctx.chart()
    if c.dim != 4:
        raise UsageError("soliton checks need a 4-dimensional chart")
    extra = ()
    if a.potential:
        f, extra = _potential(ctx, c, a.potential)
        kwargs = {"potential": f}
    else:
        if ctx.manifest is None or a.vector not in ctx.manifest.vectors:
            raise UsageError(f"unknown vector field {a.vector!r}")
        kwargs = {"vector": VectorFieldSpec(a.vector, ctx.manifest.vectors[a.vector])}
    params = _soliton_params(ctx, c, extra)
    lam = sym("lambda") if a.lambda_expr is None else parse(a.lambda_expr, c.coords, tuple(params))
    spec = SolitonSpec(c, omega=None, lam=lam, params=params, bach=a.bach, **kwargs)
    ctx.params = params
    rep = soliton_residual(spec, points=ctx.points(c))
    ok = rep.global_max <= a.tol
    result = dict(rep.to_dict(), mode=spec.mode, tol=a.tol, passed=ok)
    return result, EXIT_OK if ok else EXIT_RESIDUAL


def cmd_audit(ctx: _Context):
    a = ctx.args
    name = a.potential or (a.chart and AUDIT_ALIASES.get(a.chart))
    if not name:
        raise UsageError("audit needs --potential or a product --chart (S2H2, R2H2, R2S2)")
    name = AUDIT_ALIASES.get(name, name)
    if name not in POTENTIALS:
        raise UsageError(f"unknown potential {name!r}")
    from .soliton import _audit_chart
    chart = _audit_chart(name)
    ctx._chart = chart
    points = ctx.points(chart, {})
    rep = full_system_audit(name, ctx.params, points=points, omega_convention=a.convention)
    ctx.params = rep.params
    result = rep.to_dict()
    result["tol"] = a.tol
    result["failing"] = rep.failing(a.tol)
    return result, EXIT_OK


def cmd_classify(ctx: _Context):
    a = ctx.args
    c = ctx.chart()
    if a.field:
        if ctx.manifest is None or a.field not in ctx.manifest.vectors:
            raise UsageError(f"unknown vector field {a.field!r}")
        V = VectorFieldSpec(a.field, ctx.manifest.vectors[a.field])
    else:
        from .manifest import _split
        comps = tuple(parse(t, c.coords, c.params) for t in _split(a.components))
        V = VectorFieldSpec("V", comps)
    pts = ctx.points(c)
    rep = classify(V, c, tol=a.tol, points=pts, params=ctx._chart_params(c, ctx.params))
    result = rep.to_dict()
    result["classes"] = rep.classes()
    return result, EXIT_OK


def _random_specs(c, k, seed):
    rng = np.random.default_rng(seed)
    x = [sym(v) for v in c.coords]
    n = c.dim
    specs = []
    for _ in range(k):
        beta = round(float(rng.uniform(-2, 2)), 6)
        P = []
        for i in range(n):
            a0, a1 = (round(float(v), 6) for v in rng.uniform(-1, 1, 2))
            P.append(a0 + a1 * x[(i + 1) % n])
        specs.append(OmegaBachSpec(beta, tuple(P)))
    return specs


def cmd_lemma_check(ctx: _Context):
    a = ctx.args
    c = ctx.chart()
    if c.dim != 4:
        raise UsageError("lemma checks need a 4-dimensional chart")
    if "beta" in ctx.params:
        specs = [_omega_from_params(ctx, c)]
    else:
        specs = _random_specs(c, a.random, 0 if a.seed is None else a.seed)
    pts = ctx.points(c)
    X = ctx.inputs(c, pts)
    rows = []
    ok_all = True
    for spec in specs:
        res = lemma_residuals(c, spec)
        vals = evaluate_with_params(list(res.values()), c.names(), X)
        mx = {k: float(np.max(np.abs(vals[:, i]))) for i, k in enumerate(res)}
        ok = all(v <= a.tol for v in mx.values())
        ok_all &= ok
        rows.append({"beta": to_text(spec.beta), "P": [to_text(p) for p in spec.P],
                     "residual_max": mx, "passed": ok})
    return {"tol": a.tol, "points": len(pts), "checks": rows, "all_passed": ok_all}, EXIT_OK


def cmd_flow(ctx: _Context):
    a = ctx.args
    if len(a.init) != 2:
        raise UsageError("--init takes exactly two scale factors")
    state = FlowState(a.family, a.init)
    traj = integrate(state, a.t_end, a.dt)
    if a.csv:
        text = traj.to_csv()
        if a.csv == "-":
            ctx.stdout.write(text)
        else:
            with open(a.csv, "w", encoding="utf-8") as fh:
                fh.write(text)
    result = dict(traj.to_dict(), dt=a.dt, t_end=a.t_end,
                  final=dict(zip(traj.names, traj.scales[-1].tolist())))
    return result, EXIT_OK


def cmd_export_pde(ctx: _Context):
    c = ctx.chart()
    if c.dim != 4:
        raise UsageError("PDE export needs a 4-dimensional chart")
    system = export_pde_system(c, omega_convention=ctx.args.convention)
    return {"separable": system.separable, "convention": system.omega_convention,
            "notes": system.notes, "equations": [e.to_dict() for e in system]}, EXIT_OK


COMMANDS = {
    "curvature": cmd_curvature,
    "bach": cmd_bach,
    "verify-soliton": cmd_verify_soliton,
    "audit": cmd_audit,
    "classify-field": cmd_classify,
    "lemma-check": cmd_lemma_check,
    "flow": cmd_flow,
    "export-pde": cmd_export_pde,
}


def run(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    t0 = time.perf_counter()
    try:
        ctx = _Context(args)
        ctx.stdout = stdout
        with _warnings.catch_warnings(record=True) as caught:
            _warnings.simplefilter("always", NodeBudgetWarning)
            result, code = COMMANDS[args.command](ctx)
        ctx.warnings.extend(str(w.message) for w in caught if issubclass(w.category, NodeBudgetWarning))
    except ManifestError as exc:
        print(f"bachlab: manifest error: {exc}", file=stderr)
        return EXIT_MANIFEST
    except UsageError as exc:
        print(f"bachlab: usage error: {exc}", file=stderr)
        return EXIT_USAGE
    except (ChartError, ExprError, DimensionError, FlowError, KeyError, ValueError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"bachlab: error: {msg}", file=stderr)
        return EXIT_ERROR
    if args.command == "flow" and args.csv == "-":
        return code
    wall = time.perf_counter() - t0 if args.timing else None
    rep = make_report(__version__, ["bachlab"] + argv, ctx.chart_info(), ctx.params, result,
                      ctx.warnings, wall)
    stdout.write(to_json(rep) if args.fmt == "json" else report_text(rep))
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
