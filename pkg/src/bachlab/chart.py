"""Coordinate charts: metric components, domain constraints, sampling."""
from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.stats import qmc

from .expr import ZERO, Expr, ExprError, add, as_expr, mul, power, substitute, sym
from .parse import parse
from .tape import Tape
from .tensor import TensorField, esum

__all__ = ["Chart", "ChartError", "builtin", "product", "scaled", "BUILTIN_NAMES"]

#: Margin kept from every domain constraint when sampling.
MARGIN = 0.1


class ChartError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Chart:
    """A single coordinate chart of a Riemannian manifold.

    ``constraints`` are expressions required to be strictly positive;
    ``box`` bounds the sampling region for each coordinate.  Product charts
    keep their ``factors`` (with coordinates already renamed).
    """

    name: str
    coords: tuple
    metric: tuple
    constraints: tuple = ()
    params: tuple = ()
    box: tuple = ()
    convention: str = ""
    factors: tuple = ()
    _cache: dict = field(default_factory=dict, repr=False, compare=False)
    _lock: threading.RLock = field(default_factory=threading.RLock, repr=False, compare=False)

    def __post_init__(self):
        n = len(self.coords)
        if len(set(self.coords)) != n:
            raise ChartError("duplicate coordinate names")
        rows = tuple(tuple(as_expr(e) for e in row) for row in self.metric)
        if len(rows) != n or any(len(r) != n for r in rows):
            raise ChartError(f"metric must be {n}x{n}")
        for i, j in itertools.combinations(range(n), 2):
            if rows[i][j] is not rows[j][i]:
                raise ChartError(f"metric is not symmetric in entries ({i + 1},{j + 1})")
        object.__setattr__(self, "metric", rows)
        object.__setattr__(self, "constraints", tuple(as_expr(c) for c in self.constraints))
        object.__setattr__(self, "coords", tuple(self.coords))
        object.__setattr__(self, "params", tuple(sorted(set(self.params))))
        box = tuple(tuple(float(v) for v in b) for b in self.box) or ((-1.5, 1.5),) * n
        if len(box) != n:
            raise ChartError("sampling box must give one interval per coordinate")
        object.__setattr__(self, "box", box)
        allowed = set(self.coords) | set(self.params)
        for e in itertools.chain(itertools.chain.from_iterable(rows), self.constraints):
            extra = e.free - allowed
            if extra:
                raise ChartError(f"undeclared symbols {sorted(extra)} in chart {self.name}")

    # -- basic accessors --------------------------------------------------
    @property
    def dim(self) -> int:
        return len(self.coords)

    def names(self) -> tuple:
        """Input column order for evaluation: coordinates, then parameters."""
        return self.coords + self.params

    def cached(self, key, compute: Callable):
        """Per-chart memo for derived objects (thread safe)."""
        with self._lock:
            if key not in self._cache:
                self._cache[key] = compute()
            return self._cache[key]

    def metric_field(self) -> TensorField:
        return self.cached("metric", lambda: TensorField.build(
            self.dim, "ll", lambda idx: self.metric[idx[0]][idx[1]]))

    def inverse_metric(self) -> TensorField:
        return self.cached("inverse_metric", lambda: TensorField.build(
            self.dim, "uu", _inverse(self.metric).__getitem__))

    def parse(self, text: str) -> Expr:
        return parse(text, self.coords, self.params)

    # -- points -------------------------------------------------------------
    def inputs(self, points, params: Mapping[str, float] | None = None) -> np.ndarray:
        """Stack coordinate points with parameter values into tape inputs."""
        P = np.atleast_2d(np.asarray(points, dtype=float))
        if P.shape[1] != self.dim:
            raise ChartError(f"points must have {self.dim} coordinates")
        params = dict(params or {})
        missing = [p for p in self.params if p not in params]
        if missing:
            raise ChartError(f"unbound parameters: {', '.join(missing)}")
        cols = [np.full(P.shape[0], float(params[p])) for p in self.params]
        return np.column_stack([P] + cols) if cols else P

    def _inside(self, P, params) -> np.ndarray:
        if not self.constraints:
            return np.ones(len(P), dtype=bool)
        vals = Tape(self.constraints, self.names())(self.inputs(P, params))
        return np.all(vals > MARGIN, axis=1)

    def _params_for_sampling(self, params):
        params = dict(params or {})
        for p in self.params:
            params.setdefault(p, 1.0)
        return params

    def grid(self, count: int = 25, params: Mapping[str, float] | None = None) -> np.ndarray:
        """Deterministic low-discrepancy interior points (Halton sequence)."""
        params = self._params_for_sampling(params)
        lo = np.array([b[0] for b in self.box])
        hi = np.array([b[1] for b in self.box])
        sampler = qmc.Halton(d=self.dim, scramble=False)
        sampler.fast_forward(1)
        out = []
        while sum(len(o) for o in out) < count:
            P = lo + (hi - lo) * sampler.random(max(count, 16))
            out.append(P[self._inside(P, params)])
        return np.concatenate(out)[:count]

    def random_points(self, count: int, seed: int | None = 0,
                      params: Mapping[str, float] | None = None) -> np.ndarray:
        params = self._params_for_sampling(params)
        rng = np.random.default_rng(seed)
        lo = np.array([b[0] for b in self.box])
        hi = np.array([b[1] for b in self.box])
        out = []
        while sum(len(o) for o in out) < count:
            P = rng.uniform(lo, hi, size=(max(count, 16), self.dim))
            out.append(P[self._inside(P, params)])
        return np.concatenate(out)[:count]

    def metric_at(self, points, params=None) -> np.ndarray:
        return self.metric_field().evaluate(self.names(), self.inputs(points, params)).values

    def check_positive_definite(self, points, params=None, tol: float = 1e-12) -> bool:
        G = self.metric_at(points, params)
        return bool(np.all(np.linalg.eigvalsh(G) > tol))


# ---------------------------------------------------------------------------
# symbolic inverse


def _det(M, rows, cols) -> Expr:
    if len(rows) == 1:
        return M[rows[0]][cols[0]]
    terms = []
    r0, rest = rows[0], rows[1:]
    for k, c in enumerate(cols):
        a = M[r0][c]
        if a is ZERO:
            continue
        minor = _det(M, rest, cols[:k] + cols[k + 1:])
        if minor is ZERO:
            continue
        terms.append(mul(-1 if k % 2 else 1, a, minor))
    return esum(terms)


def _blocks(M) -> list:
    """Connected components of the nonzero pattern of a symmetric matrix."""
    n = len(M)
    seen, blocks = set(), []
    for s in range(n):
        if s in seen:
            continue
        comp, stack = [], [s]
        seen.add(s)
        while stack:
            i = stack.pop()
            comp.append(i)
            for j in range(n):
                if j not in seen and M[i][j] is not ZERO:
                    seen.add(j)
                    stack.append(j)
        blocks.append(sorted(comp))
    return blocks


def _inverse(M) -> dict:
    """Inverse via adjugate/determinant on each diagonal block."""
    n = len(M)
    inv = {(i, j): ZERO for i in range(n) for j in range(n)}
    for block in _blocks(M):
        det = _det(M, block, block)
        if det is ZERO:
            raise ChartError("metric determinant is identically zero")
        rdet = power(det, -1)
        if len(block) == 1:
            i = block[0]
            inv[i, i] = rdet
            continue
        for a, i in enumerate(block):
            for b, j in enumerate(block):
                rows = [r for r in block if r != j]
                cols = [c for c in block if c != i]
                cof = _det(M, rows, cols)
                sign = -1 if (a + b) % 2 else 1
                inv[i, j] = mul(sign, cof, rdet)
    return inv


# ---------------------------------------------------------------------------
# constructors


def _diag(*entries):
    n = len(entries)
    return tuple(tuple(as_expr(entries[i]) if i == j else ZERO for j in range(n)) for i in range(n))


def _s2_metric(u, v, squared: bool):
    A = add(1, power(sym(u), 2), power(sym(v), 2))
    conf = mul(4, power(A, -2 if squared else -1))
    return _diag(conf, conf)


def _base(name: str) -> Chart:
    if name == "R2":
        return Chart("R2", ("s", "t"), _diag(1, 1))
    if name == "H2":
        g = power(sym("y"), -2)
        return Chart("H2", ("x", "y"), _diag(g, g), constraints=(sym("y"),),
                     box=((-1.5, 1.5), (0.0, 2.5)))
    if name == "S2_round":
        return Chart("S2_round", ("u", "v"), _s2_metric("u", "v", True), convention="round")
    if name == "S2_paper":
        return Chart("S2_paper", ("u", "v"), _s2_metric("u", "v", False), convention="paper")
    raise ChartError(f"unknown chart {name!r}")


BUILTIN_NAMES = ("R2", "H2", "S2_round", "S2_paper", "S2H2", "R2H2", "R2S2", "S2S2")


def builtin(name: str, s2: str = "round") -> Chart:
    """Built-in chart by name.

    ``s2`` selects the sphere metric used inside products: ``"round"``
    (4/(1+u²+v²)², scalar curvature 2) or ``"paper"`` (4/(1+u²+v²)).
    """
    if s2 not in ("round", "paper"):
        raise ChartError(f"unknown sphere convention {s2!r}")
    sphere = "S2_" + s2
    pairs = {"S2H2": (sphere, "H2"), "R2H2": ("R2", "H2"),
             "R2S2": ("R2", sphere), "S2S2": (sphere, sphere)}
    if name in pairs:
        a, b = pairs[name]
        return product(_base(a), _base(b), name=name)
    return _base(name)


def product(a: Chart, b: Chart, name: str | None = None) -> Chart:
    """Block-diagonal product chart; clashing coordinates of ``b`` are renamed."""
    rename = {}
    taken = set(a.coords) | set(a.params) | set(b.params)
    for c in b.coords:
        new = c
        k = 2
        while new in taken:
            new = f"{c}{k}"
            k += 1
        taken.add(new)
        if new != c:
            rename[c] = new
    if rename:
        b = Chart(b.name, tuple(rename.get(c, c) for c in b.coords),
                  tuple(tuple(substitute(e, rename) for e in row) for row in b.metric),
                  tuple(substitute(e, rename) for e in b.constraints),
                  b.params, b.box, b.convention, b.factors)
    na, nb = a.dim, b.dim
    n = na + nb

    def entry(i, j):
        if i < na and j < na:
            return a.metric[i][j]
        if i >= na and j >= na:
            return b.metric[i - na][j - na]
        return ZERO

    metric = tuple(tuple(entry(i, j) for j in range(n)) for i in range(n))
    conv = "+".join(c for c in (a.convention, b.convention) if c)
    return Chart(name or f"{a.name}x{b.name}", a.coords + b.coords, metric,
                 a.constraints + b.constraints, a.params + b.params,
                 a.box + b.box, conv, (a, b))


def scaled(chart: Chart, factor, name: str | None = None) -> Chart:
    """Chart with metric multiplied by ``factor`` (a constant or parameter)."""
    f = as_expr(factor)
    metric = tuple(tuple(mul(f, e) for e in row) for row in chart.metric)
    extra = tuple(sorted(f.free - set(chart.coords)))
    return Chart(name or chart.name, chart.coords, metric, chart.constraints,
                 chart.params + extra, chart.box, chart.convention)
