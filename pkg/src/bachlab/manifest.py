"""Chart manifests: a small, strict INI-style text format.

Example::

    # hyperbolic half-plane
    [chart]
    name = H2
    coords = x, y
    metric.11 = 1/y^2
    metric.22 = 1/y^2
    constraint = y > 0
    box.y = 0, 2.5

    [params]
    beta = 2
    P1 = free

    [vector V]
    components = 1, 0

    [oneform w]
    components = 0, y

    [potential f]
    expr = -lambda*ln(y)

Rules: ``metric.ij`` uses 1-based indices and omitted entries are zero; if
both ``metric.ij`` and ``metric.ji`` are given they must agree.  Each
``constraint`` (repeatable) has the form ``lhs > rhs``.  ``box.<coord>`` gives
the sampling interval.  Parameters are either numbers or ``free`` (declared
but unbound).  ``[field NAME]`` is a synonym for ``[vector NAME]``.  Unknown
sections or keys, duplicate keys and undeclared identifiers are errors, each
reported with its line number.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

from .chart import Chart, ChartError
from .expr import ZERO, Expr, ExprError, sub
from .parse import ParseError, parse

__all__ = ["Manifest", "ManifestError", "load_manifest", "parse_manifest"]


class ManifestError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str = "<manifest>"):
        self.line = line
        self.source = source
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)


@dataclass
class Manifest:
    chart: Chart
    vectors: dict = field(default_factory=dict)
    oneforms: dict = field(default_factory=dict)
    potentials: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    free_params: tuple = ()
    source: str = "<manifest>"


_SECTION = re.compile(r"^\[\s*([A-Za-z]+)(?:\s+([A-Za-z_][A-Za-z0-9_]*))?\s*\]$")
_KEY = re.compile(r"^([A-Za-z_][A-Za-z0-9_.]*)\s*=\s*(.*)$")
_NAMED = ("vector", "field", "oneform", "potential")
_CHART_KEYS = ("name", "coords", "constraint")


def load_manifest(path) -> Manifest:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ManifestError(f"cannot read manifest: {exc.strerror}", source=str(p)) from exc
    except UnicodeDecodeError as exc:
        raise ManifestError("manifest is not valid UTF-8", source=str(p)) from exc
    return parse_manifest(text, str(p))


def _split(value: str) -> list:
    parts, depth, cur = [], 0, []
    for ch in value:
        if ch == "," and depth == 0:
            parts.append("".join(cur).strip())
            cur = []
            continue
        depth += ch == "("
        depth -= ch == ")"
        cur.append(ch)
    parts.append("".join(cur).strip())
    return parts


def _sections(text: str, source: str) -> list:
    out = []
    cur = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _SECTION.match(line)
        if m:
            kind, name = m.group(1), m.group(2)
            if kind in ("chart", "params"):
                if name:
                    raise ManifestError(f"section [{kind}] takes no name", lineno, source)
            elif kind in _NAMED:
                if not name:
                    raise ManifestError(f"section [{kind}] needs a name", lineno, source)
            else:
                raise ManifestError(f"unknown section [{kind}]", lineno, source)
            cur = (kind, name, lineno, [])
            out.append(cur)
            continue
        m = _KEY.match(line)
        if not m:
            raise ManifestError(f"expected 'key = value', got {line!r}", lineno, source)
        if cur is None:
            raise ManifestError("key outside of any section", lineno, source)
        cur[3].append((m.group(1), m.group(2).strip(), lineno))
    return out


def parse_manifest(text: str, source: str = "<manifest>") -> Manifest:
    sections = _sections(text, source)
    seen = set()
    for kind, name, lineno, _ in sections:
        key = (("vector" if kind == "field" else kind), name)
        if key in seen:
            raise ManifestError(f"duplicate section [{kind}{' ' + name if name else ''}]", lineno, source)
        seen.add(key)
    charts = [s for s in sections if s[0] == "chart"]
    if not charts:
        raise ManifestError("missing [chart] section", None, source)

    values, free = {}, []
    for kind, _, _, items in sections:
        if kind != "params":
            continue
        for key, val, lineno in items:
            if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", key):
                raise ManifestError(f"invalid parameter name {key!r}", lineno, source)
            if key in values or key in free:
                raise ManifestError(f"duplicate parameter {key!r}", lineno, source)
            if val == "free":
                free.append(key)
                continue
            try:
                values[key] = float(val)
            except ValueError:
                raise ManifestError(f"parameter {key!r} must be a number or 'free'", lineno, source) from None

    chart = _build_chart(charts[0], tuple(values) + tuple(free), source)
    names = chart.coords
    pnames = chart.params
    man = Manifest(chart, params=values, free_params=tuple(free), source=source)

    def expr(text_, lineno):
        try:
            return parse(text_, names, pnames)
        except ParseError as exc:
            raise ManifestError(str(exc), lineno, source) from None

    for kind, name, lineno, items in sections:
        if kind in ("chart", "params"):
            continue
        want = "expr" if kind == "potential" else "components"
        keys = [k for k, _, _ in items]
        for k, _, ln in items:
            if k != want:
                raise ManifestError(f"unknown key {k!r} in [{kind} {name}]", ln, source)
        if keys.count(want) != 1:
            raise ManifestError(f"[{kind} {name}] needs exactly one {want!r}", lineno, source)
        _, val, ln = items[0]
        if kind == "potential":
            man.potentials[name] = expr(val, ln)
            continue
        comps = tuple(expr(c, ln) for c in _split(val))
        if len(comps) != chart.dim:
            raise ManifestError(f"[{kind} {name}] needs {chart.dim} components, got {len(comps)}", ln, source)
        (man.oneforms if kind == "oneform" else man.vectors)[name] = comps
    return man


def _build_chart(section, params, source) -> Chart:
    _, _, head, items = section
    scalars = {}
    metric_raw = {}
    constraints = []
    boxes = {}
    for key, val, lineno in items:
        if key in ("name", "coords"):
            if key in scalars:
                raise ManifestError(f"duplicate key {key!r}", lineno, source)
            scalars[key] = (val, lineno)
        elif key == "constraint":
            constraints.append((val, lineno))
        elif key.startswith("metric."):
            idx = key[len("metric."):]
            if not re.fullmatch(r"[1-9][1-9]", idx):
                raise ManifestError(f"metric key must look like metric.ij, got {key!r}", lineno, source)
            ij = (int(idx[0]) - 1, int(idx[1]) - 1)
            if ij in metric_raw:
                raise ManifestError(f"duplicate key {key!r}", lineno, source)
            metric_raw[ij] = (val, lineno)
        elif key.startswith("box."):
            boxes[key[4:]] = (val, lineno)
        else:
            raise ManifestError(f"unknown key {key!r} in [chart]", lineno, source)
    for req in ("name", "coords"):
        if req not in scalars:
            raise ManifestError(f"[chart] is missing {req!r}", head, source)
    name = scalars["name"][0]
    coords = tuple(c for c in _split(scalars["coords"][0]))
    ln = scalars["coords"][1]
    for c in coords:
        if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", c):
            raise ManifestError(f"invalid coordinate name {c!r}", ln, source)
    if len(set(coords)) != len(coords):
        raise ManifestError("duplicate coordinate names", ln, source)
    clash = set(coords) & set(params)
    if clash:
        raise ManifestError(f"names used as both coordinate and parameter: {sorted(clash)}", ln, source)
    n = len(coords)
    if n not in (2, 4):
        raise ManifestError(f"charts must have 2 or 4 coordinates, got {n}", ln, source)

    def expr(text_, lineno):
        try:
            return parse(text_, coords, params)
        except ParseError as exc:
            raise ManifestError(str(exc), lineno, source) from None

    metric = [[ZERO] * n for _ in range(n)]
    for (i, j), (val, lineno) in metric_raw.items():
        if i >= n or j >= n:
            raise ManifestError(f"metric index out of range for {n} coordinates", lineno, source)
        e = expr(val, lineno)
        other = metric_raw.get((j, i))
        if other is not None and i != j:
            e2 = expr(other[0], other[1])
            if e is not e2:
                raise ManifestError(f"non-symmetric metric: metric.{i + 1}{j + 1} != metric.{j + 1}{i + 1}",
                                    lineno, source)
        metric[i][j] = metric[j][i] = e
    cons = []
    for val, lineno in constraints:
        if val.count(">") != 1 or ">=" in val:
            raise ManifestError("constraint must have the form 'lhs > rhs'", lineno, source)
        lhs, rhs = val.split(">")
        cons.append(sub(expr(lhs, lineno), expr(rhs, lineno)))
    box = [(-1.5, 1.5)] * n
    for c, (val, lineno) in boxes.items():
        if c not in coords:
            raise ManifestError(f"box for unknown coordinate {c!r}", lineno, source)
        try:
            lo, hi = (float(v) for v in _split(val))
        except ValueError:
            raise ManifestError("box must be 'low, high'", lineno, source) from None
        if not lo < hi:
            raise ManifestError("box needs low < high", lineno, source)
        box[coords.index(c)] = (lo, hi)
    try:
        return Chart(name, coords, tuple(tuple(r) for r in metric), tuple(cons), params, tuple(box))
    except (ChartError, ExprError) as exc:
        raise ManifestError(str(exc), head, source) from None
