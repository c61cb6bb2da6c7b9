"""Expression DAG with exact rational constants and symbolic differentiation.

Nodes are hash-consed: every structurally distinct expression exists once, so
identity comparison is structural equality and common subexpressions are
shared automatically.  All construction goes through the smart constructors
(:func:`add`, :func:`mul`, :func:`power`, :func:`fn`), which keep nodes in a
canonical form:

* constants are folded into exact :class:`fractions.Fraction` values,
* sums collect like terms (``ADD``: constant + sorted ``(term, coeff)`` pairs)
  and are kept primitive: a rational content is pulled out as ``c * (sum)``,
* products collect like bases with integer exponents (``MUL``: coefficient +
  sorted ``(base, exponent)`` pairs).

Floats appear only at evaluation time.
"""
from __future__ import annotations

import math
import threading
import weakref
import zlib
from fractions import Fraction
from typing import Iterable, Mapping

__all__ = [
    "Expr",
    "ExprError",
    "DomainError",
    "FUNCTIONS",
    "as_expr",
    "num",
    "sym",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "power",
    "fn",
    "ln",
    "exp",
    "sin",
    "cos",
    "sqrt",
    "differentiate",
    "simplify",
    "substitute",
    "evaluate",
    "node_count",
    "is_zero",
    "is_constant",
    "constant_value",
    "to_text",
    "ZERO",
    "ONE",
]

NUM, SYM, ADD, MUL, FN = range(5)
FUNCTIONS = ("ln", "exp", "sin", "cos", "sqrt")

_F0 = Fraction(0)
_F1 = Fraction(1)


class ExprError(Exception):
    """Base class for expression errors."""


class DomainError(ExprError, ValueError):
    """Evaluation left the domain of an operation (1/0, ln(x<=0), sqrt(x<0))."""

    def __init__(self, message: str, expr: "Expr | None" = None, point=None):
        self.expr = expr
        self.point = point
        if expr is not None:
            text = to_text(expr) if node_count(expr) < 200 else "<large expression>"
            message = f"{message} in subexpression {text}"
        if point is not None:
            message = f"{message} at point {point}"
        super().__init__(message)


class Expr:
    """Immutable, interned expression node.

    Users normally build expressions with :func:`bachlab.parse.parse` or with
    the arithmetic operators, which dispatch to the smart constructors.
    """

    __slots__ = ("kind", "a", "b", "free", "_hash", "_sk", "_d", "__weakref__")

    def __hash__(self):
        return self._hash

    # Arithmetic sugar; identity equality is inherited from object.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, n):
        if isinstance(n, Expr):
            if n.kind != NUM or n.a.denominator != 1:
                raise ExprError("exponent must be an integer constant")
            n = int(n.a)
        if not isinstance(n, int):
            raise ExprError("exponent must be an integer")
        return power(self, n)

    def __str__(self):
        return to_text(self)

    def __repr__(self):
        if node_count(self) > 60:
            return f"<Expr with {node_count(self)} nodes>"
        return f"Expr({to_text(self)!r})"

    def __reduce__(self):
        return (_rebuild, (to_text(self), tuple(sorted(self.free))))


def _rebuild(text, names):
    from .parse import parse

    return parse(text, list(names), [])


_table: "weakref.WeakValueDictionary[tuple, Expr]" = weakref.WeakValueDictionary()
_lock = threading.Lock()
_EMPTY: frozenset = frozenset()


def _make(kind, a, b, free) -> Expr:
    key = (kind, a, b)
    node = _table.get(key)
    if node is not None:
        return node
    if kind == NUM:
        h = hash((NUM, a))
        sk = ("", -1, h)
    elif kind == SYM:
        h = hash((SYM, zlib.crc32(a.encode())))
        sk = (a, 0, h)
    elif kind == FN:
        h = hash((FN, zlib.crc32(a.encode()), b._hash))
        sk = (a, 2, h)
    elif kind == MUL:
        h = hash((MUL, a, b))
        sk = (b[0][0]._sk[0], 1, h)
    else:
        h = hash((ADD, a, b))
        sk = ("~", 3, h)
    node = object.__new__(Expr)
    node.kind = kind
    node.a = a
    node.b = b
    node.free = free
    node._hash = h
    node._sk = sk
    node._d = None
    with _lock:
        existing = _table.get(key)
        if existing is not None:
            return existing
        _table[key] = node
    return node


def num(value) -> Expr:
    """Exact constant node."""
    return _make(NUM, Fraction(value), None, _EMPTY)


def sym(name: str) -> Expr:
    """Symbol node (coordinate or parameter)."""
    return _make(SYM, name, None, frozenset((name,)))


ZERO = num(0)
ONE = num(1)
_MINUS_ONE = num(-1)


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, bool):
        raise TypeError("booleans are not expressions")
    if isinstance(x, (int, Fraction)):
        return num(x)
    if isinstance(x, float):
        if not math.isfinite(x):
            raise ExprError(f"non-finite constant {x!r}")
        return num(Fraction(repr(x)))
    if isinstance(x, str):
        return sym(x)
    raise TypeError(f"cannot convert {type(x).__name__} to Expr")


def _union(nodes) -> frozenset:
    out = _EMPTY
    for n in nodes:
        if n.free:
            out = n.free if not out else out | n.free
    return out


def add(*args) -> Expr:
    const = _F0
    terms: dict = {}
    for x in args:
        if not isinstance(x, Expr):
            x = as_expr(x)
        k = x.kind
        if k == NUM:
            const += x.a
        elif k == ADD:
            const += x.a
            for t, c in x.b:
                terms[t] = terms.get(t, 0) + c
        elif k == MUL and x.a != 1:
            if len(x.b) == 1 and x.b[0][1] == 1 and x.b[0][0].kind == ADD:
                inner, c0 = x.b[0][0], x.a
                const += c0 * inner.a
                for t, c in inner.b:
                    terms[t] = terms.get(t, 0) + c0 * c
            else:
                m = _monic(x)
                terms[m] = terms.get(m, 0) + x.a
        else:
            terms[x] = terms.get(x, 0) + 1
    items = [(t, Fraction(c)) for t, c in terms.items() if c != 0]
    if not items:
        return num(const)
    if len(items) == 1 and const == 0:
        t, c = items[0]
        return _scale(t, c)
    items.sort(key=_term_key)
    const = Fraction(const)
    content = _content(items, const)
    free = _union(t for t, _ in items)
    if content == 1 or not _tame(items, const, content):
        return _make(ADD, const, tuple(items), free)
    prim = _make(ADD, const / content, tuple((t, c / content) for t, c in items), free)
    return _make(MUL, content, ((prim, 1),), free)


_SPREAD = Fraction(2) ** 600


def _tame(items, const: Fraction, content: Fraction) -> bool:
    """False when dividing out ``content`` would leave coefficients too
    large for a double (e.g. sums mixing 1e-300 and 1)."""
    big = max(abs(c) for _, c in items)
    return max(big, abs(const)) < _SPREAD * abs(content)


def _content(items, const: Fraction) -> Fraction:
    """Rational content of a sum, signed like its leading term."""
    g = 0
    l = 1
    for _, c in items:
        g = math.gcd(g, c.numerator)
        l = l * c.denominator // math.gcd(l, c.denominator)
    if const:
        g = math.gcd(g, const.numerator)
        l = l * const.denominator // math.gcd(l, const.denominator)
    content = Fraction(g, l)
    return -content if items[0][1] < 0 else content


def _term_key(tc):
    return tc[0]._sk


def _monic(x: Expr) -> Expr:
    if len(x.b) == 1 and x.b[0][1] == 1:
        return x.b[0][0]
    return _make(MUL, _F1, x.b, x.free)


def _scale(t: Expr, c: Fraction) -> Expr:
    """c * t for a monic term t (atom, FN or coefficient-1 MUL)."""
    if c == 1:
        return t
    if t.kind == MUL:
        return _make(MUL, c, t.b, t.free)
    return _make(MUL, c, ((t, 1),), t.free)


def mul(*args) -> Expr:
    coeff = _F1
    facs: dict = {}
    for x in args:
        if not isinstance(x, Expr):
            x = as_expr(x)
        k = x.kind
        if k == NUM:
            if x.a == 0:
                return ZERO
            coeff *= x.a
        elif k == MUL:
            coeff *= x.a
            for b, e in x.b:
                facs[b] = facs.get(b, 0) + e
        else:
            facs[x] = facs.get(x, 0) + 1
    return _build_mul(coeff, facs)


def _build_mul(coeff: Fraction, facs: dict) -> Expr:
    if coeff == 0:
        return ZERO
    extra = None
    items = []
    for b, e in facs.items():
        if e == 0:
            continue
        if b.kind == FN and b.a == "sqrt" and (e >= 2 or e <= -2):
            q, r = divmod(e, 2)
            if extra is None:
                extra = []
            extra.append(power(b.b, q))
            if r:
                items.append((b, r))
            continue
        items.append((b, e))
    if extra is not None:
        base = _build_mul(coeff, dict(items))
        return mul(base, *extra)
    if not items:
        return num(coeff)
    if len(items) == 1 and items[0][1] == 1:
        b = items[0][0]
        if coeff == 1:
            return b
    items.sort(key=_term_key)
    return _make(MUL, Fraction(coeff), tuple(items), _union(b for b, _ in items))


def power(x, n: int) -> Expr:
    """x**n for an integer n."""
    x = as_expr(x)
    n = int(n)
    if n == 0:
        return ONE
    if n == 1:
        return x
    k = x.kind
    if k == NUM:
        if x.a == 0 and n < 0:
            raise DomainError("division by zero", x)
        return num(x.a**n)
    if k == MUL:
        return _build_mul(x.a**n, {b: e * n for b, e in x.b})
    return _build_mul(_F1, {x: n})


def neg(x) -> Expr:
    return mul(_MINUS_ONE, x)


def sub(x, y) -> Expr:
    return add(x, mul(_MINUS_ONE, y))


def div(x, y) -> Expr:
    y = as_expr(y)
    if y.kind == NUM and y.a == 0:
        raise DomainError("division by zero", y)
    return mul(x, power(y, -1))


def _exact_sqrt(q: Fraction):
    n, d = q.numerator, q.denominator
    rn, rd = math.isqrt(n), math.isqrt(d)
    if rn * rn == n and rd * rd == d:
        return Fraction(rn, rd)
    return None


def fn(name: str, arg) -> Expr:
    if name not in FUNCTIONS:
        raise ExprError(f"unknown function {name!r}")
    arg = as_expr(arg)
    if arg.kind == NUM:
        v = arg.a
        if name == "ln":
            if v <= 0:
                raise DomainError("ln of non-positive value", arg)
            if v == 1:
                return ZERO
        elif name == "sqrt":
            if v < 0:
                raise DomainError("sqrt of negative value", arg)
            r = _exact_sqrt(v)
            if r is not None:
                return num(r)
        elif v == 0:
            return ONE if name in ("exp", "cos") else ZERO
    elif arg.kind == FN:
        if name == "ln" and arg.a == "exp":
            return arg.b
        if name == "exp" and arg.a == "ln":
            return arg.b
    return _make(FN, name, arg, arg.free)


def ln(x) -> Expr:
    return fn("ln", x)


def exp(x) -> Expr:
    return fn("exp", x)


def sin(x) -> Expr:
    return fn("sin", x)


def cos(x) -> Expr:
    return fn("cos", x)


def sqrt(x) -> Expr:
    return fn("sqrt", x)


# ---------------------------------------------------------------------------
# queries


def is_zero(e: Expr) -> bool:
    return e is ZERO


def is_constant(e: Expr) -> bool:
    return e.kind == NUM


def constant_value(e: Expr) -> Fraction:
    if e.kind != NUM:
        raise ExprError("expression is not a constant")
    return e.a


def _children(e: Expr):
    k = e.kind
    if k == ADD or k == MUL:
        return [c for c, _ in e.b]
    if k == FN:
        return [e.b]
    return []


def node_count(e: Expr | Iterable[Expr]) -> int:
    """Number of distinct nodes in the DAG rooted at ``e`` (or a collection)."""
    roots = [e] if isinstance(e, Expr) else list(e)
    seen = set()
    stack = list(roots)
    while stack:
        n = stack.pop()
        if id(n) in seen:
            continue
        seen.add(id(n))
        stack.extend(_children(n))
    return len(seen)


# ---------------------------------------------------------------------------
# differentiation


def differentiate(e: Expr, var: str) -> Expr:
    """Exact partial derivative with respect to the symbol ``var``.

    Results are memoised on the node, so repeated derivatives of a shared
    subexpression are computed once.
    """
    if var not in e.free:
        return ZERO
    d = e._d
    if d is None:
        d = e._d = {}
    else:
        hit = d.get(var)
        if hit is not None:
            return hit
    k = e.kind
    if k == SYM:
        out = ONE
    elif k == ADD:
        out = add(*[mul(c, differentiate(t, var)) for t, c in e.b if var in t.free])
    elif k == MUL:
        parts = []
        for b, p in e.b:
            if var not in b.free:
                continue
            db = differentiate(b, var)
            if db is ZERO:
                continue
            parts.append(mul(e, p, db, power(b, -1)))
        out = add(*parts)
    else:
        a = e.b
        da = differentiate(a, var)
        name = e.a
        if da is ZERO:
            out = ZERO
        elif name == "ln":
            out = mul(da, power(a, -1))
        elif name == "exp":
            out = mul(e, da)
        elif name == "sin":
            out = mul(fn("cos", a), da)
        elif name == "cos":
            out = mul(-1, fn("sin", a), da)
        else:
            out = mul(Fraction(1, 2), da, power(e, -1))
    d[var] = out
    return out


# ---------------------------------------------------------------------------
# rebuilding


def _rebuild_bottom_up(e: Expr, leaf) -> Expr:
    """Rebuild the DAG through the smart constructors; ``leaf`` maps SYM nodes."""
    memo: dict = {}
    stack = [(e, False)]
    while stack:
        n, ready = stack.pop()
        if id(n) in memo:
            continue
        kids = _children(n)
        if not ready and kids:
            stack.append((n, True))
            stack.extend((c, False) for c in kids if id(c) not in memo)
            continue
        k = n.kind
        if k == NUM:
            out = n
        elif k == SYM:
            out = leaf(n)
        elif k == ADD:
            out = add(n.a, *[mul(c, memo[id(t)]) for t, c in n.b])
        elif k == MUL:
            out = mul(n.a, *[power(memo[id(b)], p) for b, p in n.b])
        else:
            out = fn(n.a, memo[id(n.b)])
        memo[id(n)] = out
    return memo[id(e)]


def simplify(e: Expr) -> Expr:
    """Best-effort simplification.

    The constructors already fold constants, apply 0/1 identities and collect
    like terms and like powers, so this re-canonicalises the DAG bottom-up,
    which matters only for nodes whose children were substituted.
    """
    return _rebuild_bottom_up(e, lambda s: s)


def substitute(e: Expr, mapping: Mapping[str, "Expr | int | Fraction | str"]) -> Expr:
    """Replace symbols by expressions (or rename them when given strings)."""
    table = {k: as_expr(v) for k, v in mapping.items()}
    if not (e.free & table.keys()):
        return e
    return _rebuild_bottom_up(e, lambda s: table.get(s.a, s))


# ---------------------------------------------------------------------------
# direct evaluation


def _ipow(x: float, p: int, node: Expr) -> float:
    if p < 0:
        if x == 0.0:
            raise DomainError("division by zero", node)
        return 1.0 / (x ** (-p))
    return x**p


def evaluate(e: Expr, point: Mapping[str, float] | None = None,
             params: Mapping[str, float] | None = None) -> float:
    """Evaluate ``e`` in double precision.

    ``point`` and ``params`` are name -> value mappings (merged).  For many
    points use :mod:`bachlab.tape`, which compiles the DAG once.
    """
    env = {}
    if point:
        env.update(point)
    if params:
        env.update(params)
    missing = e.free - env.keys()
    if missing:
        raise ExprError(f"unbound symbols: {', '.join(sorted(missing))}")
    memo: dict = {}
    stack = [(e, False)]
    while stack:
        n, ready = stack.pop()
        if id(n) in memo:
            continue
        kids = _children(n)
        if not ready and kids:
            stack.append((n, True))
            stack.extend((c, False) for c in kids if id(c) not in memo)
            continue
        k = n.kind
        if k == NUM:
            v = float(n.a)
        elif k == SYM:
            v = float(env[n.a])
        elif k == ADD:
            v = float(n.a)
            for t, c in n.b:
                v += float(c) * memo[id(t)]
        elif k == MUL:
            v = float(n.a)
            for b, p in n.b:
                v *= _ipow(memo[id(b)], p, b)
        else:
            x = memo[id(n.b)]
            name = n.a
            if name == "ln":
                if x <= 0.0:
                    raise DomainError("ln of non-positive value", n.b)
                v = math.log(x)
            elif name == "sqrt":
                if x < 0.0:
                    raise DomainError("sqrt of negative value", n.b)
                v = math.sqrt(x)
            elif name == "exp":
                v = math.exp(x)
            elif name == "sin":
                v = math.sin(x)
            else:
                v = math.cos(x)
        memo[id(n)] = v
    return memo[id(e)]


# ---------------------------------------------------------------------------
# printing (same grammar as the parser)

_P_ADD, _P_MUL, _P_NEG, _P_ATOM = 1, 2, 3, 5


def _fmt_num(q: Fraction):
    if q.denominator == 1:
        return (str(q.numerator), _P_ATOM if q >= 0 else _P_NEG)
    text = f"{abs(q.numerator)}/{q.denominator}"
    if q < 0:
        return ("-" + text, _P_NEG)
    return (text, _P_MUL)


def _fmt_factor(b: Expr, p: int) -> str:
    text, prec = _fmt(b)
    if p == 1:
        return text if prec >= _P_MUL and b.kind != ADD else f"({text})"
    if prec < _P_ATOM:
        text = f"({text})"
    return f"{text}^{p}"


def _fmt_product(coeff: Fraction, factors) -> str:
    """Format coeff * prod(factors) for coeff > 0."""
    numer = [_fmt_factor(b, p) for b, p in factors if p > 0]
    denom = [_fmt_factor(b, -p) for b, p in factors if p < 0]
    if coeff.numerator != 1 or not numer:
        numer.insert(0, str(coeff.numerator))
    if coeff.denominator != 1:
        denom.insert(0, str(coeff.denominator))
    text = "*".join(numer)
    if denom:
        d = denom[0] if len(denom) == 1 else "(" + "*".join(denom) + ")"
        text = f"{text}/{d}"
    return text


def _fmt_monomial(t: Expr, c: Fraction) -> str:
    """|c| * t formatted, sign handled by caller."""
    c = abs(c)
    if t.kind == MUL:
        return _fmt_product(c, t.b)
    return _fmt_product(c, ((t, 1),))


def _fmt(e: Expr):
    k = e.kind
    if k == NUM:
        return _fmt_num(e.a)
    if k == SYM:
        return (e.a, _P_ATOM)
    if k == FN:
        return (f"{e.a}({_fmt(e.b)[0]})", _P_ATOM)
    if k == MUL:
        text = _fmt_product(abs(e.a), e.b)
        if e.a < 0:
            return ("-" + text, _P_NEG)
        return (text, _P_MUL)
    parts = []
    for i, (t, c) in enumerate(e.b):
        body = _fmt_monomial(t, c)
        if i == 0:
            parts.append("-" + body if c < 0 else body)
        else:
            parts.append((" - " if c < 0 else " + ") + body)
    if e.a != 0:
        q = e.a
        body = _fmt_num(abs(q))[0]
        parts.append((" - " if q < 0 else " + ") + body)
    return ("".join(parts), _P_ADD)


def to_text(e: Expr) -> str:
    """Print ``e`` in the parser's grammar; ``parse(to_text(e))`` is ``e``."""
    return _fmt(e)[0]
