"""Text parser for the expression grammar.

Grammar (``^`` is right associative and binds tighter than unary minus)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('+' | '-') unary | power
    power  := atom ('^' unary)?          exponent must fold to an integer
    atom   := NUMBER | IDENT | FUNC '(' expr ')' | '(' expr ')'

``NUMBER`` accepts integers, decimals and scientific notation; every literal
is converted to an exact rational.  ``IDENT`` must be a declared coordinate or
parameter; ``FUNC`` is one of ln, exp, sin, cos, sqrt.
"""
from __future__ import annotations

import re
from fractions import Fraction
from typing import Iterable

from .expr import FUNCTIONS, NUM, Expr, ExprError, add, div, fn, mul, neg, num, power, sub, sym

__all__ = ["parse", "ParseError", "UnknownIdentifierError"]


class ParseError(ExprError):
    """Syntax error; ``offset`` is the byte offset into the source text."""

    def __init__(self, message: str, offset: int, text: str = ""):
        self.offset = offset
        self.text = text
        super().__init__(f"{message} at byte offset {offset}")


class UnknownIdentifierError(ParseError):
    def __init__(self, token: str, offset: int, text: str = ""):
        self.token = token
        super().__init__(f"unknown identifier {token!r}", offset, text)


_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^(),]))"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos]!r}", _byte(text, pos), text)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


def _byte(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8"))


class _Parser:
    def __init__(self, text, names):
        self.text = text
        self.names = names
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, message, tok):
        return ParseError(message, _byte(self.text, tok[2]), self.text)

    def expect(self, value):
        tok = self.take()
        if tok[0] != "op" or tok[1] != value:
            found = tok[1] or "end of input"
            raise self.error(f"expected {value!r}, found {found!r}", tok)
        return tok

    def parse(self) -> Expr:
        e = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise self.error(f"unexpected token {tok[1]!r}", tok)
        return e

    def expr(self):
        e = self.term()
        while True:
            tok = self.peek()
            if tok[0] == "op" and tok[1] in "+-":
                self.take()
                rhs = self.term()
                e = add(e, rhs) if tok[1] == "+" else sub(e, rhs)
            else:
                return e

    def term(self):
        e = self.unary()
        while True:
            tok = self.peek()
            if tok[0] == "op" and tok[1] in "*/":
                self.take()
                rhs = self.unary()
                e = mul(e, rhs) if tok[1] == "*" else div(e, rhs)
            else:
                return e

    def unary(self):
        tok = self.peek()
        if tok[0] == "op" and tok[1] in "+-":
            self.take()
            e = self.unary()
            return neg(e) if tok[1] == "-" else e
        return self.power()

    def power(self):
        base = self.atom()
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "^":
            self.take()
            etok = self.peek()
            ex = self.unary()
            if ex.kind != NUM or ex.a.denominator != 1:
                raise self.error("exponent must be an integer constant", etok)
            return power(base, int(ex.a))
        return base

    def atom(self):
        tok = self.take()
        kind, value, _ = tok
        if kind == "num":
            return num(Fraction(value))
        if kind == "ident":
            if value in FUNCTIONS:
                nxt = self.peek()
                if nxt[0] == "op" and nxt[1] == "(":
                    self.take()
                    arg = self.expr()
                    self.expect(")")
                    return fn(value, arg)
                raise self.error(f"function {value!r} requires an argument", tok)
            if value not in self.names:
                raise UnknownIdentifierError(value, _byte(self.text, tok[2]), self.text)
            return sym(value)
        if kind == "op" and value == "(":
            e = self.expr()
            self.expect(")")
            return e
        found = value or "end of input"
        raise self.error(f"unexpected token {found!r}", tok)


def parse(text: str, coords: Iterable[str] = (), params: Iterable[str] = ()) -> Expr:
    """Parse ``text`` into a canonical :class:`Expr`.

    >>> str(parse("x^1 * x^2", ["x"]))
    'x^3'
    """
    names = set(coords) | set(params)
    clash = names & set(FUNCTIONS)
    if clash:
        raise ExprError(f"symbol names clash with functions: {sorted(clash)}")
    return _Parser(text, names).parse()
