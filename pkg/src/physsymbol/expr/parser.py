"""Formula text -> canonical Expr.

Grammar (whitespace-insensitive):

    expr   := term (('+' | '-') term)*
    term   := factor ('*' factor)*
    factor := ['-'] atom [('**' | '^') ['-'] integer]
    atom   := number | ident | func '(' expr ')' | '(' expr ')'

x, v, t are variables; sin, cos, noise are the only functions and are
reserved (a bare `sin` is an error, not a parameter); every other
identifier is a parameter. Exponents are nonzero integer literals,
except that `e**0` folds to 1.
"""

from __future__ import annotations

import re

from ..errors import FormulaSyntaxError, NonFinite, UnknownSymbol
from .nodes import (
    Add, Constant, Cos, Expr, Mul, Neg, Noise, Pow, Sin, Variable, Parameter,
    FUNCTION_NAMES, VARIABLE_NAMES, canonicalize,
)

__all__ = ["parse"]

_TOKEN_RE = re.compile(
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<pow>\*\*|\^)"
    r"|(?P<op>[-+*()])"
)

_INT_RE = re.compile(r"\d+$")


class _Token:
    __slots__ = ("kind", "text", "pos")

    def __init__(self, kind: str, text: str, pos: int):
        self.kind = kind
        self.text = text
        self.pos = pos


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    i = 0
    n = len(text)
    while i < n:
        if text[i].isspace():
            i += 1
            continue
        m = _TOKEN_RE.match(text, i)
        if m is None:
            raise FormulaSyntaxError(
                f"unexpected character {text[i]!r}", position=i
            )
        kind = m.lastgroup
        tokens.append(_Token(kind, m.group(), i))
        i = m.end()
    tokens.append(_Token("end", "", n))
    return tokens


class _Parser:
    def __init__(self, tokens: list[_Token], parameters):
        self.tokens = tokens
        self.i = 0
        self.parameters = parameters

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, expected: str):
        tok = self.peek()
        got = repr(tok.text) if tok.kind != "end" else "end of input"
        raise FormulaSyntaxError(
            f"expected {expected}, got {got}", position=tok.pos, expected=expected
        )

    def expr(self) -> Expr:
        terms = [self.term()]
        while self.peek().text in ("+", "-"):
            op = self.advance().text
            t = self.term()
            terms.append(t if op == "+" else Neg(t))
        return terms[0] if len(terms) == 1 else Add(tuple(terms))

    def term(self) -> Expr:
        factors = [self.factor()]
        while self.peek().text == "*":
            self.advance()
            factors.append(self.factor())
        return factors[0] if len(factors) == 1 else Mul(tuple(factors))

    def factor(self) -> Expr:
        negate = False
        if self.peek().text == "-":
            self.advance()
            negate = True
        node = self.atom()
        if self.peek().kind == "pow":
            self.advance()
            node = self.power(node)
        return Neg(node) if negate else node

    def power(self, base: Expr) -> Expr:
        negative = False
        if self.peek().text == "-":
            self.advance()
            negative = True
        tok = self.peek()
        if tok.kind != "num" or not _INT_RE.match(tok.text):
            self.fail("an integer exponent")
        self.advance()
        n = int(tok.text)
        if negative:
            n = -n
        if n == 0:
            return Constant(1.0)
        return Pow(base, n)

    def atom(self) -> Expr:
        tok = self.peek()
        if tok.kind == "num":
            self.advance()
            value = float(tok.text)
            try:
                return Constant(value)
            except NonFinite:
                raise FormulaSyntaxError(
                    f"number {tok.text!r} overflows a double", position=tok.pos
                ) from None
        if tok.kind == "ident":
            self.advance()
            name = tok.text
            if self.peek().text == "(":
                if name not in FUNCTION_NAMES:
                    raise UnknownSymbol(name, position=tok.pos)
                self.advance()
                inner = self.expr()
                if self.peek().text != ")":
                    self.fail("')'")
                self.advance()
                cls = {"sin": Sin, "cos": Cos, "noise": Noise}[name]
                return cls(inner)
            if name in VARIABLE_NAMES:
                return Variable(name)
            if name in FUNCTION_NAMES:
                raise UnknownSymbol(name, position=tok.pos)
            if self.parameters is not None and name not in self.parameters:
                raise UnknownSymbol(name, position=tok.pos)
            return Parameter(name)
        if tok.text == "(":
            self.advance()
            inner = self.expr()
            if self.peek().text != ")":
                self.fail("')'")
            self.advance()
            return inner
        self.fail("a number, name, or '('")


def parse(text: str, parameters=None) -> Expr:
    """Parse formula text into a canonical Expr.

    parameters, when given, is the set of allowed parameter names;
    any other non-variable identifier raises UnknownSymbol.
    """
    tokens = _tokenize(text)
    p = _Parser(tokens, parameters)
    if p.peek().kind == "end":
        raise FormulaSyntaxError("empty formula", position=0)
    node = p.expr()
    if p.peek().kind != "end":
        p.fail("end of input")
    return canonicalize(node)
