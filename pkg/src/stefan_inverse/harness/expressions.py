"""A small arithmetic grammar for data functions in configuration files.

Grammar::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := ("+" | "-") unary | power
    power  := atom (("^" | "**") unary)?
    atom   := NUMBER | NAME | NAME "(" expr ")" | "(" expr ")"

Names are the variables ``x``, ``xi``, ``t``, the constants ``pi`` and
``e``, and the functions listed in ``FUNCTIONS``. Parsing builds a sympy
expression directly from tokens; nothing is passed to ``eval``. Exact
derivatives come from ``sympy.diff`` and numeric evaluation from
``sympy.lambdify`` with the numpy backend.
"""
from __future__ import annotations

import re
from functools import lru_cache
from typing import Callable

import numpy as np
import sympy as sp

from ..errors import ConfigError

__all__ = ["Expression", "parse_expression", "VARIABLES", "FUNCTIONS"]

VARIABLES = ("x", "xi", "t")
CONSTANTS = {"pi": sp.pi, "e": sp.E}
FUNCTIONS = {
    "sin": sp.sin,
    "cos": sp.cos,
    "tan": sp.tan,
    "exp": sp.exp,
    "log": sp.log,
    "sqrt": sp.sqrt,
    "sinh": sp.sinh,
    "cosh": sp.cosh,
    "tanh": sp.tanh,
    "abs": sp.Abs,
}
_SYMBOLS = {name: sp.Symbol(name, real=True) for name in VARIABLES}

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>\*\*|[-+*/^(),]))"
)


def _tokenize(text: str):
    pos = 0
    out = []
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ConfigError(f"unexpected character {text[pos]!r} at {pos} in {text!r}")
        if m.group("num") is not None:
            out.append(("num", m.group("num")))
        elif m.group("name") is not None:
            out.append(("name", m.group("name")))
        else:
            out.append(("op", m.group("op")))
        pos = m.end()
    out.append(("end", ""))
    return out


class _Parser:
    def __init__(self, text: str, allowed: tuple):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.allowed = allowed

    def peek(self):
        return self.tokens[self.i]

    def take(self, kind=None, value=None):
        tok = self.tokens[self.i]
        if (kind and tok[0] != kind) or (value and tok[1] != value):
            want = value or kind
            raise ConfigError(f"expected {want!r} but found {tok[1]!r} in {self.text!r}")
        self.i += 1
        return tok

    def parse(self):
        node = self.expr()
        if self.peek()[0] != "end":
            raise ConfigError(f"trailing input {self.peek()[1]!r} in {self.text!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek() in (("op", "+"), ("op", "-")):
            op = self.take()[1]
            rhs = self.term()
            node = node + rhs if op == "+" else node - rhs
        return node

    def term(self):
        node = self.unary()
        while self.peek() in (("op", "*"), ("op", "/")):
            op = self.take()[1]
            rhs = self.unary()
            node = node * rhs if op == "*" else node / rhs
        return node

    def unary(self):
        if self.peek() == ("op", "-"):
            self.take()
            return -self.unary()
        if self.peek() == ("op", "+"):
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek() in (("op", "^"), ("op", "**")):
            self.take()
            return base ** self.unary()
        return base

    def atom(self):
        kind, val = self.peek()
        if kind == "num":
            self.take()
            return sp.Rational(val) if re.fullmatch(r"\d+", val) else sp.Float(val, 17)
        if kind == "name":
            self.take()
            if self.peek() == ("op", "("):
                if val not in FUNCTIONS:
                    raise ConfigError(f"unknown function {val!r} in {self.text!r}")
                self.take("op", "(")
                arg = self.expr()
                self.take("op", ")")
                return FUNCTIONS[val](arg)
            if val in CONSTANTS:
                return CONSTANTS[val]
            if val in self.allowed:
                return _SYMBOLS[val]
            raise ConfigError(
                f"unknown name {val!r} in {self.text!r}; allowed: {', '.join(self.allowed)}"
            )
        if (kind, val) == ("op", "("):
            self.take()
            node = self.expr()
            self.take("op", ")")
            return node
        raise ConfigError(f"unexpected token {val!r} in {self.text!r}")


class Expression:
    """Parsed expression over a fixed variable tuple.

    Calling the object evaluates it with numpy broadcasting; the result
    always has the broadcast shape of the arguments, even for constants.
    """

    def __init__(self, node: sp.Expr, variables: tuple, text: str | None = None):
        self.node = node
        self.variables = tuple(variables)
        self.text = text if text is not None else str(node)
        args = [_SYMBOLS[v] for v in self.variables]
        self._fn = sp.lambdify(args, node, modules="numpy")

    def __call__(self, *args):
        if len(args) != len(self.variables):
            raise TypeError(f"expected {len(self.variables)} arguments ({', '.join(self.variables)})")
        arrays = [np.asarray(a, dtype=float) for a in args]
        shape = np.broadcast_shapes(*(a.shape for a in arrays)) if arrays else ()
        out = np.asarray(self._fn(*arrays), dtype=float)
        return np.broadcast_to(out, shape).copy() if out.shape != shape else out

    def diff(self, var: str, order: int = 1) -> "Expression":
        if var not in self.variables:
            return Expression(sp.Integer(0), self.variables, "0")
        node = sp.diff(self.node, _SYMBOLS[var], order) if order else self.node
        return Expression(node, self.variables)

    def derivatives(self, var: str, max_order: int = 4) -> list:
        """``[d/dvar, d2/dvar2, ...]`` as callables."""
        return [self.diff(var, j) for j in range(1, max_order + 1)]

    def integrate_from_zero(self, var: str = "t") -> "Expression":
        """``int_0^var self`` in closed form; raises ``ConfigError`` if sympy cannot."""
        sym = _SYMBOLS[var]
        dummy = sp.Dummy("s", real=True)
        res = sp.integrate(self.node.subs(sym, dummy), (dummy, 0, sym))
        if res.has(sp.Integral):
            raise ConfigError(f"no closed-form antiderivative for {self.text!r}")
        return Expression(sp.simplify(res), self.variables)

    def compose(self, fn: Callable[[sp.Expr], sp.Expr]) -> "Expression":
        return Expression(fn(self.node), self.variables)

    def depends_on(self, var: str) -> bool:
        return _SYMBOLS[var] in self.node.free_symbols

    def __repr__(self):
        return f"Expression({self.text!r}, vars={self.variables})"


@lru_cache(maxsize=512)
def _parse_cached(text: str, variables: tuple) -> sp.Expr:
    return _Parser(text, variables).parse()


def parse_expression(text, variables=("t",)) -> Expression:
    """Parse ``text`` into an :class:`Expression` over ``variables``.

    Numbers are accepted as well and become constant expressions.
    """
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        text = repr(float(text))
    if not isinstance(text, str) or not text.strip():
        raise ConfigError(f"expression must be a non-empty string, got {text!r}")
    variables = tuple(variables)
    for v in variables:
        if v not in _SYMBOLS:
            raise ConfigError(f"unsupported variable {v!r}")
    return Expression(_parse_cached(text, variables), variables, text)
