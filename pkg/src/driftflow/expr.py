"""Recursive-descent parser for log-likelihood expressions in ``x``.

Grammar::

    expr  := term (('+' | '-') term)*
    term  := unary (('*' | '/') unary)*
    unary := ('+' | '-') unary | power
    power := atom ('^' unary)?
    atom  := NUMBER | 'x' | ('exp' | 'log') '(' expr ')' | '(' expr ')'

``^`` is right-associative and binds tighter than unary minus, so
``-x^2`` is ``-(x^2)``. The unicode operators ``−``, ``×`` and ``÷`` are
accepted as aliases.
"""

from __future__ import annotations

import re
from typing import Callable

import numpy as np

from driftflow.models import Likelihood

Node = Callable[[np.ndarray], np.ndarray]

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^()−×÷]))"
)
_ALIASES = {"−": "-", "×": "*", "÷": "/"}
_FUNCS = {"exp": np.exp, "log": np.log}


class ExpressionError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m:
            bad = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ExpressionError(f"unexpected character {text[bad]!r}", bad)
        kind = m.lastgroup
        value = m.group(kind)
        tokens.append((kind, _ALIASES.get(value, value), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    @property
    def tok(self):
        return self.tokens[self.i]

    def take(self):
        t = self.tokens[self.i]
        self.i += 1
        return t

    def expect(self, op: str) -> None:
        kind, value, offset = self.tok
        if kind != "op" or value != op:
            raise ExpressionError(f"expected {op!r}", offset)
        self.i += 1

    def parse(self) -> Node:
        node = self.expr()
        kind, value, offset = self.tok
        if kind != "end":
            raise ExpressionError(f"unexpected {value!r}", offset)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.tok[0] == "op" and self.tok[1] in "+-":
            op = self.take()[1]
            rhs = self.term()
            node = _bin(np.add if op == "+" else np.subtract, node, rhs)
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.tok[0] == "op" and self.tok[1] in "*/":
            op = self.take()[1]
            rhs = self.unary()
            node = _bin(np.multiply if op == "*" else np.divide, node, rhs)
        return node

    def unary(self) -> Node:
        if self.tok[0] == "op" and self.tok[1] in "+-":
            op = self.take()[1]
            inner = self.unary()
            return inner if op == "+" else (lambda x, f=inner: -f(x))
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.tok[0] == "op" and self.tok[1] == "^":
            self.take()
            exponent = self.unary()
            return _bin(np.power, base, exponent)
        return base

    def atom(self) -> Node:
        kind, value, offset = self.take()
        if kind == "num":
            c = float(value)
            return lambda x: np.full(np.shape(x), c)
        if kind == "name":
            if value == "x":
                return lambda x: x
            if value in _FUNCS:
                fn = _FUNCS[value]
                self.expect("(")
                inner = self.expr()
                self.expect(")")
                return lambda x: fn(inner(x))
            raise ExpressionError(f"unknown name {value!r}", offset)
        if kind == "op" and value == "(":
            inner = self.expr()
            self.expect(")")
            return inner
        what = "end of input" if kind == "end" else repr(value)
        raise ExpressionError(f"unexpected {what}", offset)


def _bin(fn, a: Node, b: Node) -> Node:
    return lambda x: fn(a(x), b(x))


def parse_expression(text: str) -> Node:
    """Compile ``text`` into a vectorized function of ``x``."""
    return _Parser(text).parse()


def likelihood_from_expression(text: str) -> Likelihood:
    """1-D likelihood whose log-density is the expression ``text``."""
    fn = parse_expression(text)

    def log_eval(points):
        x = np.asarray(points, dtype=float)[:, 0]
        with np.errstate(all="ignore"):
            return np.asarray(fn(x), dtype=float)

    return Likelihood(log_eval, f"expr({text})")
