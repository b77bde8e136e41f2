"""Tiny expression language for radial data f(r) and reactions G(u).

Grammar::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := ("-" | "+") unary | power
    power  := atom ("^" unary)?
    atom   := NUMBER | "r" | "u" | "(" expr ")" | IDENT "(" expr ("," expr)? ")"
    IDENT  := exp | ln | abs | ko

Unary signs are accepted so that data such as ``(1 - r^2)^-0.5`` can be
written without extra parentheses.  Evaluation is vectorized over numpy
arrays and never returns NaN or inf: such values raise :class:`DomainError`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = [
    "ExprError",
    "ExprSyntaxError",
    "DomainError",
    "Num",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "parse",
    "to_text",
    "evaluate",
    "ko_g",
    "RadialFn",
    "ScalarFn",
    "parse_radial_fn",
    "parse_scalar_fn",
]


class ExprError(ValueError):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class DomainError(ExprError, ArithmeticError):
    """Raised when a function is evaluated outside its domain."""


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


Node = Union[Num, Var, Neg, BinOp, Call]

FUNCTIONS = {"exp": 1, "ln": 1, "abs": 1, "ko": (1, 2)}
VARIABLES = ("r", "u")

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<ident>[A-Za-z_]\w*)|(?P<op>[-+*/^(),]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            bad = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ExprSyntaxError(f"unexpected character {text[bad]!r}", bad)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, allowed: tuple[str, ...]):
        self.tokens = _tokenize(text)
        self.i = 0
        self.allowed = allowed

    def peek(self):
        return self.tokens[self.i]

    def take(self, value=None):
        tok = self.tokens[self.i]
        if value is not None and tok[1] != value:
            what = "end of input" if tok[0] == "end" else repr(tok[1])
            raise ExprSyntaxError(f"expected {value!r}, found {what}", tok[2])
        self.i += 1
        return tok

    def parse(self) -> Node:
        node = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ExprSyntaxError(f"unexpected token {tok[1]!r}", tok[2])
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Node:
        tok = self.peek()
        if tok[0] == "op" and tok[1] in ("-", "+"):
            self.take()
            operand = self.unary()
            return Neg(operand) if tok[1] == "-" else operand
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.peek()[1] == "^" and self.peek()[0] == "op":
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Node:
        kind, value, pos = self.take()
        if kind == "num":
            return Num(float(value))
        if kind == "ident":
            if value in FUNCTIONS:
                self.take("(")
                args = [self.expr()]
                if self.peek()[1] == ",":
                    self.take()
                    args.append(self.expr())
                self.take(")")
                arity = FUNCTIONS[value]
                ok = len(args) in arity if isinstance(arity, tuple) else len(args) == arity
                if not ok:
                    raise ExprSyntaxError(f"wrong number of arguments to {value}", pos)
                if value == "ko" and "u" not in self.allowed:
                    raise ExprSyntaxError("ko() is only available in G(u) expressions", pos)
                return Call(value, tuple(args))
            if value in self.allowed:
                return Var(value)
            raise ExprSyntaxError(f"unknown identifier {value!r}", pos)
        if value == "(":
            node = self.expr()
            self.take(")")
            return node
        what = "end of input" if kind == "end" else repr(value)
        raise ExprSyntaxError(f"unexpected {what}", pos)


def parse(text: str, variables: tuple[str, ...] = VARIABLES) -> Node:
    if not text or not text.strip():
        raise ExprSyntaxError("empty expression", 0)
    return _Parser(text, variables).parse()


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def to_text(node: Node) -> str:
    """Pretty-print with the minimal parentheses needed to re-parse to ``node``."""
    return _fmt(node, 0)


def _fmt(node: Node, parent: int) -> str:
    if isinstance(node, Num):
        s = repr(float(node.value))
        # negative literals never come out of the parser, but keep them safe
        return f"({s})" if node.value < 0 else s
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Call):
        return f"{node.name}({', '.join(_fmt(a, 0) for a in node.args)})"
    if isinstance(node, Neg):
        s = "-" + _fmt(node.operand, 3)
        return f"({s})" if parent >= 3 else s
    prec = _PREC[node.op]
    if node.op == "^":
        s = f"{_fmt(node.left, 5)}^{_fmt(node.right, 3)}"
    else:
        # left-associative: right operand needs strictly higher binding
        s = f"{_fmt(node.left, prec)} {node.op} {_fmt(node.right, prec + 1)}"
    return f"({s})" if prec < parent or (prec == parent and parent == 4) else s


def ko_g(u, alpha: float, delta: float):
    """Ko model reaction G(u) = (exp(alpha*u/(alpha+u)) - 1) / u^delta.

    The removable singularity at u = 0 is handled with the expansion
    u^(1-delta) * (1 + (1/2 - 1/alpha) u) below u = 1e-6.
    """
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise DomainError("ko(alpha) requires u >= 0")
    small = u < 1e-6
    with np.errstate(divide="ignore", invalid="ignore"):
        big = np.expm1(alpha * u / (alpha + u)) / u**delta
    series = u ** (1.0 - delta) * (1.0 + (0.5 - 1.0 / alpha) * u)
    return np.where(small, series, big)


def evaluate(node: Node, env: dict):
    """Evaluate ``node`` with variables taken from ``env`` (arrays allowed).

    ``env`` may also carry ``"delta"``, used by the ``ko`` builtin.
    """
    with np.errstate(all="ignore"):
        out = _eval(node, env)
    out = np.asarray(out, dtype=float)
    if not np.all(np.isfinite(out)):
        raise DomainError(f"non-finite value in {to_text(node)}")
    return out


def _eval(node, env):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        try:
            return np.asarray(env[node.name], dtype=float)
        except KeyError:
            raise ExprError(f"variable {node.name!r} is not bound") from None
    if isinstance(node, Neg):
        return -_eval(node.operand, env)
    if isinstance(node, BinOp):
        a = _eval(node.left, env)
        b = _eval(node.right, env)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if node.op == "/":
            if np.any(np.asarray(b) == 0):
                raise DomainError(f"division by zero in {to_text(node)}")
            return a / b
        out = np.power(a, b)
        if np.any(np.isnan(out)) or np.any(np.isinf(out) & np.isfinite(a) & np.isfinite(b)):
            raise DomainError(f"power outside its domain in {to_text(node)}")
        return out
    args = [_eval(a, env) for a in node.args]
    if node.name == "exp":
        return np.exp(args[0])
    if node.name == "ln":
        if np.any(np.asarray(args[0]) <= 0):
            raise DomainError(f"ln of nonpositive argument in {to_text(node)}")
        return np.log(args[0])
    if node.name == "abs":
        return np.abs(args[0])
    # ko(alpha) or ko(alpha, x)
    alpha = float(np.asarray(args[0]))
    if alpha <= 0:
        raise DomainError("ko(alpha) requires alpha > 0")
    x = args[1] if len(args) == 2 else _eval(Var("u"), env)
    if "delta" not in env:
        raise ExprError("ko() needs delta bound in the environment")
    return ko_g(x, alpha, env["delta"])


@dataclass(frozen=True)
class RadialFn:
    """A parsed function of the radius r."""

    ast: Node

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return np.broadcast_to(evaluate(self.ast, {"r": r}), r.shape).copy()

    def __str__(self):
        return to_text(self.ast)


@dataclass(frozen=True)
class ScalarFn:
    """A parsed function of the solution value u (the reaction G).

    ``delta`` is bound at construction so that ``ko(alpha)`` can be evaluated.
    """

    ast: Node
    delta: float = 0.5

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        return np.broadcast_to(evaluate(self.ast, {"u": u, "delta": self.delta}), u.shape).copy()

    def __str__(self):
        return to_text(self.ast)


def parse_radial_fn(text: str) -> RadialFn:
    return RadialFn(parse(text, ("r",)))


def parse_scalar_fn(text: str, delta: float) -> ScalarFn:
    return ScalarFn(parse(text, ("u",)), delta)
