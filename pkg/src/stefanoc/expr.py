"""Scalar coefficient functions parsed from expression text.

Grammar::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('-' | '+') unary | power
    power  := atom ('^' unary)?
    atom   := NUMBER | NAME | FUNC '(' expr ')' | '(' expr ')'

``^`` is right-associative and binds tighter than unary minus, so ``-2^2``
is ``-4``. Evaluation is vectorised over numpy arrays.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Union

import numpy as np

__all__ = [
    "ExpressionError",
    "ExpressionSyntaxError",
    "UnknownIdentifierError",
    "ArityError",
    "DomainError",
    "FunctionSpec",
    "parse_expression",
    "evaluate",
]

FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
}


class ExpressionError(ValueError):
    """Base class for parse and evaluation failures."""


class ExpressionSyntaxError(ExpressionError):
    def __init__(self, message: str, text: str, pos: int):
        super().__init__(f"{message} at position {pos} in {text!r}")
        self.text = text
        self.pos = pos


class UnknownIdentifierError(ExpressionError):
    def __init__(self, name: str, allowed, pos: int):
        super().__init__(
            f"unknown identifier {name!r} at position {pos}; "
            f"allowed variables: {', '.join(allowed)}"
        )
        self.name = name
        self.pos = pos


class ArityError(ExpressionError):
    pass


class DomainError(ExpressionError, ArithmeticError):
    """The expression is singular (or non-finite) at an evaluation point."""


# --- tree -------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    fn: str
    arg: "Node"


Node = Union[Num, Var, Neg, BinOp, Call]


# --- tokenizer / parser -----------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[-+*/^()]))"
)


def _tokenize(text: str):
    pos = 0
    tokens = []
    n = len(text)
    while pos < n:
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            bad = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ExpressionSyntaxError(f"unexpected character {text[bad]!r}", text, bad)
        start = m.start(m.lastgroup)
        kind = m.lastgroup
        value = m.group(kind)
        if kind == "op" and value == "**":
            value = "^"
        tokens.append((kind, value, start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, variables: tuple[str, ...]):
        self.text = text
        self.variables = variables
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, val, pos = self.advance()
        if val != value or kind != "op":
            what = "end of input" if kind == "end" else repr(val)
            raise ExpressionSyntaxError(f"expected {value!r}, found {what}", self.text, pos)

    def parse(self) -> Node:
        node = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ExpressionSyntaxError(f"unexpected token {val!r}", self.text, pos)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Node:
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.advance()
            return Neg(self.unary())
        if kind == "op" and val == "+":
            self.advance()
            return self.unary()
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        kind, val, _ = self.peek()
        if kind == "op" and val == "^":
            self.advance()
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Node:
        kind, val, pos = self.advance()
        if kind == "num":
            return Num(float(val))
        if kind == "name":
            if val in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(val, arg)
            if val in self.variables:
                return Var(val)
            raise UnknownIdentifierError(val, self.variables, pos)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect(")")
            return node
        what = "end of input" if kind == "end" else repr(val)
        raise ExpressionSyntaxError(f"unexpected {what}", self.text, pos)


# --- evaluation ---------------------------------------------------------------


def _eval(node: Node, env: dict):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return env[node.name]
    if isinstance(node, Neg):
        return -_eval(node.arg, env)
    if isinstance(node, Call):
        return FUNCTIONS[node.fn](_eval(node.arg, env))
    left = _eval(node.left, env)
    right = _eval(node.right, env)
    op = node.op
    if op == "+":
        return left + right
    if op == "-":
        return left - right
    if op == "*":
        return left * right
    if op == "/":
        return np.divide(left, right)
    return np.power(left, right)


def _to_text(node: Node) -> str:
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{_to_text(node.arg)})"
    if isinstance(node, Call):
        return f"{node.fn}({_to_text(node.arg)})"
    return f"({_to_text(node.left)} {node.op} {_to_text(node.right)})"


def _uses(node: Node) -> set:
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Num):
        return set()
    if isinstance(node, (Neg, Call)):
        return _uses(node.arg)
    return _uses(node.left) | _uses(node.right)


@dataclass(frozen=True)
class FunctionSpec:
    """A parsed scalar function of one or two variables.

    Call it like a function: ``spec(x)`` for arity 1 and ``spec(x, t)`` for
    arity 2. Arguments may be floats or numpy arrays (broadcast together).
    """

    source: str
    arity: int
    tree: Node = field(repr=False)
    variables: tuple[str, ...] = ("x", "t")

    @property
    def is_constant(self) -> bool:
        return not _uses(self.tree)

    def to_text(self) -> str:
        """Fully parenthesised text that re-parses to the same tree."""
        return _to_text(self.tree)

    def raw(self, *args):
        """Evaluate without domain checks; singular points give inf/nan."""
        self._check_args(args)
        arrays = [np.asarray(a, dtype=float) for a in args]
        env = dict(zip(self.variables, arrays))
        shape = np.broadcast_shapes(*(a.shape for a in arrays))
        with np.errstate(all="ignore"):
            out = _eval(self.tree, env)
        out = np.broadcast_to(np.asarray(out, dtype=float), shape)
        return out

    def __call__(self, *args):
        for a in args:
            if not np.all(np.isfinite(a)):
                raise DomainError(f"non-finite argument passed to {self.source!r}")
        out = self.raw(*args)
        if not np.all(np.isfinite(out)):
            bad = np.flatnonzero(~np.isfinite(np.atleast_1d(out)))[0]
            where = ", ".join(
                f"{v}={float(np.broadcast_to(a, np.shape(out)).flat[bad])!r}"
                for v, a in zip(self.variables, args)
            )
            raise DomainError(f"{self.source!r} is singular at {where}")
        if out.ndim == 0:
            return float(out)
        return out

    def _check_args(self, args):
        if len(args) != self.arity:
            raise ArityError(
                f"{self.source!r} takes {self.arity} argument(s) "
                f"({', '.join(self.variables)}), got {len(args)}"
            )


def parse_expression(text: str, arity: int = 2, var: str = "x") -> FunctionSpec:
    """Parse ``text`` into a :class:`FunctionSpec`.

    Arity-2 expressions use the variables ``x`` and ``t``; arity-1
    expressions use the single variable ``var`` (``x`` unless stated, ``t``
    for boundary data such as the flux and measurement traces).
    """
    if arity not in (1, 2):
        raise ArityError(f"arity must be 1 or 2, got {arity}")
    if not isinstance(text, str):
        text = repr(float(text))
    variables = ("x", "t") if arity == 2 else (var,)
    tree = _Parser(text, variables).parse()
    return FunctionSpec(source=text, arity=arity, tree=tree, variables=variables)


def evaluate(spec: FunctionSpec, x: float, t: float | None = None) -> float:
    """Evaluate a spec at a point; ``t`` must be given iff the arity is 2."""
    args = (x,) if t is None else (x, t)
    if len(args) != spec.arity:
        raise ArityError(f"{spec.source!r} has arity {spec.arity}, got {len(args)} argument(s)")
    for a in args:
        if not math.isfinite(a):
            raise DomainError("arguments must be finite")
    return float(spec(*args))
