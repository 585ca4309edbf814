"""A small arithmetic expression language over variables t1..tM.

Grammar (usual precedence, ``^`` binds tighter than unary minus and is
right-associative)::

    expr  := term (('+' | '-') term)*
    term  := unary (('*' | '/') unary)*
    unary := ('-' | '+') unary | power
    power := atom ('^' unary)?
    atom  := NUMBER | 'pi' | 'e' | tK | FUNC '(' expr ')' | '(' expr ')'

with FUNC one of log, exp, sqrt, abs. Evaluation is vectorized over rows of
an (n, M) array.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import EvaluationError, ExprSyntaxError, IndexOutOfRangeError, UnknownIdentifierError

FUNCTIONS = ("log", "exp", "sqrt", "abs")
CONSTANTS = {"pi": math.pi, "e": math.e}


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Const:
    name: str


@dataclass(frozen=True)
class Var:
    index: int  # 1-based


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
    func: str
    arg: "Node"


Node = Union[Num, Const, Var, Neg, BinOp, Call]

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>\*\*|[-+*/^()]))"
)


def _tokenize(src: str):
    pos = 0
    out = []
    while pos < len(src):
        if src[pos:].strip() == "":
            break
        m = _TOKEN.match(src, pos)
        if m is None or m.end() == pos:
            col = pos + len(src[pos:]) - len(src[pos:].lstrip()) + 1
            raise ExprSyntaxError(f"unexpected character {src[col - 1]!r}", col)
        kind = m.lastgroup
        text = m.group(kind)
        start = m.start(kind) + 1
        if text == "**":
            text = "^"
        out.append((kind, text, start))
        pos = m.end()
    out.append(("end", "", len(src) + 1))
    return out


class _Parser:
    def __init__(self, src: str):
        self.tokens = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text):
        kind, t, pos = self.take()
        if t != text:
            what = "end of input" if kind == "end" else repr(t)
            raise ExprSyntaxError(f"expected {text!r}, found {what}", pos)

    def parse(self) -> Node:
        node = self.expr()
        kind, t, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected {t!r}", pos)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        kind, t, _ = self.peek()
        if kind == "op" and t == "-":
            self.take()
            return Neg(self.unary())
        if kind == "op" and t == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def atom(self):
        kind, t, pos = self.take()
        if kind == "num":
            return Num(float(t))
        if kind == "name":
            if t in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(t, arg)
            if t in CONSTANTS:
                return Const(t)
            m = re.fullmatch(r"t([1-9]\d*)", t)
            if m:
                return Var(int(m.group(1)))
            raise UnknownIdentifierError(f"unknown identifier {t!r} at position {pos}")
        if kind == "op" and t == "(":
            node = self.expr()
            self.expect(")")
            return node
        what = "end of input" if kind == "end" else repr(t)
        raise ExprSyntaxError(f"unexpected {what}", pos)


def parse(source: str) -> Node:
    return _Parser(source).parse()


def variables(node: Node) -> set:
    if isinstance(node, Var):
        return {node.index}
    if isinstance(node, Neg):
        return variables(node.operand)
    if isinstance(node, Call):
        return variables(node.arg)
    if isinstance(node, BinOp):
        return variables(node.left) | variables(node.right)
    return set()


def to_source(node: Node) -> str:
    """Fully parenthesized text that parses back to the same tree."""
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Const):
        return node.name
    if isinstance(node, Var):
        return f"t{node.index}"
    if isinstance(node, Neg):
        return f"(-{to_source(node.operand)})"
    if isinstance(node, Call):
        return f"{node.func}({to_source(node.arg)})"
    return f"({to_source(node.left)} {node.op} {to_source(node.right)})"


def _first_bad(mask, rows):
    i = int(np.flatnonzero(mask)[0])
    return int(rows[i]) if rows is not None else i


def _eval(node: Node, X: np.ndarray, rows):
    n = X.shape[0]
    if isinstance(node, Num):
        return np.full(n, node.value)
    if isinstance(node, Const):
        return np.full(n, CONSTANTS[node.name])
    if isinstance(node, Var):
        return X[:, node.index - 1].astype(float)
    if isinstance(node, Neg):
        return -_eval(node.operand, X, rows)
    if isinstance(node, Call):
        a = _eval(node.arg, X, rows)
        if node.func == "log":
            bad = ~(a > 0)
            if np.any(bad):
                raise EvaluationError(f"log of a non-positive value in {to_source(node)}", _first_bad(bad, rows))
            return np.log(a)
        if node.func == "sqrt":
            bad = ~(a >= 0)
            if np.any(bad):
                raise EvaluationError(f"sqrt of a negative value in {to_source(node)}", _first_bad(bad, rows))
            return np.sqrt(a)
        if node.func == "exp":
            return np.exp(a)
        return np.abs(a)
    a = _eval(node.left, X, rows)
    b = _eval(node.right, X, rows)
    if node.op == "+":
        return a + b
    if node.op == "-":
        return a - b
    if node.op == "*":
        return a * b
    if node.op == "/":
        bad = b == 0
        if np.any(bad):
            raise EvaluationError(f"division by zero in {to_source(node)}", _first_bad(bad, rows))
        return a / b
    out = np.power(a, b)
    bad = np.isnan(out) & ~np.isnan(a) & ~np.isnan(b)
    if np.any(bad):
        raise EvaluationError(f"undefined power in {to_source(node)}", _first_bad(bad, rows))
    return out


@dataclass(frozen=True)
class FunctionalExpr:
    source: str
    ast: Node
    M: int

    def evaluate(self, thetas, rows=None) -> np.ndarray:
        """Evaluate on each row of ``thetas``; ``rows`` labels rows in error messages."""
        X = np.atleast_2d(np.asarray(thetas, dtype=float))
        if X.shape[1] != self.M:
            raise IndexOutOfRangeError(f"expression bound to M={self.M}, got {X.shape[1]} columns")
        with np.errstate(all="ignore"):
            return _eval(self.ast, X, rows)

    def __call__(self, theta) -> float:
        return float(self.evaluate(np.asarray(theta, dtype=float)[None, :])[0])

    def pretty(self) -> str:
        return to_source(self.ast)


def parse_functional(source: str, M: int) -> FunctionalExpr:
    ast = parse(source)
    bad = sorted(i for i in variables(ast) if i > M)
    if bad:
        raise IndexOutOfRangeError(f"variable t{bad[0]} is out of range for M={M}")
    return FunctionalExpr(source, ast, M)
