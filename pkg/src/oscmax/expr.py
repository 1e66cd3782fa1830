"""A small arithmetic expression language over the coordinates x1..xn.

Grammar (see docs/grammar.md)::

    expr  = term  { ("+" | "-") term } ;
    term  = power { ("*" | "/") power } ;
    power = unary [ "^" power ] ;
    unary = "-" unary | atom ;
    atom  = number | name | name "(" expr { "," expr } ")" | "(" expr ")" ;

Evaluation is vectorised over numpy arrays. Invalid operations (log of a
non-positive number, 0/0, sqrt of a negative) produce non-finite values that
the grid constructor rejects; they never pass through silently.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np


class ExprError(ValueError):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} at byte {offset}")


class ExprNameError(ExprError):
    pass


class ExprArityError(ExprError):
    pass


# -- AST -----------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Const:
    name: str


@dataclass(frozen=True)
class Var:
    index: int  # zero-based axis


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class Bin:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    fn: str
    args: tuple


Node = Union[Num, Const, Var, Neg, Bin, Call]

CONSTANTS = {"pi": math.pi, "e": math.e}
ALIASES = {"x": 0, "y": 1, "z": 2}


def _log(t):
    t = np.asarray(t, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(t > 0, np.log(np.where(t > 0, t, 1.0)), np.where(t == 0, -np.inf, np.nan))


def _sqrt(t):
    with np.errstate(invalid="ignore"):
        return np.sqrt(t)


FUNCTIONS = {
    "abs": (1, np.abs),
    "log": (1, _log),
    "exp": (1, np.exp),
    "sqrt": (1, _sqrt),
    "min": (2, np.minimum),
    "max": (2, np.maximum),
}

# -- tokenizer -----------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),]))"
)


def _tokens(src: str):
    pos = 0
    out = []
    while pos < len(src):
        if src[pos:].strip() == "":
            break
        m = _TOKEN.match(src, pos)
        if not m:
            start = pos + (len(src[pos:]) - len(src[pos:].lstrip()))
            raise ExprSyntaxError(f"unexpected character {src[start]!r}", _byte(src, start))
        kind = m.lastgroup
        out.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    out.append(("end", "", len(src)))
    return out


def _byte(src: str, i: int) -> int:
    return len(src[:i].encode("utf-8"))


class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.toks = _tokens(src)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def fail(self, msg, tok=None):
        tok = tok or self.peek()
        raise ExprSyntaxError(msg, _byte(self.src, tok[2]))

    def expect(self, text):
        tok = self.peek()
        if tok[1] != text or tok[0] != "op":
            self.fail(f"expected {text!r}, found {tok[1] or 'end of input'!r}")
        return self.take()

    def parse(self) -> Node:
        node = self.expr()
        if self.peek()[0] != "end":
            self.fail(f"unexpected {self.peek()[1]!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            node = Bin(op, node, self.term())
        return node

    def term(self):
        node = self.power()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            node = Bin(op, node, self.power())
        return node

    def power(self):
        base = self.unary()
        if self.peek()[:2] == ("op", "^"):
            self.take()
            return Bin("^", base, self.power())
        return base

    def unary(self):
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return Neg(self.unary())
        return self.atom()

    def atom(self):
        kind, text, _ = tok = self.take()
        if kind == "num":
            return Num(float(text))
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        if kind == "name":
            if self.peek()[:2] == ("op", "("):
                return self.call(tok)
            if text in FUNCTIONS:
                self.fail(f"function {text!r} needs arguments", tok)
            return _name(text, tok, self)
        self.fail(f"unexpected {text or 'end of input'!r}", tok)

    def call(self, tok):
        name = tok[1]
        if name not in FUNCTIONS:
            raise ExprNameError(f"unknown function {name!r} at byte {_byte(self.src, tok[2])}")
        self.expect("(")
        args = [self.expr()]
        while self.peek()[:2] == ("op", ","):
            self.take()
            args.append(self.expr())
        self.expect(")")
        want = FUNCTIONS[name][0]
        if len(args) != want:
            raise ExprArityError(f"{name} takes {want} argument(s), got {len(args)}")
        return Call(name, tuple(args))


def _name(text, tok, parser):
    if text in CONSTANTS:
        return Const(text)
    if text in ALIASES:
        return Var(ALIASES[text])
    m = re.fullmatch(r"x([1-9]\d*)", text)
    if m:
        return Var(int(m.group(1)) - 1)
    raise ExprNameError(f"unknown identifier {text!r} at byte {_byte(parser.src, tok[2])}")


# -- public API ----------------------------------------------------------------


class Expr:
    """A parsed expression; immutable and safe to evaluate from many threads."""

    __slots__ = ("root", "source")

    def __init__(self, root: Node, source: str | None = None):
        self.root = root
        self.source = source

    @property
    def arity(self) -> int:
        """Number of coordinates the expression reads (highest variable index + 1)."""
        return _arity(self.root)

    def __call__(self, *coords):
        with np.errstate(all="ignore"):
            return np.asarray(_eval(self.root, coords), dtype=np.float64)

    def __eq__(self, other):
        return isinstance(other, Expr) and self.root == other.root

    def __hash__(self):
        return hash(self.root)

    def __str__(self):
        return pretty(self.root)

    def __repr__(self):
        return f"Expr({pretty(self.root)!r})"


def parse(src: str) -> Expr:
    return Expr(_Parser(src).parse(), src)


def _arity(node) -> int:
    if isinstance(node, Var):
        return node.index + 1
    if isinstance(node, Neg):
        return _arity(node.arg)
    if isinstance(node, Bin):
        return max(_arity(node.left), _arity(node.right))
    if isinstance(node, Call):
        return max(_arity(a) for a in node.args)
    return 0


def _eval(node, coords):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Const):
        return CONSTANTS[node.name]
    if isinstance(node, Var):
        if node.index >= len(coords):
            raise ExprArityError(f"x{node.index + 1} used but only {len(coords)} coordinate(s) given")
        return coords[node.index]
    if isinstance(node, Neg):
        return -_eval(node.arg, coords)
    if isinstance(node, Call):
        return FUNCTIONS[node.fn][1](*(_eval(a, coords) for a in node.args))
    a = _eval(node.left, coords)
    b = _eval(node.right, coords)
    if node.op == "+":
        return a + b
    if node.op == "-":
        return a - b
    if node.op == "*":
        return a * b
    if node.op == "/":
        return np.divide(a, b)
    return np.power(np.asarray(a, dtype=np.float64), b)


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 3}


def _prec(node) -> int:
    if isinstance(node, Bin):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return 4
    return 5


def pretty(node: Node) -> str:
    """Print with the fewest parentheses that reparse to the same tree."""
    if isinstance(node, Num):
        return repr(node.value) if node.value != int(node.value) or abs(node.value) >= 1e16 else str(int(node.value))
    if isinstance(node, Const):
        return node.name
    if isinstance(node, Var):
        return f"x{node.index + 1}"
    if isinstance(node, Call):
        return f"{node.fn}({', '.join(pretty(a) for a in node.args)})"
    if isinstance(node, Neg):
        inner = pretty(node.arg)
        return f"-({inner})" if isinstance(node.arg, Bin) else f"-{inner}"
    p = _PREC[node.op]
    left, right = pretty(node.left), pretty(node.right)
    if node.op == "^":
        if _prec(node.left) <= p:
            left = f"({left})"
        if _prec(node.right) < p:
            right = f"({right})"
        return f"{left}^{right}"
    if _prec(node.left) < p:
        left = f"({left})"
    if _prec(node.right) <= p:
        right = f"({right})"
    return f"{left} {node.op} {right}"
