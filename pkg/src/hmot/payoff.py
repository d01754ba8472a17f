"""A small arithmetic language for path-dependent payoffs.

Grammar (whitespace-insensitive, usual precedence, unary minus binds tightest)::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := "-" unary | atom
    atom   := NUMBER | "S" INDEX | FUNC "(" expr ("," expr)* ")" | "(" expr ")"
    FUNC   := pos | abs | max | min

``S1`` is the first time point.  ``pos(x) = max(x, 0)``.  Example: the forward
start call ``pos(S9 - S8)``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .exceptions import InputError, PayoffEvaluationError, PayoffSyntaxError

_FUNCS = {"pos": 1, "abs": 1, "max": 2, "min": 2}


class Expr:
    """Base class of payoff AST nodes."""

    def evaluate(self, paths):
        return evaluate(self, paths)

    def __str__(self):
        return to_string(self)

    def max_coord(self) -> int:
        return max((c.max_coord() for c in self.children()), default=0)

    def children(self):
        return ()


@dataclass(frozen=True)
class Num(Expr):
    value: float


@dataclass(frozen=True)
class Coord(Expr):
    index: int  # 1-based

    def max_coord(self):
        return self.index


@dataclass(frozen=True)
class Neg(Expr):
    operand: Expr

    def children(self):
        return (self.operand,)


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True)
class Call(Expr):
    name: str
    args: tuple

    def children(self):
        return self.args


_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<coord>S(?P<idx>\d+))
  | (?P<name>[A-Za-z_]\w*)
  | (?P<op>[-+*/(),])
    """,
    re.VERBOSE,
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise PayoffSyntaxError(f"unexpected character {text[pos]!r}", _byte_offset(text, pos))
        kind = m.lastgroup if m.lastgroup != "idx" else "coord"
        if m.group("coord") is not None and not _is_word_end(text, m.end()):
            kind = "name"
            m = re.compile(r"[A-Za-z_]\w*").match(text, pos)
        if kind != "ws":
            tokens.append((kind, m.group(0), pos))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


def _is_word_end(text, i):
    return i >= len(text) or not (text[i].isalnum() or text[i] == "_")


def _byte_offset(text, pos):
    return len(text[:pos].encode("utf-8"))


class _Parser:
    def __init__(self, text, n_coords):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.n_coords = n_coords

    def peek(self):
        return self.tokens[self.i]

    def take(self, value=None):
        tok = self.tokens[self.i]
        if value is not None and tok[1] != value:
            self.fail(f"expected {value!r}", tok)
        self.i += 1
        return tok

    def fail(self, msg, tok):
        found = "end of input" if tok[0] == "end" else repr(tok[1])
        raise PayoffSyntaxError(f"{msg}, found {found}", _byte_offset(self.text, tok[2]))

    def parse(self):
        node = self.expr()
        if self.peek()[0] != "end":
            self.fail("unexpected token", self.peek())
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
        if self.peek() [:2] == ("op", "-"):
            self.take()
            return Neg(self.unary())
        return self.atom()

    def atom(self):
        kind, text, pos = tok = self.peek()
        if kind == "num":
            self.take()
            return Num(float(text))
        if kind == "coord":
            self.take()
            k = int(text[1:])
            if k < 1 or (self.n_coords is not None and k > self.n_coords):
                limit = f"1..{self.n_coords}" if self.n_coords is not None else ">= 1"
                raise InputError(
                    f"coordinate {text} out of range {limit} (at byte offset {_byte_offset(self.text, pos)})"
                )
            return Coord(k)
        if kind == "name":
            if text not in _FUNCS:
                self.fail("unknown function", tok)
            self.take()
            self.take("(")
            args = [self.expr()]
            while self.peek()[1] == ",":
                self.take()
                args.append(self.expr())
            self.take(")")
            if len(args) != _FUNCS[text]:
                raise PayoffSyntaxError(
                    f"{text} takes {_FUNCS[text]} argument(s), got {len(args)}", _byte_offset(self.text, pos)
                )
            return Call(text, tuple(args))
        if text == "(":
            self.take()
            node = self.expr()
            self.take(")")
            return node
        self.fail("expected a number, coordinate, function or '('", tok)


def parse_payoff(text: str, n_coords: int | None = None) -> Expr:
    """Parse payoff source into an AST.

    Raises:
        PayoffSyntaxError: malformed input; carries the byte offset.
        InputError: a coordinate ``S<k>`` outside ``1..n_coords``.
    """
    return _Parser(text, n_coords).parse()


def to_string(node: Expr) -> str:
    """Fully parenthesized source text; ``parse_payoff(to_string(e)) == e``."""
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Coord):
        return f"S{node.index}"
    if isinstance(node, Neg):
        return f"-{_wrap(node.operand)}"
    if isinstance(node, BinOp):
        return f"({to_string(node.left)} {node.op} {to_string(node.right)})"
    if isinstance(node, Call):
        return f"{node.name}({', '.join(to_string(a) for a in node.args)})"
    raise TypeError(f"not a payoff node: {node!r}")


def _wrap(node):
    s = to_string(node)
    return s if isinstance(node, (Coord, Call, BinOp)) else f"({s})"


def evaluate(node: Expr, paths) -> np.ndarray | float:
    """Evaluate on one path (1-d) or a batch of paths (rows of a 2-d array)."""
    arr = np.asarray(paths, dtype=float)
    single = arr.ndim == 1
    batch = arr.reshape(1, -1) if single else arr
    if node.max_coord() > batch.shape[1]:
        raise InputError(f"payoff references S{node.max_coord()} but paths have {batch.shape[1]} coordinates")
    out = _eval(node, batch)
    out = np.broadcast_to(out, (batch.shape[0],)).astype(float)
    return float(out[0]) if single else out


def eval_payoff(expr: Expr, path) -> float:
    return evaluate(expr, np.asarray(path, dtype=float).reshape(-1))


def _eval(node, paths):
    if isinstance(node, Num):
        return np.float64(node.value)
    if isinstance(node, Coord):
        return paths[:, node.index - 1]
    if isinstance(node, Neg):
        return -_eval(node.operand, paths)
    if isinstance(node, BinOp):
        a = _eval(node.left, paths)
        b = _eval(node.right, paths)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if np.any(np.asarray(b) == 0):
            raise PayoffEvaluationError(f"division by zero in {to_string(node)}")
        return a / b
    if isinstance(node, Call):
        args = [_eval(a, paths) for a in node.args]
        if node.name == "pos":
            return np.maximum(args[0], 0.0)
        if node.name == "abs":
            return np.abs(args[0])
        if node.name == "max":
            return np.maximum(args[0], args[1])
        return np.minimum(args[0], args[1])
    raise TypeError(f"not a payoff node: {node!r}")


def shift_coords(node: Expr, offset: int) -> Expr:
    """Renumber every ``S<k>`` to ``S<k - offset>`` (drop the first ``offset`` times).

    Raises:
        InputError: a coordinate would fall below ``S1``.
    """
    if isinstance(node, Num):
        return node
    if isinstance(node, Coord):
        if node.index - offset < 1:
            raise InputError(f"S{node.index} is not among the retained time points")
        return Coord(node.index - offset)
    if isinstance(node, Neg):
        return Neg(shift_coords(node.operand, offset))
    if isinstance(node, BinOp):
        return BinOp(node.op, shift_coords(node.left, offset), shift_coords(node.right, offset))
    if isinstance(node, Call):
        return Call(node.name, tuple(shift_coords(a, offset) for a in node.args))
    raise TypeError(f"not a payoff node: {node!r}")
