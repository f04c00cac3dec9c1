"""Expression language for user Finsler functions and projective factors.

Grammar::

    expr     := term { ("+" | "-") term }
    term     := unary { ("*" | "/") unary }
    unary    := "-" unary | power
    power    := atom [ "^" exponent ]
    exponent := [ "-" ] integer [ "^" exponent ]
    atom     := number | ident | "sqrt" "(" expr ")" | "(" expr ")"
    ident    := "x" digits | "y" digits | "F"

so ``-y1^2`` is ``-(y1^2)``, ``a^2^3`` is ``a^8`` and ``a^-1^2`` is ``a^-(1^2)``.  Expressions compile to
:class:`~funkspray.jets.ScalarField` objects evaluated over jet arithmetic.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import ClassVar, Optional

import numpy as np

from .errors import CompileError, DomainError, ParseError
from .jets import ScalarField, sqrt as jet_sqrt


class Node:
    prec: ClassVar[int] = 5


@dataclass(frozen=True)
class Num(Node):
    value: float

    def __repr__(self):
        return f"Num({self.value:g})"


@dataclass(frozen=True)
class Var(Node):
    kind: str  # "x" or "y"
    index: int  # 1-based

    def __repr__(self):
        return f"Var({self.kind}{self.index})"


@dataclass(frozen=True)
class FRef(Node):
    def __repr__(self):
        return "F"


@dataclass(frozen=True)
class Neg(Node):
    operand: Node
    prec: ClassVar[int] = 3


@dataclass(frozen=True)
class BinOp(Node):
    left: Node
    right: Node
    op: ClassVar[str] = "?"


@dataclass(frozen=True)
class Add(BinOp):
    op: ClassVar[str] = "+"
    prec: ClassVar[int] = 1


@dataclass(frozen=True)
class Sub(BinOp):
    op: ClassVar[str] = "-"
    prec: ClassVar[int] = 1


@dataclass(frozen=True)
class Mul(BinOp):
    op: ClassVar[str] = "*"
    prec: ClassVar[int] = 2


@dataclass(frozen=True)
class Div(BinOp):
    op: ClassVar[str] = "/"
    prec: ClassVar[int] = 2


@dataclass(frozen=True)
class Pow(Node):
    base: Node
    exponent: int
    prec: ClassVar[int] = 4


@dataclass(frozen=True)
class Sqrt(Node):
    arg: Node


_BINOPS = {"+": Add, "-": Sub, "*": Mul, "/": Div}

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>[-+*/^()]))"
)


@dataclass(frozen=True)
class _Tok:
    kind: str  # num, ident, op, end
    text: str
    offset: int


def _tokenize(source: str) -> list:
    toks = []
    pos = 0
    while True:
        m = _TOKEN.match(source, pos)
        if m is None:
            rest = source[pos:]
            if not rest.strip():
                break
            bad = pos + len(rest) - len(rest.lstrip())
            raise ParseError(f"unexpected character {source[bad]!r}", _byte(source, bad), source)
        kind = m.lastgroup
        toks.append(_Tok(kind, m.group(kind), m.start(kind)))
        pos = m.end()
    toks.append(_Tok("end", "", len(source)))
    return toks


def _byte(source: str, char_offset: int) -> int:
    return len(source[:char_offset].encode("utf-8"))


class _Parser:
    def __init__(self, source: str, n: int, allow_F: bool):
        self.source = source
        self.n = n
        self.allow_F = allow_F
        self.toks = _tokenize(source)
        self.i = 0
        self.depth = 0

    def error(self, msg: str, tok: Optional[_Tok] = None):
        tok = tok or self.peek()
        return ParseError(msg, _byte(self.source, tok.offset), self.source)

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def next(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def accept(self, text: str) -> bool:
        tok = self.peek()
        if tok.kind == "op" and tok.text == text:
            self.i += 1
            return True
        return False

    def parse(self) -> Node:
        node = self.expr()
        tok = self.peek()
        if tok.kind != "end":
            if tok.text == ")":
                raise self.error("unbalanced parentheses: unexpected ')'", tok)
            raise self.error(f"unexpected token {tok.text!r}", tok)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek().kind == "op" and self.peek().text in "+-":
            op = self.next().text
            node = _BINOPS[op](node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.peek().kind == "op" and self.peek().text in "*/":
            op = self.next().text
            node = _BINOPS[op](node, self.unary())
        return node

    def unary(self) -> Node:
        if self.accept("-"):
            return Neg(self.unary())
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.accept("^"):
            return Pow(base, self.exponent())
        return base

    def exponent(self) -> int:
        sign = -1 if self.accept("-") else 1
        tok = self.next()
        if tok.kind != "num" or not tok.text.isdigit():
            raise self.error("exponent must be an integer literal", tok)
        k = int(tok.text)
        if self.accept("^"):
            inner = self.exponent()
            if inner < 0:
                raise self.error("exponent must be an integer literal", tok)
            k = k**inner
        return sign * k

    def atom(self) -> Node:
        tok = self.next()
        if tok.kind == "num":
            return Num(float(tok.text))
        if tok.kind == "ident":
            return self.ident(tok)
        if tok.kind == "op" and tok.text == "(":
            node = self.group(tok)
            return node
        if tok.kind == "end":
            raise self.error("unexpected end of input", tok)
        if tok.text == ")":
            raise self.error("unbalanced parentheses: unexpected ')'", tok)
        raise self.error(f"unexpected token {tok.text!r}", tok)

    def group(self, open_tok: _Tok) -> Node:
        if self.peek().kind == "op" and self.peek().text == ")":
            raise self.error("empty argument", self.peek())
        node = self.expr()
        if not self.accept(")"):
            raise self.error("unbalanced parentheses: missing ')'", open_tok)
        return node

    def ident(self, tok: _Tok) -> Node:
        name = tok.text
        if name == "sqrt":
            open_tok = self.peek()
            if not self.accept("("):
                raise self.error("expected '(' after sqrt")
            return Sqrt(self.group(open_tok))
        if name == "F":
            if not self.allow_F:
                raise self.error("F not allowed here", tok)
            return FRef()
        if name[0] in "xy" and name[1:].isdigit():
            k = int(name[1:])
            if not 1 <= k <= self.n:
                raise self.error(f"index out of range: {name} (n = {self.n})", tok)
            return Var(name[0], k)
        raise self.error(f"unknown identifier {name!r}", tok)


def parse(source: str, n: int = 2, allow_F: bool = False) -> Node:
    """Parse ``source`` into an AST for dimension ``n``."""
    if not source or not source.strip():
        raise ParseError("empty expression", 0, source or "")
    return _Parser(source, n, allow_F).parse()


# printing -------------------------------------------------------------------

def _fmt_num(v: float) -> str:
    if float(v).is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def _node_prec(node: Node) -> int:
    if isinstance(node, Num) and node.value < 0:
        return Neg.prec
    return node.prec


def pretty(node: Node) -> str:
    """Render with the minimal parentheses needed to parse back to the same tree."""

    def wrap(child: Node, min_prec: int) -> str:
        s = pretty(child)
        return f"({s})" if _node_prec(child) < min_prec else s

    if isinstance(node, Num):
        return _fmt_num(node.value)
    if isinstance(node, Var):
        return f"{node.kind}{node.index}"
    if isinstance(node, FRef):
        return "F"
    if isinstance(node, Neg):
        return "-" + wrap(node.operand, Neg.prec)
    if isinstance(node, (Add, Sub)):
        return f"{wrap(node.left, 1)} {node.op} {wrap(node.right, 2)}"
    if isinstance(node, (Mul, Div)):
        return f"{wrap(node.left, 2)}{node.op}{wrap(node.right, 3)}"
    if isinstance(node, Pow):
        return f"{wrap(node.base, 5)}^{node.exponent}"
    if isinstance(node, Sqrt):
        return f"sqrt({pretty(node.arg)})"
    raise TypeError(f"not an expression node: {node!r}")


def mentions_F(node: Node) -> bool:
    if isinstance(node, FRef):
        return True
    if isinstance(node, Neg):
        return mentions_F(node.operand)
    if isinstance(node, BinOp):
        return mentions_F(node.left) or mentions_F(node.right)
    if isinstance(node, Pow):
        return mentions_F(node.base)
    if isinstance(node, Sqrt):
        return mentions_F(node.arg)
    return False


def free_vars(node: Node) -> set:
    """Set of ``(kind, index)`` pairs for the coordinates an expression uses."""
    if isinstance(node, Var):
        return {(node.kind, node.index)}
    if isinstance(node, Neg):
        return free_vars(node.operand)
    if isinstance(node, BinOp):
        return free_vars(node.left) | free_vars(node.right)
    if isinstance(node, Pow):
        return free_vars(node.base)
    if isinstance(node, Sqrt):
        return free_vars(node.arg)
    return set()


# evaluation -------------------------------------------------------------------

def _pow(base, k: int):
    if hasattr(base, "reciprocal"):
        return base**k
    base = np.asarray(base, dtype=float)
    if k < 0 and np.any(base == 0):
        raise DomainError("zero raised to a negative power")
    return base ** float(k)


def _div(a, b):
    if not hasattr(b, "reciprocal"):
        b = np.asarray(b, dtype=float)
        if np.any(b == 0):
            raise DomainError("division by zero")
    return a / b


def _eval_jet(node: Node, xs, ys, binding):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return (xs if node.kind == "x" else ys)[node.index - 1]
    if isinstance(node, FRef):
        return binding(xs, ys)
    if isinstance(node, Neg):
        return -_eval_jet(node.operand, xs, ys, binding)
    if isinstance(node, Add):
        return _eval_jet(node.left, xs, ys, binding) + _eval_jet(node.right, xs, ys, binding)
    if isinstance(node, Sub):
        return _eval_jet(node.left, xs, ys, binding) - _eval_jet(node.right, xs, ys, binding)
    if isinstance(node, Mul):
        return _eval_jet(node.left, xs, ys, binding) * _eval_jet(node.right, xs, ys, binding)
    if isinstance(node, Div):
        return _div(_eval_jet(node.left, xs, ys, binding), _eval_jet(node.right, xs, ys, binding))
    if isinstance(node, Pow):
        return _pow(_eval_jet(node.base, xs, ys, binding), node.exponent)
    if isinstance(node, Sqrt):
        return jet_sqrt(_eval_jet(node.arg, xs, ys, binding))
    raise TypeError(f"not an expression node: {node!r}")


def evaluate(node: Node, x, y, binding: Optional[ScalarField] = None):
    """Plain floating-point evaluation; returns ``(value, valid_mask)``.

    Invalid points (zero denominators, non-positive sqrt arguments, points
    outside the binding's domain) are flagged rather than raising.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    shape = x.shape[:-1]
    ok = np.ones(shape, dtype=bool)

    def ev(nd):
        nonlocal ok
        if isinstance(nd, Num):
            return np.full(shape, nd.value)
        if isinstance(nd, Var):
            return (x if nd.kind == "x" else y)[..., nd.index - 1]
        if isinstance(nd, FRef):
            if binding is None:
                raise CompileError("expression mentions F but no Finsler function is bound")
            from .jets import PhasePoint, jet_eval

            mask = np.asarray(binding.in_domain(PhasePoint(x, y)), dtype=bool) if binding.domain else ok
            ok = ok & mask
            xx = np.where(ok[..., None], x, 0.0)
            yy = np.where(ok[..., None], y, 1.0)
            return np.where(ok, jet_eval(binding, PhasePoint(xx, yy), 0).value, np.nan)
        if isinstance(nd, Neg):
            return -ev(nd.operand)
        if isinstance(nd, Div):
            a, b = ev(nd.left), ev(nd.right)
            ok = ok & (b != 0)
            with np.errstate(all="ignore"):
                return a / b
        if isinstance(nd, BinOp):
            a, b = ev(nd.left), ev(nd.right)
            return {"+": np.add, "-": np.subtract, "*": np.multiply}[nd.op](a, b)
        if isinstance(nd, Pow):
            b = ev(nd.base)
            if nd.exponent < 0:
                ok = ok & (b != 0)
            with np.errstate(all="ignore"):
                return b ** float(nd.exponent)
        if isinstance(nd, Sqrt):
            a = ev(nd.arg)
            ok = ok & (a > 0)
            with np.errstate(all="ignore"):
                return np.sqrt(a)
        raise TypeError(f"not an expression node: {nd!r}")

    value = ev(node)
    ok = ok & np.isfinite(value)
    return value, ok


def compile(
    ast: Node,
    binding: Optional[ScalarField] = None,
    *,
    n: Optional[int] = None,
    degree: Optional[int] = None,
    name: Optional[str] = None,
) -> ScalarField:
    """Turn an AST into a jet-evaluable :class:`ScalarField`."""
    if mentions_F(ast) and binding is None:
        raise CompileError("expression mentions F but no Finsler function is bound")

    def fn(xs, ys):
        return _eval_jet(ast, xs, ys, binding)

    def domain(x, y):
        return evaluate(ast, x, y, binding)[1]

    return ScalarField(fn, degree, domain, name or pretty(ast), n)
