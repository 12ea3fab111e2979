"""Closed-form complex expressions: tokenizer, recursive-descent parser, evaluators.

Grammar (``^`` binds tightest and is right-associative; exponents must fold to
an integer constant)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | '+' unary | power
    power  := atom ('^' unary)?
    atom   := NUMBER | NUMBER 'i' | 'z' | 'pi' | 'e'
            | FUNC '(' expr ')' | '(' expr ')'
    FUNC   := 'exp' | 'sin' | 'cos' | 'log'

A real literal followed by ``+``/``-`` and an imaginary literal (``2+3i``) is
folded into a single complex constant.

Two evaluators share every tree: :func:`eval_expr` works on Python scalars
via :mod:`cmath` and reports overflow as :data:`Sentinel.OVERFLOW`, while
:func:`compile_expr` builds a numpy closure for whole arrays, where
non-finite entries simply propagate.
"""

from __future__ import annotations

import cmath
import enum
import functools
import math
import re
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

MAX_POWER = 64

FUNCTIONS = ("exp", "sin", "cos", "log")
NAMED_CONSTANTS = {"pi": math.pi, "e": math.e}
BINARY_OPS = {"add": "+", "sub": "-", "mul": "*", "div": "/"}


class Sentinel(enum.Enum):
    """Marker values for results outside double-precision range."""

    OVERFLOW = "escaped-to-inf-overflow"
    UNDERFLOW = "escaped-to-0-underflow"


ComplexOrSentinel = Union[complex, Sentinel]


class ExprError(ValueError):
    pass


class ExprSyntaxError(ExprError):
    """Malformed expression text; ``offset`` is the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class NonIntegerExponentError(ExprSyntaxError):
    pass


class UnknownIdentifierError(ExprSyntaxError):
    pass


class EvalError(ExprError):
    pass


class DivisionByZeroError(EvalError, ZeroDivisionError):
    pass


class LogOfZeroError(EvalError):
    pass


@dataclass(frozen=True)
class ExprNode:
    """Immutable expression tree node.

    ``kind`` is one of ``var``, ``const``, ``named``, ``add``, ``sub``, ``mul``,
    ``div``, ``pow``, ``neg``, ``exp``, ``sin``, ``cos``, ``log``. ``value`` holds
    the complex constant, the constant name, or the integer exponent of ``pow``.
    """

    kind: str
    children: tuple = ()
    value: object = None

    def __str__(self) -> str:
        return to_string(self)

    def has_var(self) -> bool:
        return self.kind == "var" or any(c.has_var() for c in self.children)

    def substitute(self, replacement: "ExprNode") -> "ExprNode":
        """Return a copy with every occurrence of ``z`` replaced."""
        if self.kind == "var":
            return replacement
        if not self.children:
            return self
        return ExprNode(self.kind, tuple(c.substitute(replacement) for c in self.children), self.value)

    def is_real(self) -> bool:
        """True when every constant in the tree is real (conjugation-symmetric)."""
        if self.kind == "const":
            return complex(self.value).imag == 0.0
        return all(c.is_real() for c in self.children)


# -- constructors -----------------------------------------------------------

VAR = ExprNode("var")


def const(value) -> ExprNode:
    value = complex(value)
    if not (math.isfinite(value.real) and math.isfinite(value.imag)):
        raise ExprError(f"constant must be finite, got {value!r}")
    return ExprNode("const", (), value)


def named(name: str) -> ExprNode:
    if name not in NAMED_CONSTANTS:
        raise ExprError(f"unknown constant {name!r}")
    return ExprNode("named", (), name)


def binary(kind: str, lhs: ExprNode, rhs: ExprNode) -> ExprNode:
    return ExprNode(kind, (lhs, rhs))


def unary(kind: str, child: ExprNode) -> ExprNode:
    return ExprNode(kind, (child,))


def power(base: ExprNode, exponent: int) -> ExprNode:
    if not isinstance(exponent, int) or abs(exponent) > MAX_POWER:
        raise ExprError(f"exponent must be an integer with |n| <= {MAX_POWER}")
    return ExprNode("pow", (base,), exponent)


# -- printing ---------------------------------------------------------------

def _format_const(value: complex) -> str:
    re_, im = value.real, value.imag
    if im == 0.0:
        return repr(re_)
    if re_ == 0.0 and im > 0.0:
        return f"{im!r}i"
    sign = "-" if im < 0 else "+"
    return f"({re_!r}{sign}{abs(im)!r}i)"


def to_string(node: ExprNode) -> str:
    """Fully parenthesized text that re-parses to a structurally equal tree.

    Holds for every tree the parser can produce. Literals cannot carry a
    negative real part, so such constants print as a negation instead.
    """
    kind = node.kind
    if kind == "var":
        return "z"
    if kind == "named":
        return node.value
    if kind == "const":
        return _format_const(node.value)
    if kind in BINARY_OPS:
        lhs, rhs = node.children
        return f"({to_string(lhs)} {BINARY_OPS[kind]} {to_string(rhs)})"
    if kind == "neg":
        return f"(-{to_string(node.children[0])})"
    if kind == "pow":
        return f"({to_string(node.children[0])}^{node.value})"
    return f"{kind}({to_string(node.children[0])})"


# -- tokenizer --------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"(?P<ws>\s+)"
    r"|(?P<imag>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?i(?![A-Za-z0-9_]))"
    r"|(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()])"
)


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    offset: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    # byte offsets, not character offsets
    byte_at = [0]
    for ch in text:
        byte_at.append(byte_at[-1] + len(ch.encode("utf-8")))
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", byte_at[pos])
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(_Token(kind, m.group(), byte_at[pos]))
        pos = m.end()
    tokens.append(_Token("end", "", byte_at[len(text)]))
    return tokens


# -- parser -----------------------------------------------------------------

def _is_real_literal(node: ExprNode) -> bool:
    return node.kind == "const" and node.value.imag == 0.0


def _is_imag_literal(node: ExprNode) -> bool:
    return node.kind == "const" and node.value.real == 0.0 and node.value.imag != 0.0


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def take(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> _Token:
        tok = self.peek()
        if tok.text != text or tok.kind not in ("op",):
            found = tok.text or "end of input"
            raise ExprSyntaxError(f"expected {text!r}, found {found!r}", tok.offset)
        return self.take()

    def parse(self) -> ExprNode:
        node = self.expr()
        tok = self.peek()
        if tok.kind != "end":
            raise ExprSyntaxError(f"unexpected {tok.text!r}", tok.offset)
        return node

    def expr(self) -> ExprNode:
        node = self.term()
        while self.peek().kind == "op" and self.peek().text in "+-":
            op = self.take().text
            rhs = self.term()
            if _is_real_literal(node) and _is_imag_literal(rhs):
                node = const(node.value + rhs.value if op == "+" else node.value - rhs.value)
            else:
                node = binary("add" if op == "+" else "sub", node, rhs)
        return node

    def term(self) -> ExprNode:
        node = self.unary()
        while self.peek().kind == "op" and self.peek().text in "*/":
            op = self.take().text
            node = binary("mul" if op == "*" else "div", node, self.unary())
        return node

    def unary(self) -> ExprNode:
        tok = self.peek()
        if tok.kind == "op" and tok.text == "-":
            self.take()
            return unary("neg", self.unary())
        if tok.kind == "op" and tok.text == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> ExprNode:
        base = self.atom()
        tok = self.peek()
        if tok.kind == "op" and tok.text == "^":
            self.take()
            exp_offset = self.peek().offset
            exponent = self.unary()
            return power(base, _fold_integer(exponent, exp_offset))
        return base

    def atom(self) -> ExprNode:
        tok = self.take()
        if tok.kind == "num":
            return const(float(tok.text))
        if tok.kind == "imag":
            return const(complex(0.0, float(tok.text[:-1])))
        if tok.kind == "ident":
            if tok.text == "z":
                return VAR
            if tok.text in NAMED_CONSTANTS:
                return named(tok.text)
            if tok.text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return unary(tok.text, arg)
            raise UnknownIdentifierError(f"unknown identifier {tok.text!r}", tok.offset)
        if tok.kind == "op" and tok.text == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = tok.text or "end of input"
        raise ExprSyntaxError(f"unexpected {found!r}", tok.offset)


def _fold_integer(node: ExprNode, offset: int) -> int:
    if node.has_var():
        raise NonIntegerExponentError("exponent must be an integer constant", offset)
    value = eval_expr(node, 0j)
    if isinstance(value, Sentinel) or value.imag != 0.0 or not float(value.real).is_integer():
        raise NonIntegerExponentError("exponent must be an integer constant", offset)
    n = int(value.real)
    if abs(n) > MAX_POWER:
        raise NonIntegerExponentError(f"exponent exceeds {MAX_POWER} in magnitude", offset)
    return n


def parse_expr(text: str) -> ExprNode:
    """Parse ``text`` into an :class:`ExprNode`.

    Raises :class:`ExprSyntaxError` (or one of its subclasses
    :class:`NonIntegerExponentError`, :class:`UnknownIdentifierError`) carrying
    the byte offset of the offending token.
    """
    return _Parser(text).parse()


# -- scalar evaluation --------------------------------------------------------

class _Overflow(Exception):
    pass


def ipow(x, n: int):
    """Integer power by repeated squaring; same operation order for scalars and arrays."""
    if n == 0:
        return x * 0 + 1
    if n < 0:
        return 1 / ipow(x, -n)
    result = None
    base = x
    while n:
        if n & 1:
            result = base if result is None else result * base
        n >>= 1
        if n:
            base = base * base
    return result


def _finite(value: complex) -> complex:
    if not cmath.isfinite(value):
        raise _Overflow
    return value


def _eval(node: ExprNode, z: complex) -> complex:
    kind = node.kind
    if kind == "var":
        return z
    if kind == "const":
        return node.value
    if kind == "named":
        return complex(NAMED_CONSTANTS[node.value])
    if kind in BINARY_OPS:
        a = _eval(node.children[0], z)
        b = _eval(node.children[1], z)
        if kind == "add":
            return _finite(a + b)
        if kind == "sub":
            return _finite(a - b)
        if kind == "mul":
            return _finite(a * b)
        if b == 0:
            raise DivisionByZeroError("division by zero")
        return _finite(a / b)
    a = _eval(node.children[0], z)
    if kind == "neg":
        return -a
    if kind == "pow":
        if a == 0 and node.value < 0:
            raise DivisionByZeroError("negative power of zero")
        try:
            return _finite(complex(ipow(a, node.value)))
        except OverflowError:
            raise _Overflow from None
    if kind == "log":
        if a == 0:
            raise LogOfZeroError("log of zero")
        # +0j turns a -0.0 imaginary part into +0.0, so the cut maps to arg = pi
        return cmath.log(a + 0j)
    try:
        return _finite(getattr(cmath, kind)(a))
    except OverflowError:
        raise _Overflow from None


def eval_expr(node: ExprNode, z) -> ComplexOrSentinel:
    """Evaluate ``node`` at the complex point ``z`` in double precision.

    Returns :data:`Sentinel.OVERFLOW` when an intermediate or final value leaves
    the representable range. Raises :class:`DivisionByZeroError` or
    :class:`LogOfZeroError` for the corresponding singular inputs.
    """
    try:
        return _eval(node, complex(z))
    except _Overflow:
        return Sentinel.OVERFLOW


# -- array evaluation -------------------------------------------------------

_NP_FUNCS = {"exp": np.exp, "sin": np.sin, "cos": np.cos}


def _build(node: ExprNode) -> Callable[[np.ndarray], np.ndarray]:
    kind = node.kind
    if kind == "var":
        return lambda z: z
    if kind in ("const", "named"):
        c = node.value if kind == "const" else complex(NAMED_CONSTANTS[node.value])
        return lambda z: np.full(z.shape, c, dtype=complex)
    if kind in BINARY_OPS:
        fa, fb = (_build(c) for c in node.children)
        op = {"add": np.add, "sub": np.subtract, "mul": np.multiply, "div": np.divide}[kind]
        return lambda z: op(fa(z), fb(z))
    fa = _build(node.children[0])
    if kind == "neg":
        return lambda z: -fa(z)
    if kind == "pow":
        n = node.value
        return lambda z: ipow(fa(z), n)
    if kind == "log":
        return lambda z: np.log(fa(z) + 0j)
    func = _NP_FUNCS[kind]
    return lambda z: func(fa(z))


@functools.lru_cache(maxsize=256)
def compile_expr(node: ExprNode) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorized evaluator for ``node``.

    The returned function maps a complex array to a complex array of the same
    shape. Singular or out-of-range entries come back as inf/nan instead of
    raising; callers decide how to classify them.
    """
    inner = _build(node)

    def evaluate(z):
        z = np.asarray(z, dtype=complex)
        with np.errstate(all="ignore"):
            return inner(z)

    return evaluate
