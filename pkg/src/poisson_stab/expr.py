"""Scalar-field expressions: parsing, printing, evaluation and exact derivatives.

Hamiltonians, Casimirs and bracket generators all enter the library as text
in a small closed grammar (see ``docs/grammar.ebnf``)::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := ("-" | "+") unary | power
    power  := atom ("^" unary)?
    atom   := number | name | func "(" expr ")" | "(" expr ")"

``^`` binds tightest and is right-associative; unary minus sits below ``*``
so ``-x^2`` is ``-(x^2)``. Derivatives are carried by second-order jets
(value, gradient, Hessian), never by differencing.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import ArityError, DimensionMismatch, DomainError, ExprSyntaxError, UnknownIdentifier

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt")
CONSTANTS = {"pi": math.pi}


# --------------------------------------------------------------------------- AST


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    index: int


@dataclass(frozen=True)
class Param:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: object


@dataclass(frozen=True)
class Func:
    name: str
    arg: object


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


def _has_vars(node) -> bool:
    if isinstance(node, Var):
        return True
    if isinstance(node, (Neg, Func)):
        return _has_vars(node.arg)
    if isinstance(node, BinOp):
        return _has_vars(node.left) or _has_vars(node.right)
    return False


def _params_in(node, out: set):
    if isinstance(node, Param):
        out.add(node.name)
    elif isinstance(node, (Neg, Func)):
        _params_in(node.arg, out)
    elif isinstance(node, BinOp):
        _params_in(node.left, out)
        _params_in(node.right, out)
    return out


# --------------------------------------------------------------------------- lexer

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>\*\*|[-+*/^(),]))"
)


def _tokenize(source: str):
    tokens = []
    pos = 0
    n = len(source)
    while pos < n:
        if source[pos:].strip() == "":
            break
        m = _TOKEN.match(source, pos)
        if m is None or m.end() == pos:
            bad = pos + (len(source[pos:]) - len(source[pos:].lstrip()))
            raise ExprSyntaxError(f"unexpected character {source[bad]!r}", bad,
                                  ("number", "name", "(", "-", "+"))
        kind = m.lastgroup
        text = m.group(kind)
        start = m.start(kind)
        if text == "**":
            text = "^"
        tokens.append((kind, text, start))
        pos = m.end()
    tokens.append(("eof", "", len(source)))
    return tokens


# --------------------------------------------------------------------------- parser


class _Parser:
    def __init__(self, source, resolve):
        self.tokens = _tokenize(source)
        self.i = 0
        self.resolve = resolve

    @property
    def tok(self):
        return self.tokens[self.i]

    def advance(self):
        t = self.tokens[self.i]
        self.i += 1
        return t

    def expect(self, text, expected):
        kind, t, pos = self.tok
        if t != text or kind != "op":
            raise ExprSyntaxError(f"unexpected {_describe(self.tok)}", pos, expected)
        return self.advance()

    def parse(self):
        node = self.expr()
        kind, text, pos = self.tok
        if kind != "eof":
            raise ExprSyntaxError(f"unexpected {_describe(self.tok)}", pos,
                                  ("+", "-", "*", "/", "^", "end of input"))
        return node

    def expr(self):
        node = self.term()
        while self.tok[0] == "op" and self.tok[1] in "+-":
            op = self.advance()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.tok[0] == "op" and self.tok[1] in "*/":
            op = self.advance()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.tok[0] == "op" and self.tok[1] == "-":
            self.advance()
            return Neg(self.unary())
        if self.tok[0] == "op" and self.tok[1] == "+":
            self.advance()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.tok[0] == "op" and self.tok[1] == "^":
            self.advance()
            return BinOp("^", base, self.unary())
        return base

    def atom(self):
        kind, text, pos = self.tok
        if kind == "num":
            self.advance()
            return Const(float(text))
        if kind == "name":
            self.advance()
            is_call = self.tok[0] == "op" and self.tok[1] == "("
            if text in FUNCTIONS:
                if not is_call:
                    raise ArityError(f"function {text!r} at position {pos} needs one argument")
                self.advance()
                arg = self.expr()
                if self.tok[0] == "op" and self.tok[1] == ",":
                    raise ArityError(f"function {text!r} at position {pos} takes exactly one argument")
                self.expect(")", (")",))
                return Func(text, arg)
            if is_call:
                raise ArityError(f"{text!r} at position {pos} is not a function")
            return self.resolve(text, pos)
        if kind == "op" and text == "(":
            self.advance()
            node = self.expr()
            self.expect(")", (")", "+", "-", "*", "/", "^"))
            return node
        raise ExprSyntaxError(f"unexpected {_describe(self.tok)}", pos,
                              ("number", "name", "(", "-", "+"))


def _describe(tok):
    kind, text, _ = tok
    return "end of input" if kind == "eof" else f"token {text!r}"


def default_names(dim: int) -> tuple[str, ...]:
    return tuple(f"x{i + 1}" for i in range(dim))


# --------------------------------------------------------------------------- printer

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def _prec(node) -> int:
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return 3
    return 5


def to_text(node, names: Sequence[str]) -> str:
    """Print ``node`` so that re-parsing rebuilds the identical tree."""
    if isinstance(node, Const):
        return repr(float(node.value))
    if isinstance(node, Var):
        return names[node.index]
    if isinstance(node, Param):
        return node.name
    if isinstance(node, Func):
        return f"{node.name}({to_text(node.arg, names)})"
    if isinstance(node, Neg):
        inner = to_text(node.arg, names)
        if _prec(node.arg) < 3:
            inner = f"({inner})"
        return f"-{inner}"
    p = _PREC[node.op]
    left = to_text(node.left, names)
    right = to_text(node.right, names)
    if node.op == "^":
        if _prec(node.left) <= 4:
            left = f"({left})"
        if _prec(node.right) < 3:
            right = f"({right})"
    else:
        if _prec(node.left) < p:
            left = f"({left})"
        if _prec(node.right) <= p:
            right = f"({right})"
    return f"{left} {node.op} {right}"


# --------------------------------------------------------------------------- jets


class Jet:
    """Truncated Taylor data of a scalar: value, gradient and (optionally) Hessian."""

    __slots__ = ("v", "g", "h")

    def __init__(self, v, g, h=None):
        self.v = v
        self.g = g
        self.h = h

    def chain(self, f0, f1, f2):
        h = None
        if self.h is not None:
            h = f1 * self.h
            if f2 != 0.0:
                h = h + f2 * np.outer(self.g, self.g)
        return Jet(f0, f1 * self.g, h)

    def __neg__(self):
        return Jet(-self.v, -self.g, None if self.h is None else -self.h)

    def __add__(self, o):
        if isinstance(o, Jet):
            h = None if self.h is None else self.h + o.h
            return Jet(self.v + o.v, self.g + o.g, h)
        return Jet(self.v + o, self.g, self.h)

    __radd__ = __add__

    def __sub__(self, o):
        if isinstance(o, Jet):
            h = None if self.h is None else self.h - o.h
            return Jet(self.v - o.v, self.g - o.g, h)
        return Jet(self.v - o, self.g, self.h)

    def __rsub__(self, o):
        return Jet(o - self.v, -self.g, None if self.h is None else -self.h)

    def __mul__(self, o):
        if isinstance(o, Jet):
            g = self.v * o.g + o.v * self.g
            h = None
            if self.h is not None:
                cross = np.outer(self.g, o.g)
                h = self.v * o.h + o.v * self.h + cross + cross.T
            return Jet(self.v * o.v, g, h)
        return Jet(self.v * o, self.g * o, None if self.h is None else self.h * o)

    __rmul__ = __mul__

    def reciprocal(self):
        v = self.v
        return self.chain(1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v))


def _seed(point, second_order):
    n = len(point)
    eye = np.eye(n)
    zero = np.zeros((n, n)) if second_order else None
    return tuple(Jet(float(point[i]), eye[i], zero) for i in range(n))


# --------------------------------------------------------------------------- compiler

def _fail(msg, node, names):
    raise DomainError(msg, to_text(node, names))


def _float_pow(a, b, node, names):
    if a < 0.0 and b != math.floor(b):
        _fail("negative base with non-integer exponent", node, names)
    if a == 0.0 and b < 0.0:
        _fail("zero raised to a negative power", node, names)
    try:
        return a ** b
    except OverflowError:
        _fail("overflow", node, names)


def _compile_float(node, params, names) -> Callable:
    if isinstance(node, Const):
        v = node.value
        return lambda x: v
    if isinstance(node, Var):
        i = node.index
        return lambda x: x[i]
    if isinstance(node, Param):
        v = float(params[node.name])
        return lambda x: v
    if isinstance(node, Neg):
        a = _compile_float(node.arg, params, names)
        return lambda x: -a(x)
    if isinstance(node, Func):
        a = _compile_float(node.arg, params, names)
        name = node.name
        if name == "sin":
            return lambda x: math.sin(a(x))
        if name == "cos":
            return lambda x: math.cos(a(x))
        if name == "exp":
            def f(x):
                try:
                    return math.exp(a(x))
                except OverflowError:
                    _fail("overflow", node, names)
            return f
        if name == "log":
            def f(x):
                u = a(x)
                if u <= 0.0:
                    _fail("log of non-positive value", node, names)
                return math.log(u)
            return f
        if name == "sqrt":
            def f(x):
                u = a(x)
                if u < 0.0:
                    _fail("sqrt of negative value", node, names)
                return math.sqrt(u)
            return f
        raise AssertionError(name)
    a = _compile_float(node.left, params, names)
    b = _compile_float(node.right, params, names)
    op = node.op
    if op == "+":
        return lambda x: a(x) + b(x)
    if op == "-":
        return lambda x: a(x) - b(x)
    if op == "*":
        return lambda x: a(x) * b(x)
    if op == "/":
        def f(x):
            d = b(x)
            if d == 0.0:
                _fail("division by zero", node, names)
            return a(x) / d
        return f
    return lambda x: _float_pow(a(x), b(x), node, names)


def _compile_jet(node, params, names) -> Callable:
    """Closures over seeded jets; variable-free subtrees stay plain floats."""
    if not _has_vars(node):
        return _compile_float(node, params, names)
    if isinstance(node, Var):
        i = node.index
        return lambda x: x[i]
    if isinstance(node, Neg):
        a = _compile_jet(node.arg, params, names)
        return lambda x: -a(x)
    if isinstance(node, Func):
        a = _compile_jet(node.arg, params, names)
        name = node.name
        if name == "sin":
            def f(x):
                u = a(x)
                s, c = math.sin(u.v), math.cos(u.v)
                return u.chain(s, c, -s)
        elif name == "cos":
            def f(x):
                u = a(x)
                s, c = math.sin(u.v), math.cos(u.v)
                return u.chain(c, -s, -c)
        elif name == "exp":
            def f(x):
                u = a(x)
                try:
                    e = math.exp(u.v)
                except OverflowError:
                    _fail("overflow", node, names)
                return u.chain(e, e, e)
        elif name == "log":
            def f(x):
                u = a(x)
                if u.v <= 0.0:
                    _fail("log of non-positive value", node, names)
                return u.chain(math.log(u.v), 1.0 / u.v, -1.0 / (u.v * u.v))
        else:
            def f(x):
                u = a(x)
                if u.v <= 0.0:
                    _fail("sqrt not differentiable at non-positive value", node, names)
                r = math.sqrt(u.v)
                return u.chain(r, 0.5 / r, -0.25 / (r * u.v))
        return f
    a = _compile_jet(node.left, params, names)
    b = _compile_jet(node.right, params, names)
    op = node.op
    if op == "+":
        return lambda x: a(x) + b(x)
    if op == "-":
        return lambda x: a(x) - b(x)
    if op == "*":
        return lambda x: a(x) * b(x)
    if op == "/":
        right_const = not _has_vars(node.right)

        def f(x):
            d = b(x)
            dv = d if right_const else d.v
            if dv == 0.0:
                _fail("division by zero", node, names)
            if right_const:
                return a(x) * (1.0 / d)
            return a(x) * d.reciprocal()
        return f
    # power
    if not _has_vars(node.right):
        def f(x):
            u = a(x)
            c = b(x)
            v = u.v
            if v < 0.0 and c != math.floor(c):
                _fail("negative base with non-integer exponent", node, names)
            if v == 0.0 and c < 0.0:
                _fail("zero raised to a negative power", node, names)
            if c == 0.0:
                return u.chain(1.0, 0.0, 0.0)
            if v == 0.0 and (c < 1.0 or (u.h is not None and c < 2.0 and c != 1.0)):
                _fail("power not differentiable at zero base", node, names)
            try:
                f0 = v ** c
                f1 = c * v ** (c - 1.0) if c != 1.0 else 1.0
                f2 = c * (c - 1.0) * v ** (c - 2.0) if c not in (1.0, 2.0) else (2.0 if c == 2.0 else 0.0)
            except OverflowError:
                _fail("overflow", node, names)
            return u.chain(f0, f1, f2)
        return f

    def f(x):
        u = a(x)
        e = b(x)
        uv = u.v if isinstance(u, Jet) else u
        if uv <= 0.0:
            _fail("variable exponent requires a positive base", node, names)
        lu = u.chain(math.log(uv), 1.0 / uv, -1.0 / (uv * uv)) if isinstance(u, Jet) else math.log(uv)
        w = e * lu
        try:
            ew = math.exp(w.v)
        except OverflowError:
            _fail("overflow", node, names)
        return w.chain(ew, ew, ew)
    return f


# --------------------------------------------------------------------------- Expression


@dataclass(frozen=True, eq=False)
class Expression:
    """An immutable parsed scalar field on R^dim."""

    ast: object
    dim: int
    params: Mapping[str, float] = field(default_factory=dict)
    names: tuple[str, ...] = ()
    source: str = ""

    def __post_init__(self):
        object.__setattr__(self, "params", dict(self.params))
        if not self.names:
            object.__setattr__(self, "names", default_names(self.dim))

    @cached_property
    def _float_fn(self):
        missing = _params_in(self.ast, set()) - set(self.params)
        if missing:
            raise UnknownIdentifier(sorted(missing)[0], -1)
        return _compile_float(self.ast, self.params, self.names)

    @cached_property
    def _jet_fn(self):
        self._float_fn  # noqa: B018 - validates parameter binding
        return _compile_jet(self.ast, self.params, self.names)

    @cached_property
    def is_constant(self) -> bool:
        return not _has_vars(self.ast)

    def text(self) -> str:
        return to_text(self.ast, self.names)

    def __str__(self):
        return self.text()

    def __repr__(self):
        return f"Expression({self.text()!r}, dim={self.dim})"

    def _check(self, point):
        if len(point) != self.dim:
            raise DimensionMismatch(f"expected a point of length {self.dim}, got {len(point)}")

    def evaluate(self, point) -> float:
        self._check(point)
        return float(self._float_fn(tuple(float(p) for p in point)))

    __call__ = evaluate

    def gradient(self, point):
        """Value and gradient (first-order jets only)."""
        self._check(point)
        out = self._jet_fn(_seed(point, False))
        if not isinstance(out, Jet):
            return float(out), np.zeros(self.dim)
        return float(out.v), np.asarray(out.g, dtype=float)

    def derive(self, point):
        """Value, gradient and symmetric Hessian at ``point``."""
        self._check(point)
        out = self._jet_fn(_seed(point, True))
        if not isinstance(out, Jet):
            return float(out), np.zeros(self.dim), np.zeros((self.dim, self.dim))
        h = np.asarray(out.h, dtype=float)
        return float(out.v), np.asarray(out.g, dtype=float), 0.5 * (h + h.T)

    def with_params(self, **values) -> "Expression":
        merged = dict(self.params)
        merged.update(values)
        return Expression(self.ast, self.dim, merged, self.names, self.source)

    def scaled(self, factor: float) -> "Expression":
        return Expression(BinOp("*", Const(float(factor)), self.ast), self.dim,
                          self.params, self.names)

    def __add__(self, other: "Expression") -> "Expression":
        return _combine("+", self, other)

    def __mul__(self, other: "Expression") -> "Expression":
        return _combine("*", self, other)

    def power(self, k: int) -> "Expression":
        return Expression(BinOp("^", self.ast, Const(float(k))), self.dim, self.params, self.names)


def _combine(op, a: Expression, b: Expression) -> Expression:
    if a.dim != b.dim:
        raise DimensionMismatch("expressions live on different dimensions")
    params = dict(a.params)
    params.update(b.params)
    return Expression(BinOp(op, a.ast, b.ast), a.dim, params, a.names)


def parse(source: str, dim: int, params: Mapping[str, float] | None = None,
          names: Sequence[str] | None = None) -> Expression:
    """Parse ``source`` into an Expression on R^dim.

    Variables are ``x1..xn``; for ``dim <= 3`` the aliases ``x, y, z`` are also
    accepted. Passing ``names`` replaces the default variable names.
    """
    params = dict(params or {})
    if names is not None:
        names = tuple(names)
        if len(names) != dim:
            raise DimensionMismatch(f"{len(names)} variable names for dimension {dim}")
        lookup = {n: i for i, n in enumerate(names)}
    else:
        names = default_names(dim)
        lookup = {n: i for i, n in enumerate(names)}
        if dim <= 3:
            for i, alias in enumerate("xyz"[:dim]):
                lookup.setdefault(alias, i)

    def resolve(name, pos):
        if name in lookup:
            return Var(lookup[name])
        if name in params:
            return Param(name)
        if name in CONSTANTS:
            return Const(CONSTANTS[name])
        raise UnknownIdentifier(name, pos)

    ast = _Parser(source, resolve).parse()
    return Expression(ast, dim, params, names, source)


def evaluate(e: Expression, point) -> float:
    return e.evaluate(point)


def derive(e: Expression, point):
    return e.derive(point)
