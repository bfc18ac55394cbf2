"""Scalar expressions over chart coordinates with second-order forward-mode jets.

Expressions are parsed once into an immutable tree and then evaluated on
numpy arrays of points.  Evaluation returns a :class:`Jet2` holding the value,
the three first partials and the six independent second partials, all
propagated exactly through every operation.

Grammar::

    expr   := term { ("+" | "-") term }
    term   := factor { ("*" | "/") factor }
    factor := "-" factor | power
    power  := atom [ "^" factor ]
    atom   := NUMBER | IDENT | FUNC "(" expr ")" | "(" expr ")"

``^`` binds tightest and is right-associative, so ``-x^2`` is ``-(x^2)`` and
``2^3^2`` is ``2^9``.  Exponents must be constant.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

__all__ = [
    "ExprError",
    "ExprSyntaxError",
    "UnknownIdentifierError",
    "ArityError",
    "DomainError",
    "Jet2",
    "Expr",
    "Num",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "parse",
    "eval_jet2",
    "evaluate",
    "to_source",
    "FUNCTIONS",
    "HESS_PAIRS",
]

# packed upper-triangular order of the Hessian: xx, xy, xz, yy, yz, zz
HESS_PAIRS = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))
_HI = np.array([p[0] for p in HESS_PAIRS])
_HJ = np.array([p[1] for p in HESS_PAIRS])


class ExprError(ValueError):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class UnknownIdentifierError(ExprError):
    def __init__(self, name: str, offset: int):
        super().__init__(f"unknown identifier {name!r} (at byte offset {offset})")
        self.name = name
        self.offset = offset


class ArityError(ExprError):
    def __init__(self, name: str, got: int, offset: int):
        super().__init__(f"{name}() takes exactly 1 argument, got {got} (at byte offset {offset})")
        self.offset = offset


class DomainError(ExprError, ArithmeticError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (node at byte offset {offset})")
        self.offset = offset


# ---------------------------------------------------------------------------
# Jets


class Jet2:
    """Value, gradient and packed symmetric Hessian of a scalar field.

    ``val`` has the sample shape ``S``; ``grad`` is ``(3,) + S``; ``hess`` is
    ``(6,) + S`` in :data:`HESS_PAIRS` order.
    """

    __slots__ = ("val", "grad", "hess")

    def __init__(self, val, grad, hess):
        self.val = val
        self.grad = grad
        self.hess = hess

    @classmethod
    def constant(cls, c: float, shape=()) -> "Jet2":
        val = np.full(shape, float(c))
        return cls(val, np.zeros((3,) + tuple(shape)), np.zeros((6,) + tuple(shape)))

    @classmethod
    def variable(cls, x, axis: int) -> "Jet2":
        x = np.asarray(x, dtype=float)
        grad = np.zeros((3,) + x.shape)
        grad[axis] = 1.0
        return cls(x.copy(), grad, np.zeros((6,) + x.shape))

    @property
    def shape(self):
        return np.shape(self.val)

    @property
    def hessian(self) -> np.ndarray:
        """Full ``(3, 3) + S`` symmetric Hessian."""
        out = np.empty((3, 3) + self.shape)
        for q, (i, j) in enumerate(HESS_PAIRS):
            out[i, j] = self.hess[q]
            out[j, i] = self.hess[q]
        return out

    def _outer(self, other: "Jet2") -> np.ndarray:
        # f_i g_j + f_j g_i, packed
        return self.grad[_HI] * other.grad[_HJ] + self.grad[_HJ] * other.grad[_HI]

    def compose(self, f0, f1, f2) -> "Jet2":
        """Chain rule for a unary function with value/derivatives f0, f1, f2 at ``val``."""
        sq = self.grad[_HI] * self.grad[_HJ]
        return Jet2(f0, f1 * self.grad, f1 * self.hess + f2 * sq)

    def __add__(self, other):
        if isinstance(other, Jet2):
            return Jet2(self.val + other.val, self.grad + other.grad, self.hess + other.hess)
        return Jet2(self.val + other, self.grad, self.hess)

    __radd__ = __add__

    def __neg__(self):
        return Jet2(-self.val, -self.grad, -self.hess)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet2):
            return Jet2(
                self.val * other.val,
                self.grad * other.val + self.val * other.grad,
                self.hess * other.val + self.val * other.hess + self._outer(other),
            )
        return Jet2(self.val * other, self.grad * other, self.hess * other)

    __rmul__ = __mul__

    def reciprocal(self) -> "Jet2":
        v = self.val
        return self.compose(1.0 / v, -1.0 / v**2, 2.0 / v**3)

    def __truediv__(self, other):
        if isinstance(other, Jet2):
            return self * other.reciprocal()
        return self * (1.0 / other)

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, c: float):
        c = float(c)
        v = self.val
        if c == 0.0:
            return Jet2.constant(1.0, self.shape)
        if c == 1.0:
            return self
        if c == 2.0:
            return self * self
        return self.compose(v**c, c * v ** (c - 1.0), c * (c - 1.0) * v ** (c - 2.0))

    def exp(self):
        e = np.exp(self.val)
        return self.compose(e, e, e)

    def log(self):
        v = self.val
        return self.compose(np.log(v), 1.0 / v, -1.0 / v**2)

    def sqrt(self):
        r = np.sqrt(self.val)
        return self.compose(r, 0.5 / r, -0.25 / (r * self.val))

    def sin(self):
        s, c = np.sin(self.val), np.cos(self.val)
        return self.compose(s, c, -s)

    def cos(self):
        s, c = np.sin(self.val), np.cos(self.val)
        return self.compose(c, -s, -c)

    def tan(self):
        t = np.tan(self.val)
        d = 1.0 + t * t
        return self.compose(t, d, 2.0 * t * d)

    def sinh(self):
        s, c = np.sinh(self.val), np.cosh(self.val)
        return self.compose(s, c, s)

    def cosh(self):
        s, c = np.sinh(self.val), np.cosh(self.val)
        return self.compose(c, s, c)

    def tanh(self):
        t = np.tanh(self.val)
        d = 1.0 - t * t
        return self.compose(t, d, -2.0 * t * d)

    def abs(self):
        return self.compose(np.abs(self.val), np.sign(self.val), np.zeros_like(self.val))

    def __getitem__(self, idx):
        idx = idx if isinstance(idx, tuple) else (idx,)
        return Jet2(self.val[idx], self.grad[(slice(None),) + idx], self.hess[(slice(None),) + idx])

    def __repr__(self):
        return f"Jet2(val={self.val!r}, grad={self.grad!r}, hess={self.hess!r})"


# ---------------------------------------------------------------------------
# AST


def _require(mask, message, offset):
    if np.any(mask):
        raise DomainError(message, offset)


def _dom_log(x: Jet2, off):
    _require(~(x.val > 0), "log of non-positive argument", off)
    return x.log()


def _dom_sqrt(x: Jet2, off):
    _require(~(x.val > 0), "sqrt of non-positive argument", off)
    return x.sqrt()


def _dom_tan(x: Jet2, off):
    _require(np.abs(np.cos(x.val)) < 1e-300, "tan at a pole", off)
    return x.tan()


FUNCTIONS: Mapping[str, Callable[[Jet2, int], Jet2]] = {
    "sin": lambda x, off: x.sin(),
    "cos": lambda x, off: x.cos(),
    "tan": _dom_tan,
    "exp": lambda x, off: x.exp(),
    "log": _dom_log,
    "sqrt": _dom_sqrt,
    "sinh": lambda x, off: x.sinh(),
    "cosh": lambda x, off: x.cosh(),
    "tanh": lambda x, off: x.tanh(),
    "abs": lambda x, off: x.abs(),
}

_SCALAR_FUNCS = {
    "sin": math.sin, "cos": math.cos, "tan": math.tan, "exp": math.exp,
    "log": math.log, "sqrt": math.sqrt, "sinh": math.sinh, "cosh": math.cosh,
    "tanh": math.tanh, "abs": abs,
}


class Expr:
    """Immutable expression node.  ``pos`` is the byte offset in the source."""

    __slots__ = ()
    pos: int

    def jet(self, coords: Sequence[np.ndarray]) -> Jet2:
        raise NotImplementedError

    def is_constant(self) -> bool:
        raise NotImplementedError

    def variables(self) -> set[str]:
        raise NotImplementedError

    def __call__(self, points) -> Jet2:
        """Evaluate on ``points`` of shape ``(3, ...)``."""
        return eval_jet2(self, points)


@dataclass(frozen=True, slots=True)
class Num(Expr):
    value: float
    pos: int = 0

    def jet(self, coords):
        return Jet2.constant(self.value, np.shape(coords[0]))

    def is_constant(self):
        return True

    def variables(self):
        return set()


@dataclass(frozen=True, slots=True)
class Var(Expr):
    name: str
    index: int
    pos: int = 0

    def jet(self, coords):
        return Jet2.variable(coords[self.index], self.index)

    def is_constant(self):
        return False

    def variables(self):
        return {self.name}


@dataclass(frozen=True, slots=True)
class Neg(Expr):
    arg: Expr
    pos: int = 0

    def jet(self, coords):
        return -self.arg.jet(coords)

    def is_constant(self):
        return self.arg.is_constant()

    def variables(self):
        return self.arg.variables()


@dataclass(frozen=True, slots=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr
    pos: int = 0

    def jet(self, coords):
        a = self.left.jet(coords)
        if self.op == "^":
            c = _constant_value(self.right)
            if float(c).is_integer():
                if c < 0:
                    _require(a.val == 0, "division by zero in negative power", self.pos)
            else:
                _require(~(a.val > 0), "non-integer power of non-positive base", self.pos)
            return a ** c
        b = self.right.jet(coords)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        _require(b.val == 0, "division by zero", self.pos)
        return a / b

    def is_constant(self):
        return self.left.is_constant() and self.right.is_constant()

    def variables(self):
        return self.left.variables() | self.right.variables()


@dataclass(frozen=True, slots=True)
class Call(Expr):
    func: str
    arg: Expr
    pos: int = 0

    def jet(self, coords):
        return FUNCTIONS[self.func](self.arg.jet(coords), self.pos)

    def is_constant(self):
        return self.arg.is_constant()

    def variables(self):
        return self.arg.variables()


def _constant_value(e: Expr) -> float:
    """Fold a variable-free subtree to a float."""
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Neg):
        return -_constant_value(e.arg)
    if isinstance(e, Call):
        x = _constant_value(e.arg)
        try:
            return float(_SCALAR_FUNCS[e.func](x))
        except (ValueError, OverflowError) as exc:
            raise DomainError(f"{e.func}({x!r}) undefined", e.pos) from exc
    if isinstance(e, BinOp):
        a, b = _constant_value(e.left), _constant_value(e.right)
        try:
            if e.op == "+":
                return a + b
            if e.op == "-":
                return a - b
            if e.op == "*":
                return a * b
            if e.op == "/":
                return a / b
            return float(a**b)
        except (ZeroDivisionError, OverflowError, TypeError) as exc:
            raise DomainError(f"cannot evaluate {a!r} {e.op} {b!r}", e.pos) from exc
    raise TypeError(f"not a constant expression: {e!r}")


# ---------------------------------------------------------------------------
# Parser

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


def _tokenize(source: str):
    tokens = []
    pos = 0
    raw = source.encode("utf-8")
    # byte offsets are reported; map char index -> byte index
    while pos < len(source):
        m = _TOKEN.match(source, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {source[pos]!r}", len(source[:pos].encode("utf-8")))
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), len(source[:pos].encode("utf-8"))))
        pos = m.end()
    tokens.append(("end", "", len(raw)))
    return tokens


class _Parser:
    def __init__(self, source, coords, constants):
        self.tokens = _tokenize(source)
        self.i = 0
        self.coords = {name: k for k, name in enumerate(coords)}
        self.constants = dict(constants or {})

    @property
    def tok(self):
        return self.tokens[self.i]

    def advance(self):
        t = self.tokens[self.i]
        self.i += 1
        return t

    def expect(self, text):
        kind, val, off = self.tok
        if val != text or kind != "op":
            found = "end of input" if kind == "end" else repr(val)
            raise ExprSyntaxError(f"expected {text!r}, found {found}", off)
        return self.advance()

    def parse(self):
        e = self.expr()
        kind, val, off = self.tok
        if kind != "end":
            raise ExprSyntaxError(f"unexpected token {val!r}", off)
        return e

    def expr(self):
        e = self.term()
        while self.tok[0] == "op" and self.tok[1] in "+-":
            _, op, off = self.advance()
            e = BinOp(op, e, self.term(), off)
        return e

    def term(self):
        e = self.factor()
        while self.tok[0] == "op" and self.tok[1] in "*/":
            _, op, off = self.advance()
            e = BinOp(op, e, self.factor(), off)
        return e

    def factor(self):
        if self.tok[0] == "op" and self.tok[1] == "-":
            _, _, off = self.advance()
            return Neg(self.factor(), off)
        return self.power()

    def power(self):
        base = self.atom()
        if self.tok[0] == "op" and self.tok[1] == "^":
            _, _, off = self.advance()
            exponent = self.factor()
            if not exponent.is_constant():
                raise ExprSyntaxError("exponent of ^ must be a constant", off)
            _constant_value(exponent)
            return BinOp("^", base, exponent, off)
        return base

    def atom(self):
        kind, val, off = self.tok
        if kind == "num":
            self.advance()
            return Num(float(val), off)
        if kind == "ident":
            self.advance()
            if val in FUNCTIONS:
                if not (self.tok[0] == "op" and self.tok[1] == "("):
                    raise ExprSyntaxError(f"function {val!r} must be followed by '('", self.tok[2])
                self.advance()
                args = []
                if not (self.tok[0] == "op" and self.tok[1] == ")"):
                    args.append(self.expr())
                    while self.tok[0] == "op" and self.tok[1] == ",":
                        self.advance()
                        args.append(self.expr())
                self.expect(")")
                if len(args) != 1:
                    raise ArityError(val, len(args), off)
                return Call(val, args[0], off)
            if val in self.coords:
                return Var(val, self.coords[val], off)
            if val in self.constants:
                return Num(float(self.constants[val]), off)
            raise UnknownIdentifierError(val, off)
        if kind == "op" and val == "(":
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        found = "end of input" if kind == "end" else repr(val)
        raise ExprSyntaxError(f"expected a number, identifier or '(', found {found}", off)


def parse(source: str, coords: Sequence[str], constants: Mapping[str, float] | None = None) -> Expr:
    """Parse ``source`` with variables drawn from ``coords`` (at most 3 names).

    ``constants`` names are substituted by their numeric values at parse time.
    """
    if len(coords) > 3:
        raise ValueError("at most three coordinates are supported")
    if len(set(coords)) != len(coords):
        raise ValueError(f"coordinate names must be distinct: {coords}")
    clash = (set(coords) | set(constants or {})) & set(FUNCTIONS)
    if clash:
        raise ValueError(f"names shadow built-in functions: {sorted(clash)}")
    return _Parser(source, coords, constants).parse()


def _as_coords(points):
    pts = np.asarray(points, dtype=float)
    if pts.shape[0] != 3:
        raise ValueError(f"points must have leading dimension 3, got shape {pts.shape}")
    return pts


def eval_jet2(e: Expr, points) -> Jet2:
    """Evaluate value, gradient and Hessian of ``e`` at ``points`` (shape ``(3, ...)``)."""
    return e.jet(_as_coords(points))


def evaluate(e: Expr, points) -> np.ndarray:
    """Value-only evaluation (no derivative propagation)."""
    pts = _as_coords(points)
    return _value(e, pts)


def _value(e, pts):
    if isinstance(e, Num):
        return np.full(pts.shape[1:], e.value)
    if isinstance(e, Var):
        return pts[e.index].copy()
    if isinstance(e, Neg):
        return -_value(e.arg, pts)
    if isinstance(e, Call):
        x = _value(e.arg, pts)
        if e.func == "log":
            _require(~(x > 0), "log of non-positive argument", e.pos)
        elif e.func == "sqrt":
            _require(~(x > 0), "sqrt of non-positive argument", e.pos)
        return getattr(np, e.func)(x)
    a = _value(e.left, pts)
    if e.op == "^":
        c = _constant_value(e.right)
        if not float(c).is_integer():
            _require(~(a > 0), "non-integer power of non-positive base", e.pos)
        elif c < 0:
            _require(a == 0, "division by zero in negative power", e.pos)
        return a**c
    b = _value(e.right, pts)
    if e.op == "+":
        return a + b
    if e.op == "-":
        return a - b
    if e.op == "*":
        return a * b
    _require(b == 0, "division by zero", e.pos)
    return a / b


def to_source(e: Expr) -> str:
    """Fully parenthesized serialization; ``parse(to_source(e))`` is equivalent to ``e``."""
    if isinstance(e, Num):
        return repr(float(e.value)) if e.value >= 0 else f"(-{repr(-float(e.value))})"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"(-{to_source(e.arg)})"
    if isinstance(e, Call):
        return f"{e.func}({to_source(e.arg)})"
    return f"({to_source(e.left)}{e.op}{to_source(e.right)})"
