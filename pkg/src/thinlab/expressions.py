"""Closed-form expression trees for coefficients, penalties and boundary data.

The configuration mini-language is a strict subset of Python expression
syntax over the variables ``x1 .. x3``:

    expr := number | x1 | x2 | x3
          | expr + expr | expr - expr | expr * expr | expr / expr
          | expr ** number | -expr | +expr
          | exp(expr) | log(expr) | sin(expr) | cos(expr) | max(expr, 0)

``max(e, 0)`` is the positive part e+.  Strings are parsed through the
stdlib :mod:`ast` module, so the grammar is bit-exact Python syntax with a
node whitelist.  Every tree evaluates vectorized over an (N, dim) array of
points and differentiates analytically; the positive part differentiates to
a unit step (its a.e. derivative), whose own derivative is taken to be 0.

Trees are immutable.  Smart constructors fold constants and drop neutral
elements so that repeated differentiation stays small.
"""

from __future__ import annotations

import ast

import numpy as np

from .errors import SpecError

__all__ = [
    "Expr",
    "parse_expression",
    "const",
    "var",
    "add",
    "sub",
    "mul",
    "div",
    "pow_",
    "exp",
    "log",
    "sin",
    "cos",
    "pos_part",
    "affine_substitute",
]


class Expr:
    """Base class; concrete nodes implement ev/d/src."""

    __slots__ = ()

    def ev(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def d(self, axis: int) -> "Expr":
        raise NotImplementedError

    def src(self) -> str:
        raise NotImplementedError

    # conveniences -------------------------------------------------------
    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        if single:
            X = X[None, :]
        out = self.ev(X)
        out = np.broadcast_to(np.asarray(out, dtype=float), (X.shape[0],)).copy()
        return float(out[0]) if single else out

    def max_var(self) -> int:
        """Largest variable index used, -1 for constant trees."""
        m = -1
        for child in _children(self):
            m = max(m, child.max_var())
        if isinstance(self, Var):
            m = max(m, self.index)
        return m

    def is_constant(self) -> bool:
        return self.max_var() < 0

    def __repr__(self):
        return f"Expr({self.src()})"


def _children(node):
    if isinstance(node, (Add, Sub, Mul, Div)):
        return (node.a, node.b)
    if isinstance(node, Pow):
        return (node.base,)
    if isinstance(node, (Exp, Log, Sin, Cos, PosPart, Step)):
        return (node.a,)
    return ()


class Const(Expr):
    __slots__ = ("value",)

    def __init__(self, value):
        self.value = float(value)

    def ev(self, X):
        return np.full(X.shape[0], self.value)

    def d(self, axis):
        return Const(0.0)

    def src(self):
        return repr(self.value)


class Var(Expr):
    __slots__ = ("index",)

    def __init__(self, index):
        self.index = int(index)

    def ev(self, X):
        if self.index >= X.shape[1]:
            raise SpecError(
                f"expression references x{self.index + 1} but points have "
                f"dimension {X.shape[1]}"
            )
        return X[:, self.index]

    def d(self, axis):
        return Const(1.0 if axis == self.index else 0.0)

    def src(self):
        return f"x{self.index + 1}"


class Add(Expr):
    __slots__ = ("a", "b")

    def __init__(self, a, b):
        self.a, self.b = a, b

    def ev(self, X):
        return self.a.ev(X) + self.b.ev(X)

    def d(self, axis):
        return add(self.a.d(axis), self.b.d(axis))

    def src(self):
        return f"({self.a.src()} + {self.b.src()})"


class Sub(Expr):
    __slots__ = ("a", "b")

    def __init__(self, a, b):
        self.a, self.b = a, b

    def ev(self, X):
        return self.a.ev(X) - self.b.ev(X)

    def d(self, axis):
        return sub(self.a.d(axis), self.b.d(axis))

    def src(self):
        return f"({self.a.src()} - {self.b.src()})"


class Mul(Expr):
    __slots__ = ("a", "b")

    def __init__(self, a, b):
        self.a, self.b = a, b

    def ev(self, X):
        return self.a.ev(X) * self.b.ev(X)

    def d(self, axis):
        return add(mul(self.a.d(axis), self.b), mul(self.a, self.b.d(axis)))

    def src(self):
        return f"({self.a.src()} * {self.b.src()})"


class Div(Expr):
    __slots__ = ("a", "b")

    def __init__(self, a, b):
        self.a, self.b = a, b

    def ev(self, X):
        return self.a.ev(X) / self.b.ev(X)

    def d(self, axis):
        num = sub(mul(self.a.d(axis), self.b), mul(self.a, self.b.d(axis)))
        return div(num, mul(self.b, self.b))

    def src(self):
        return f"({self.a.src()} / {self.b.src()})"


class Pow(Expr):
    """base ** exponent with a numeric-literal exponent."""

    __slots__ = ("base", "exponent")

    def __init__(self, base, exponent):
        self.base = base
        self.exponent = float(exponent)

    def ev(self, X):
        e = self.exponent
        if e == int(e) and abs(e) < 64:
            return self.base.ev(X) ** int(e)
        return self.base.ev(X) ** e

    def d(self, axis):
        e = self.exponent
        return mul(mul(Const(e), pow_(self.base, e - 1.0)), self.base.d(axis))

    def src(self):
        e = self.exponent
        es = repr(int(e)) if e == int(e) else repr(e)
        return f"({self.base.src()} ** {es})"


class Exp(Expr):
    __slots__ = ("a",)

    def __init__(self, a):
        self.a = a

    def ev(self, X):
        return np.exp(self.a.ev(X))

    def d(self, axis):
        return mul(Exp(self.a), self.a.d(axis))

    def src(self):
        return f"exp({self.a.src()})"


class Log(Expr):
    __slots__ = ("a",)

    def __init__(self, a):
        self.a = a

    def ev(self, X):
        return np.log(self.a.ev(X))

    def d(self, axis):
        return div(self.a.d(axis), self.a)

    def src(self):
        return f"log({self.a.src()})"


class Sin(Expr):
    __slots__ = ("a",)

    def __init__(self, a):
        self.a = a

    def ev(self, X):
        return np.sin(self.a.ev(X))

    def d(self, axis):
        return mul(Cos(self.a), self.a.d(axis))

    def src(self):
        return f"sin({self.a.src()})"


class Cos(Expr):
    __slots__ = ("a",)

    def __init__(self, a):
        self.a = a

    def ev(self, X):
        return np.cos(self.a.ev(X))

    def d(self, axis):
        return mul(Const(-1.0), mul(Sin(self.a), self.a.d(axis)))

    def src(self):
        return f"cos({self.a.src()})"


class PosPart(Expr):
    """max(a, 0)."""

    __slots__ = ("a",)

    def __init__(self, a):
        self.a = a

    def ev(self, X):
        return np.maximum(self.a.ev(X), 0.0)

    def d(self, axis):
        return mul(Step(self.a), self.a.d(axis))

    def src(self):
        return f"max({self.a.src()}, 0)"


class Step(Expr):
    """Unit step 1_{a > 0}; a.e. derivative of the positive part."""

    __slots__ = ("a",)

    def __init__(self, a):
        self.a = a

    def ev(self, X):
        return (self.a.ev(X) > 0.0).astype(float)

    def d(self, axis):
        return Const(0.0)

    def src(self):
        return f"step({self.a.src()})"


# ---------------------------------------------------------------------------
# smart constructors


def const(c) -> Const:
    return Const(c)


def var(i) -> Var:
    return Var(i)


def _c(node):
    return node.value if isinstance(node, Const) else None


def add(a, b):
    ca, cb = _c(a), _c(b)
    if ca is not None and cb is not None:
        return Const(ca + cb)
    if ca == 0.0:
        return b
    if cb == 0.0:
        return a
    return Add(a, b)


def sub(a, b):
    ca, cb = _c(a), _c(b)
    if ca is not None and cb is not None:
        return Const(ca - cb)
    if cb == 0.0:
        return a
    if ca == 0.0:
        return mul(Const(-1.0), b)
    return Sub(a, b)


def mul(a, b):
    ca, cb = _c(a), _c(b)
    if ca is not None and cb is not None:
        return Const(ca * cb)
    if ca == 0.0 or cb == 0.0:
        return Const(0.0)
    if ca == 1.0:
        return b
    if cb == 1.0:
        return a
    return Mul(a, b)


def div(a, b):
    ca, cb = _c(a), _c(b)
    if cb == 0.0:
        raise SpecError("division by the constant 0 in an expression")
    if ca is not None and cb is not None:
        return Const(ca / cb)
    if ca == 0.0:
        return Const(0.0)
    if cb == 1.0:
        return a
    return Div(a, b)


def pow_(a, e):
    e = float(e)
    if e == 0.0:
        return Const(1.0)
    if e == 1.0:
        return a
    ca = _c(a)
    if ca is not None:
        return Const(ca ** e)
    return Pow(a, e)


def exp(a):
    return Exp(a)


def log(a):
    return Log(a)


def sin(a):
    return Sin(a)


def cos(a):
    return Cos(a)


def pos_part(a):
    ca = _c(a)
    if ca is not None:
        return Const(max(ca, 0.0))
    return PosPart(a)


# ---------------------------------------------------------------------------
# parsing

_MAX_DIM = 3
_FUNCS = {"exp": exp, "log": log, "sin": sin, "cos": cos}


def parse_expression(source: str) -> Expr:
    """Parse a mini-language string into an expression tree.

    Raises :class:`SpecError` on anything outside the documented grammar.
    """
    if not isinstance(source, str):
        raise SpecError(f"expression must be a string, got {type(source).__name__}")
    try:
        tree = ast.parse(source, mode="eval")
    except SyntaxError as err:
        raise SpecError(f"cannot parse expression {source!r}: {err.msg}") from err
    return _build(tree.body, source)


def _build(node, source):
    if isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise SpecError(f"non-numeric constant in {source!r}")
        return Const(node.value)
    if isinstance(node, ast.Name):
        name = node.id
        if len(name) == 2 and name[0] == "x" and name[1].isdigit():
            idx = int(name[1]) - 1
            if 0 <= idx < _MAX_DIM:
                return Var(idx)
        raise SpecError(f"unknown variable {name!r} in {source!r} (use x1..x{_MAX_DIM})")
    if isinstance(node, ast.UnaryOp):
        inner = _build(node.operand, source)
        if isinstance(node.op, ast.USub):
            return mul(Const(-1.0), inner)
        if isinstance(node.op, ast.UAdd):
            return inner
        raise SpecError(f"unsupported unary operator in {source!r}")
    if isinstance(node, ast.BinOp):
        if isinstance(node.op, ast.Pow):
            base = _build(node.left, source)
            expo = _build(node.right, source)
            if not isinstance(expo, Const):
                raise SpecError(f"exponent must be a numeric literal in {source!r}")
            return pow_(base, expo.value)
        a = _build(node.left, source)
        b = _build(node.right, source)
        if isinstance(node.op, ast.Add):
            return add(a, b)
        if isinstance(node.op, ast.Sub):
            return sub(a, b)
        if isinstance(node.op, ast.Mult):
            return mul(a, b)
        if isinstance(node.op, ast.Div):
            return div(a, b)
        raise SpecError(f"unsupported operator in {source!r}")
    if isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.keywords:
            raise SpecError(f"unsupported call in {source!r}")
        fname = node.func.id
        if fname == "max":
            if len(node.args) != 2:
                raise SpecError(f"max takes exactly two arguments in {source!r}")
            a = _build(node.args[0], source)
            z = _build(node.args[1], source)
            if not (isinstance(z, Const) and z.value == 0.0):
                raise SpecError(f"only max(expr, 0) is supported in {source!r}")
            return pos_part(a)
        if fname in _FUNCS:
            if len(node.args) != 1:
                raise SpecError(f"{fname} takes exactly one argument in {source!r}")
            return _FUNCS[fname](_build(node.args[0], source))
        raise SpecError(f"unknown function {fname!r} in {source!r}")
    raise SpecError(f"unsupported syntax in {source!r}")


# ---------------------------------------------------------------------------
# substitution


def affine_substitute(expr: Expr, matrix, offset) -> Expr:
    """Replace x with offset + matrix @ y, returning a tree in the y variables.

    ``matrix`` has shape (dim_x, dim_y) and ``offset`` length dim_x.
    """
    matrix = np.asarray(matrix, dtype=float)
    offset = np.asarray(offset, dtype=float)

    def repl(node):
        if isinstance(node, Const):
            return node
        if isinstance(node, Var):
            i = node.index
            out = Const(offset[i])
            for j in range(matrix.shape[1]):
                out = add(out, mul(Const(matrix[i, j]), Var(j)))
            return out
        if isinstance(node, Add):
            return add(repl(node.a), repl(node.b))
        if isinstance(node, Sub):
            return sub(repl(node.a), repl(node.b))
        if isinstance(node, Mul):
            return mul(repl(node.a), repl(node.b))
        if isinstance(node, Div):
            return div(repl(node.a), repl(node.b))
        if isinstance(node, Pow):
            return pow_(repl(node.base), node.exponent)
        if isinstance(node, Exp):
            return exp(repl(node.a))
        if isinstance(node, Log):
            return log(repl(node.a))
        if isinstance(node, Sin):
            return sin(repl(node.a))
        if isinstance(node, Cos):
            return cos(repl(node.a))
        if isinstance(node, PosPart):
            return pos_part(repl(node.a))
        if isinstance(node, Step):
            return Step(repl(node.a))
        raise TypeError(f"unknown node {node!r}")

    return repl(expr)
