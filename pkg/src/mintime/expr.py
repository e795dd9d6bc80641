"""Prefix expression trees in the state coordinates, with exact differentiation.

JSON form: a number, "x1" / "x2", or a list [op, arg, ...] with op one of
add, sub, mul (two arguments), pow (expression and a nonnegative integer),
sin, cos (one argument), const (a number) and var (1-based index).
"""

import math
from dataclasses import dataclass

import numpy as np


class ExpressionError(ValueError):
    pass


@dataclass(frozen=True)
class Expr:
    op: str
    args: tuple = ()
    value: float = 0.0  # const value, pow exponent, or var index (0-based)

    def is_const(self, v=None):
        return self.op == "const" and (v is None or self.value == v)

    def __call__(self, x):
        """Evaluate at x = (x1, x2); arrays broadcast, constants stay scalar."""
        return self.compile()(x)

    def compile(self):
        op = self.op
        if op == "const":
            c = float(self.value)
            return lambda x: c
        if op == "var":
            i = int(self.value)
            return lambda x: x[i]
        fs = [a.compile() for a in self.args]
        if op == "add":
            f, g = fs
            return lambda x: f(x) + g(x)
        if op == "sub":
            f, g = fs
            return lambda x: f(x) - g(x)
        if op == "mul":
            f, g = fs
            return lambda x: f(x) * g(x)
        if op == "neg":
            (f,) = fs
            return lambda x: -f(x)
        if op == "pow":
            (f,) = fs
            k = int(self.value)
            return lambda x: f(x) ** k
        if op == "sin":
            (f,) = fs
            return lambda x: np.sin(f(x))
        if op == "cos":
            (f,) = fs
            return lambda x: np.cos(f(x))
        raise ExpressionError(f"unknown operator {op!r}")

    def diff(self, i):
        """Exact partial derivative with respect to x_{i+1}."""
        op = self.op
        if op == "const":
            return const(0.0)
        if op == "var":
            return const(1.0 if int(self.value) == i else 0.0)
        if op in ("add", "sub"):
            a, b = self.args
            return (add if op == "add" else sub)(a.diff(i), b.diff(i))
        if op == "mul":
            a, b = self.args
            return add(mul(a.diff(i), b), mul(a, b.diff(i)))
        if op == "neg":
            return neg(self.args[0].diff(i))
        if op == "pow":
            (a,) = self.args
            k = int(self.value)
            return mul(mul(const(float(k)), power(a, k - 1)), a.diff(i))
        if op == "sin":
            (a,) = self.args
            return mul(cos(a), a.diff(i))
        if op == "cos":
            (a,) = self.args
            return neg(mul(sin(a), a.diff(i)))
        raise ExpressionError(f"unknown operator {op!r}")

    def to_json(self):
        op = self.op
        if op == "const":
            return float(self.value)
        if op == "var":
            return f"x{int(self.value) + 1}"
        if op == "neg":
            return ["sub", 0.0, self.args[0].to_json()]
        if op == "pow":
            return ["pow", self.args[0].to_json(), int(self.value)]
        return [op] + [a.to_json() for a in self.args]

    def __str__(self):
        op = self.op
        if op == "const":
            return repr(float(self.value))
        if op == "var":
            return f"x{int(self.value) + 1}"
        if op == "pow":
            return f"({self.args[0]})^{int(self.value)}"
        if op == "neg":
            return f"-({self.args[0]})"
        sym = {"add": "+", "sub": "-", "mul": "*"}
        if op in sym:
            return f"({self.args[0]} {sym[op]} {self.args[1]})"
        return f"{op}({self.args[0]})"


def const(c):
    return Expr("const", (), float(c))


def var(i):
    return Expr("var", (), int(i))


def add(a, b):
    if a.is_const() and b.is_const():
        return const(a.value + b.value)
    if a.is_const(0.0):
        return b
    if b.is_const(0.0):
        return a
    return Expr("add", (a, b))


def sub(a, b):
    if a.is_const() and b.is_const():
        return const(a.value - b.value)
    if b.is_const(0.0):
        return a
    if a.is_const(0.0):
        return neg(b)
    return Expr("sub", (a, b))


def neg(a):
    if a.is_const():
        return const(-a.value)
    if a.op == "neg":
        return a.args[0]
    return Expr("neg", (a,))


def mul(a, b):
    if a.is_const() and b.is_const():
        return const(a.value * b.value)
    if a.is_const(0.0) or b.is_const(0.0):
        return const(0.0)
    if a.is_const(1.0):
        return b
    if b.is_const(1.0):
        return a
    return Expr("mul", (a, b))


def power(a, k):
    k = int(k)
    if k < 0:
        raise ExpressionError("pow needs a nonnegative integer exponent")
    if k == 0:
        return const(1.0)
    if k == 1:
        return a
    if a.is_const():
        return const(a.value**k)
    return Expr("pow", (a,), k)


def sin(a):
    return const(math.sin(a.value)) if a.is_const() else Expr("sin", (a,))


def cos(a):
    return const(math.cos(a.value)) if a.is_const() else Expr("cos", (a,))


_ARITY = {"add": 2, "sub": 2, "mul": 2, "pow": 2, "sin": 1, "cos": 1, "const": 1, "var": 1}


def parse(doc, nvars=2):
    """Expr from its JSON form."""
    if isinstance(doc, bool):
        raise ExpressionError("booleans are not expressions")
    if isinstance(doc, (int, float)):
        if not math.isfinite(doc):
            raise ExpressionError("constants must be finite")
        return const(doc)
    if isinstance(doc, str):
        if doc.startswith("x") and doc[1:].isdigit() and 1 <= int(doc[1:]) <= nvars:
            return var(int(doc[1:]) - 1)
        raise ExpressionError(f"unknown symbol {doc!r}")
    if not isinstance(doc, (list, tuple)) or not doc or not isinstance(doc[0], str):
        raise ExpressionError(f"cannot parse {doc!r}")
    op, rest = doc[0], list(doc[1:])
    if op not in _ARITY:
        raise ExpressionError(f"unknown operator {op!r}")
    if len(rest) != _ARITY[op]:
        raise ExpressionError(f"{op} takes {_ARITY[op]} argument(s), got {len(rest)}")
    if op == "const":
        return parse(float(rest[0]), nvars)
    if op == "var":
        i = rest[0]
        if isinstance(i, str):
            return parse(i, nvars)
        if not isinstance(i, int) or not 1 <= i <= nvars:
            raise ExpressionError(f"var index must be in 1..{nvars}")
        return var(i - 1)
    if op == "pow":
        k = rest[1]
        if isinstance(k, float) and k.is_integer():
            k = int(k)
        if not isinstance(k, int) or isinstance(k, bool) or k < 0:
            raise ExpressionError("pow needs a nonnegative integer exponent")
        return power(parse(rest[0], nvars), k)
    args = [parse(a, nvars) for a in rest]
    return {"add": add, "sub": sub, "mul": mul, "sin": sin, "cos": cos}[op](*args)
