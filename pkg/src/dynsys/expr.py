"""Expression trees over complex scalars.

Nodes are immutable; structural equality is value equality.  Evaluation uses
``cmath`` principal branches throughout, so ``sqrt``, ``log`` and the inverse
trigonometric functions are defined on the whole complex plane (minus their
singular points) rather than rejecting negative real arguments.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Mapping

from .errors import EvalOverflow, EvalSingular

BINARY_OPS = ("add", "sub", "mul", "div")
UNARY_OPS = ("exp", "log", "sqrt", "sin", "cos", "tan", "asin", "acos", "atan")

# evaluation guards
OVERFLOW_LIMIT = 1e100
DENOM_FLOOR = 1e-300
TAN_POLE_TOL = 1e-12


class Expr:
    __slots__ = ()

    def __str__(self) -> str:
        return to_infix(self)


@dataclass(frozen=True, slots=True)
class IntLeaf(Expr):
    value: int


@dataclass(frozen=True, slots=True)
class VarLeaf(Expr):
    name: str


@dataclass(frozen=True, slots=True)
class ConstLeaf(Expr):
    """Numeric constant, possibly complex (e.g. equilibrium shift offsets)."""

    value: complex


@dataclass(frozen=True, slots=True)
class UnaryOp(Expr):
    op: str
    child: Expr


@dataclass(frozen=True, slots=True)
class BinaryOp(Expr):
    op: str
    left: Expr
    right: Expr


_UNARY_FN = {
    "exp": cmath.exp,
    "log": cmath.log,
    "sqrt": cmath.sqrt,
    "sin": cmath.sin,
    "cos": cmath.cos,
    "tan": cmath.tan,
    "asin": cmath.asin,
    "acos": cmath.acos,
    "atan": cmath.atan,
}


def eval_complex(e: Expr, env: Mapping[str, complex]) -> complex:
    """Evaluate ``e`` with variables bound by ``env``.

    Raises EvalSingular at singularities (division by ~0, log 0, tan poles,
    branch points, NaN) and EvalOverflow when any subexpression exceeds
    magnitude 1e100.
    """
    try:
        return _eval(e, env)
    except OverflowError as exc:
        # cmath trig/exp overflow for huge imaginary parts before the
        # magnitude guard sees the result
        raise EvalOverflow(str(exc)) from exc


def _check(v: complex) -> complex:
    if cmath.isnan(v):
        raise EvalSingular("NaN in evaluation")
    if abs(v) > OVERFLOW_LIMIT:
        raise EvalOverflow(f"magnitude {abs(v):.3g} exceeds 1e100")
    return v


def _eval(e: Expr, env: Mapping[str, complex]) -> complex:
    if isinstance(e, IntLeaf):
        return complex(e.value)
    if isinstance(e, ConstLeaf):
        return _check(complex(e.value))
    if isinstance(e, VarLeaf):
        try:
            return _check(complex(env[e.name]))
        except KeyError:
            raise EvalSingular(f"unbound variable {e.name}") from None
    if isinstance(e, BinaryOp):
        a = _eval(e.left, env)
        b = _eval(e.right, env)
        if e.op == "add":
            return _check(a + b)
        if e.op == "sub":
            return _check(a - b)
        if e.op == "mul":
            try:
                return _check(a * b)
            except OverflowError:
                raise EvalOverflow("product overflow") from None
        if e.op == "div":
            if abs(b) < DENOM_FLOOR:
                raise EvalSingular("division by (near-)zero")
            try:
                return _check(a / b)
            except OverflowError:
                raise EvalOverflow("quotient overflow") from None
        raise ValueError(f"unknown binary op {e.op!r}")
    if isinstance(e, UnaryOp):
        u = _eval(e.child, env)
        if e.op == "log" and u == 0:
            raise EvalSingular("log of zero")
        if e.op == "tan" and abs(cmath.cos(u)) < TAN_POLE_TOL:
            raise EvalSingular("tan pole")
        try:
            return _check(_UNARY_FN[e.op](u))
        except OverflowError:
            raise EvalOverflow(f"{e.op} overflow") from None
        except ValueError:
            # cmath raises ValueError at isolated singular points (log 0, atan ±i)
            raise EvalSingular(f"{e.op} singular point") from None
    raise TypeError(f"not an expression node: {e!r}")


# --- constructors that absorb additive/multiplicative identities -------------
#
# Derivative trees would otherwise drown in `+0` and `*1` scaffolding; the
# time-derivative recursion used for non-autonomous controllability iterates
# differentiation 2n times and needs the absorption to stay tractable.


def _is_int(e: Expr, k: int) -> bool:
    return (isinstance(e, IntLeaf) and e.value == k) or (
        isinstance(e, ConstLeaf) and e.value == k
    )


def add(a: Expr, b: Expr) -> Expr:
    if _is_int(a, 0):
        return b
    if _is_int(b, 0):
        return a
    return BinaryOp("add", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if _is_int(b, 0):
        return a
    if _is_int(a, 0):
        return mul(IntLeaf(-1), b)
    return BinaryOp("sub", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if _is_int(a, 0) or _is_int(b, 0):
        return IntLeaf(0)
    if _is_int(a, 1):
        return b
    if _is_int(b, 1):
        return a
    return BinaryOp("mul", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if _is_int(a, 0) and not _is_int(b, 0):
        return IntLeaf(0)
    if _is_int(b, 1):
        return a
    return BinaryOp("div", a, b)


def differentiate(e: Expr, var: str) -> Expr:
    """Exact symbolic derivative of ``e`` with respect to ``var``."""
    if isinstance(e, (IntLeaf, ConstLeaf)):
        return IntLeaf(0)
    if isinstance(e, VarLeaf):
        return IntLeaf(1) if e.name == var else IntLeaf(0)
    if isinstance(e, BinaryOp):
        da = differentiate(e.left, var)
        db = differentiate(e.right, var)
        if e.op == "add":
            return add(da, db)
        if e.op == "sub":
            return sub(da, db)
        if e.op == "mul":
            return add(mul(da, e.right), mul(e.left, db))
        if e.op == "div":
            # d(a/b) = da/b - a*db/b^2
            return sub(div(da, e.right), div(mul(e.left, db), mul(e.right, e.right)))
        raise ValueError(f"unknown binary op {e.op!r}")
    if isinstance(e, UnaryOp):
        u = e.child
        du = differentiate(u, var)
        if e.op == "exp":
            return mul(e, du)
        if e.op == "log":
            return div(du, u)
        if e.op == "sqrt":
            return div(du, mul(IntLeaf(2), e))
        if e.op == "sin":
            return mul(UnaryOp("cos", u), du)
        if e.op == "cos":
            return mul(IntLeaf(-1), mul(UnaryOp("sin", u), du))
        if e.op == "tan":
            c = UnaryOp("cos", u)
            return div(du, mul(c, c))
        if e.op == "asin":
            return div(du, UnaryOp("sqrt", sub(IntLeaf(1), mul(u, u))))
        if e.op == "acos":
            return mul(
                IntLeaf(-1), div(du, UnaryOp("sqrt", sub(IntLeaf(1), mul(u, u))))
            )
        if e.op == "atan":
            return div(du, add(IntLeaf(1), mul(u, u)))
        raise ValueError(f"unknown unary op {e.op!r}")
    raise TypeError(f"not an expression node: {e!r}")


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace variables by expressions; shares unchanged subtrees."""
    if isinstance(e, VarLeaf):
        return mapping.get(e.name, e)
    if isinstance(e, UnaryOp):
        c = substitute(e.child, mapping)
        return e if c is e.child else UnaryOp(e.op, c)
    if isinstance(e, BinaryOp):
        l = substitute(e.left, mapping)
        r = substitute(e.right, mapping)
        return e if l is e.left and r is e.right else BinaryOp(e.op, l, r)
    return e


def _is_const(e: Expr) -> bool:
    return isinstance(e, (IntLeaf, ConstLeaf))


def constant_fold(e: Expr) -> Expr:
    """Collapse variable-free subtrees to ConstLeaf values.

    Subtrees whose evaluation raises (singular or overflowing constants) are
    left intact; the error then surfaces on full evaluation.
    """
    if isinstance(e, UnaryOp):
        c = constant_fold(e.child)
        node = e if c is e.child else UnaryOp(e.op, c)
        if _is_const(c):
            try:
                return ConstLeaf(eval_complex(node, {}))
            except (EvalSingular, EvalOverflow):
                return node
        return node
    if isinstance(e, BinaryOp):
        l = constant_fold(e.left)
        r = constant_fold(e.right)
        node = e if (l is e.left and r is e.right) else BinaryOp(e.op, l, r)
        if _is_const(l) and _is_const(r):
            try:
                return ConstLeaf(eval_complex(node, {}))
            except (EvalSingular, EvalOverflow):
                return node
        return node
    return e


def free_vars(e: Expr) -> frozenset[str]:
    if isinstance(e, VarLeaf):
        return frozenset((e.name,))
    if isinstance(e, UnaryOp):
        return free_vars(e.child)
    if isinstance(e, BinaryOp):
        return free_vars(e.left) | free_vars(e.right)
    return frozenset()


def count_ops(e: Expr) -> int:
    if isinstance(e, UnaryOp):
        return 1 + count_ops(e.child)
    if isinstance(e, BinaryOp):
        return 1 + count_ops(e.left) + count_ops(e.right)
    return 0


def _fmt_const(v: complex) -> str:
    if v.imag == 0:
        r = v.real
        if r == int(r) and abs(r) < 1e15:
            return str(int(r))
        return repr(r)
    return f"({v.real:g}{v.imag:+g}i)"


_INFIX = {"add": "+", "sub": "-", "mul": "*", "div": "/"}


def to_infix(e: Expr) -> str:
    """Human-readable rendering; for diagnostics only, not parsed back."""
    if isinstance(e, IntLeaf):
        return str(e.value)
    if isinstance(e, ConstLeaf):
        return _fmt_const(e.value)
    if isinstance(e, VarLeaf):
        return e.name
    if isinstance(e, UnaryOp):
        return f"{e.op}({to_infix(e.child)})"
    if isinstance(e, BinaryOp):
        return f"({to_infix(e.left)} {_INFIX[e.op]} {to_infix(e.right)})"
    raise TypeError(f"not an expression node: {e!r}")


def is_real_const(e: Expr, tol: float = 1e-9) -> bool:
    return isinstance(e, IntLeaf) or (
        isinstance(e, ConstLeaf) and abs(complex(e.value).imag) <= tol
    )


def nan_guard(x: float) -> float:
    # convenience for call sites converting eval results to floats
    if math.isnan(x) or math.isinf(x):
        raise EvalSingular("non-finite value")
    return x


# --- truncated Taylor (jet) evaluation in one variable -----------------------
#
# eval_taylor returns the first `order`+1 Taylor coefficients of an expression
# around env[var], treating every other variable as a constant.  Coefficient
# k equals the k-th derivative divided by k!.  The iterated time-derivative
# recursion for non-autonomous controllability only needs derivative VALUES
# at one point, and jets deliver them in one tree pass instead of building
# exponentially growing derivative trees.


def _jet_check(c: list[complex]) -> list[complex]:
    for v in c:
        if cmath.isnan(v):
            raise EvalSingular("NaN in series evaluation")
        if abs(v) > OVERFLOW_LIMIT:
            raise EvalOverflow(f"series coefficient {abs(v):.3g} exceeds 1e100")
    return c


def _jet_mul(a: list[complex], b: list[complex]) -> list[complex]:
    # accumulate from the j=0 term, not from int 0: adding +0 to a -0.0
    # imaginary part would flip the branch-cut side of the scalar value
    out: list[complex] = []
    for k in range(len(a)):
        acc = a[0] * b[k]
        for j in range(1, k + 1):
            acc += a[j] * b[k - j]
        out.append(acc)
    return out


def _jet_div(a: list[complex], b: list[complex]) -> list[complex]:
    if abs(b[0]) < DENOM_FLOOR:
        raise EvalSingular("series division by (near-)zero")
    L = len(a)
    c: list[complex] = []
    for k in range(L):
        acc = a[k]
        for j in range(1, k + 1):
            acc -= b[j] * c[k - j]
        c.append(acc / b[0])
    return c


def _jet_shift(a: list[complex]) -> list[complex]:
    # formal derivative, top coefficient unknowable at fixed truncation
    return [(k + 1) * a[k + 1] for k in range(len(a) - 1)] + [0j]


def _jet_integrate(d: list[complex], g0: complex) -> list[complex]:
    # antiderivative of d with constant term g0; d[-1] is ignored so the
    # result is exact to the common truncation order
    return [g0] + [d[k] / (k + 1) for k in range(len(d) - 1)]


def _jet_unary(op: str, a: list[complex]) -> list[complex]:
    L = len(a)
    a0 = a[0]
    if op == "exp":
        g = [_UNARY_FN["exp"](a0)]
        for k in range(1, L):
            g.append(sum(j * a[j] * g[k - j] for j in range(1, k + 1)) / k)
        return g
    if op in ("sin", "cos"):
        s = [cmath.sin(a0)]
        c = [cmath.cos(a0)]
        for k in range(1, L):
            s.append(sum(j * a[j] * c[k - j] for j in range(1, k + 1)) / k)
            c.append(-sum(j * a[j] * s[k - j] for j in range(1, k + 1)) / k)
        return s if op == "sin" else c
    if op == "tan":
        if abs(cmath.cos(a0)) < TAN_POLE_TOL:
            raise EvalSingular("tan pole")
        return _jet_div(_jet_unary("sin", a), _jet_unary("cos", a))
    if op == "sqrt":
        if abs(a0) < DENOM_FLOOR:
            raise EvalSingular("sqrt series at branch point")
        s = [cmath.sqrt(a0)]
        for k in range(1, L):
            acc = a[k]
            for j in range(1, k):
                acc -= s[j] * s[k - j]
            s.append(acc / (2 * s[0]))
        return s
    if op == "log":
        if a0 == 0:
            raise EvalSingular("log of zero")
        return _jet_integrate(_jet_div(_jet_shift(a), a), cmath.log(a0))
    sq = _jet_mul(a, a)
    if op == "atan":
        denom = [1 + sq[0], *sq[1:]]
        return _jet_integrate(_jet_div(_jet_shift(a), denom), cmath.atan(a0))
    if op in ("asin", "acos"):
        w = _jet_unary("sqrt", [1 - sq[0], *[-v for v in sq[1:]]])
        d = _jet_div(_jet_shift(a), w)
        if op == "asin":
            return _jet_integrate(d, cmath.asin(a0))
        return _jet_integrate([-v for v in d], cmath.acos(a0))
    raise ValueError(f"unknown unary op {op!r}")


def eval_taylor(
    e: Expr, env: Mapping[str, complex], var: str, order: int
) -> list[complex]:
    """Taylor coefficients [c0, ..., c_order] of ``e`` in ``var`` at env[var].

    c_k = (d^k e / d var^k)(env) / k!.  Raises the same EvalSingular /
    EvalOverflow guards as eval_complex, applied per coefficient.
    """
    if order < 0:
        raise ValueError("order must be >= 0")
    L = order + 1

    def rec(node: Expr) -> list[complex]:
        if isinstance(node, IntLeaf):
            return [complex(node.value)] + [0j] * (L - 1)
        if isinstance(node, ConstLeaf):
            return _jet_check([complex(node.value)] + [0j] * (L - 1))
        if isinstance(node, VarLeaf):
            try:
                base = complex(env[node.name])
            except KeyError:
                raise EvalSingular(f"unbound variable {node.name}") from None
            c = [base] + [0j] * (L - 1)
            if node.name == var and L > 1:
                c[1] = 1
            return c
        if isinstance(node, BinaryOp):
            a = rec(node.left)
            b = rec(node.right)
            try:
                if node.op == "add":
                    return _jet_check([x + y for x, y in zip(a, b)])
                if node.op == "sub":
                    return _jet_check([x - y for x, y in zip(a, b)])
                if node.op == "mul":
                    return _jet_check(_jet_mul(a, b))
                if node.op == "div":
                    return _jet_check(_jet_div(a, b))
            except OverflowError:
                raise EvalOverflow("series overflow") from None
            raise ValueError(f"unknown binary op {node.op!r}")
        if isinstance(node, UnaryOp):
            child = rec(node.child)
            try:
                return _jet_check(_jet_unary(node.op, child))
            except OverflowError:
                raise EvalOverflow("series overflow") from None
            except ValueError:
                # cmath raises ValueError at isolated singular points
                raise EvalSingular(f"{node.op} singular point") from None
        raise TypeError(f"not an expression node: {node!r}")

    return rec(e)
