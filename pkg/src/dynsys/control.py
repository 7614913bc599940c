"""Controllability oracles and Gramian feedback synthesis.

Autonomous systems use the Kalman block test: stack [B, AB, ..., A^(n-1)B]
and compare its rank to the state dimension.  Systems with explicit time
dependence keep A(t), B(t) symbolic and iterate D_0 = B,
D_{i+1} = D_i' - A D_i, testing the rank of the concatenated blocks at a
fixed evaluation time.  Feedback gains use the finite-horizon construction
K = -B' W(T)^{-1} with W(T) = integral_0^T e^(-At) B B' e^(-A't) dt, which
satisfies the Lyapunov identity (A+BK) W + W (A+BK)' = -BB' - MBB'M' for
M = e^(-AT) and therefore always stabilizes a controllable pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import EvalOverflow, GramianSingular
from .expr import (
    OVERFLOW_LIMIT,
    ConstLeaf,
    Expr,
    add,
    constant_fold,
    differentiate,
    eval_complex,
    eval_taylor,
    mul,
    sub,
    substitute,
)
from .sampler import System

CLOSED_LOOP_MARGIN = 1e-9
GRAMIAN_COND_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class Linearization:
    """Numeric A, B at the equilibrium plus the symbolic forms (t left free)."""

    A: np.ndarray
    B: np.ndarray
    sym_A: tuple[tuple[Expr, ...], ...]
    sym_B: tuple[tuple[Expr, ...], ...]
    n: int
    p: int


@dataclass(frozen=True, eq=False)
class ControlVerdict:
    uncontrollable_dim: int
    controllable: bool
    K: np.ndarray | None = None


def linearize(system: System, t_eval: float = 0.5) -> Linearization:
    """A = df/dx, B = df/du at (x_e, u_e); time stays free in symbolic forms.

    Raises ComplexJacobian when the numeric matrices have imaginary parts
    beyond tolerance, EvalSingular/EvalOverflow when they cannot be evaluated.
    """
    if system.n_controls < 1:
        raise ValueError("control analysis requires at least one control variable")
    point = {name: ConstLeaf(v) for name, v in system.eq_env().items()}

    def entry(eq: Expr, var: str) -> Expr:
        return constant_fold(substitute(differentiate(eq, var), point))

    sym_A = tuple(
        tuple(entry(eq, v) for v in system.state_vars) for eq in system.equations
    )
    sym_B = tuple(
        tuple(entry(eq, v) for v in system.control_vars) for eq in system.equations
    )
    env = {"t": complex(t_eval)}
    A = linalg.real_view([[eval_complex(e, env) for e in row] for row in sym_A])
    B = linalg.real_view([[eval_complex(e, env) for e in row] for row in sym_B])
    return Linearization(
        A=A, B=B, sym_A=sym_A, sym_B=sym_B, n=system.n_states, p=system.n_controls
    )


def kalman_matrix(lin: Linearization) -> np.ndarray:
    """n x (n*p) block matrix [B, AB, ..., A^(n-1)B]."""
    blocks = []
    cur = lin.B
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(lin.n):
            blocks.append(cur)
            cur = lin.A @ cur
    stack = np.hstack(blocks)
    # A, B entries are individually guarded at OVERFLOW_LIMIT but their
    # n-fold products are not; a saturated stack would hand the SVD infs
    if not np.all(np.isfinite(stack)) or np.abs(stack).max() > OVERFLOW_LIMIT:
        raise EvalOverflow("Kalman stack magnitude guard")
    return stack


def degenerate_pair(lin: Linearization) -> bool:
    """True when the constant pair (A, B) is degenerate as a local model.

    Two structural defects qualify: a row of [A | B] that is identically
    zero (that coordinate is frozen at first order, so the declared
    dimension overstates the dynamics) and a column of B that is
    identically zero (the declared input has no authority).  Both are
    exact-zero tests — near-zeros are legitimate values.  Only meaningful
    for autonomous pairs: with time dependence an instantaneous zero can
    be rescued at other times, which is what the derivative-stack verdict
    measures.
    """
    rows = np.hstack([lin.A, lin.B])
    if np.any(np.all(rows == 0.0, axis=1)):
        return True
    return bool(np.any(np.all(lin.B == 0.0, axis=0)))


def controllability(
    lin: Linearization, rel_tol: float = 1e-10, method: str = "exact"
) -> ControlVerdict:
    """Kalman rank verdict.

    ``exact`` ranks the stack over the rationals: the Krylov blocks are so
    graded that any fixed SVD threshold misreads generic systems as deficient
    once n reaches 5-6, while the structurally deficient ones carry exact
    zeros that need no tolerance at all.  ``svd`` applies linalg.rank at
    ``rel_tol`` for callers that want the thresholded reading.
    """
    K = kalman_matrix(lin)
    d = linalg.exact_rank(K) if method == "exact" else linalg.rank(K, rel_tol)
    return ControlVerdict(uncontrollable_dim=lin.n - d, controllable=d == lin.n)


def _dstack_symbolic(lin: Linearization, t_eval: float) -> np.ndarray:
    env = {"t": complex(t_eval)}
    n, p = lin.n, lin.p
    D = [list(row) for row in lin.sym_B]
    blocks = [linalg.real_view([[eval_complex(e, env) for e in row] for row in D])]
    for _ in range(2 * n - 1):
        nxt = [[None] * p for _ in range(n)]
        for r in range(n):
            for c in range(p):
                acc: Expr = mul(lin.sym_A[r][0], D[0][c])
                for k in range(1, n):
                    acc = add(acc, mul(lin.sym_A[r][k], D[k][c]))
                nxt[r][c] = constant_fold(sub(differentiate(D[r][c], "t"), acc))
        D = nxt
        blocks.append(
            linalg.real_view([[eval_complex(e, env) for e in row] for row in D])
        )
    return np.hstack(blocks)


def _dstack_taylor(lin: Linearization, t_eval: float) -> np.ndarray:
    # same recursion on truncated Taylor jets of A(t), B(t): order 2n-1
    # coefficients determine D_0(t_e), ..., D_{2n-1}(t_e) exactly, and one
    # tree pass per entry replaces exponentially growing derivative trees
    n, p = lin.n, lin.p
    env = {"t": complex(t_eval)}
    order = 2 * n - 1
    A = [[eval_taylor(e, env, "t", order) for e in row] for row in lin.sym_A]
    D = [[eval_taylor(e, env, "t", order) for e in row] for row in lin.sym_B]
    L = order + 1
    blocks = [linalg.real_view([[col[0] for col in row] for row in D])]
    for _ in range(2 * n - 1):
        nxt = [[None] * p for _ in range(n)]
        for r in range(n):
            for c in range(p):
                prod = [0j] * L
                for k in range(n):
                    a, d = A[r][k], D[k][c]
                    for i in range(L):
                        acc = a[0] * d[i]
                        for j in range(1, i + 1):
                            acc += a[j] * d[i - j]
                        prod[i] += acc
                dd = D[r][c]
                nxt[r][c] = [
                    (i + 1) * dd[i + 1] - prod[i] if i + 1 < L else -prod[i]
                    for i in range(L)
                ]
        D = nxt
        blocks.append(linalg.real_view([[col[0] for col in row] for row in D]))
    stack = np.hstack(blocks)
    # eval_complex guards every symbolic-route entry at OVERFLOW_LIMIT; the
    # jet recursion multiplies guarded coefficients outside that check, so
    # re-impose the cap here or the SVD sees infs
    if not np.all(np.isfinite(stack)) or np.abs(stack).max() > OVERFLOW_LIMIT:
        raise EvalOverflow("controllability stack magnitude guard")
    return stack


def nonauto_controllability(
    system: System,
    t_eval: float = 0.5,
    method: str = "taylor",
) -> ControlVerdict:
    """Time-varying rank test on [D_0, ..., D_{2n-1}] at ``t_eval``.

    D_0 = B(t), D_{i+1} = dD_i/dt - A(t) D_i; the verdict compares the rank
    of the n x (2n*p) concatenation, evaluated at ``t_eval``, to n, over the
    rationals (see controllability).  The ``taylor`` method propagates
    truncated jets of A(t), B(t); ``symbolic`` builds the derivative trees
    literally.  Both produce the same stack up to roundoff.
    """
    lin = linearize(system, t_eval=t_eval)
    if method == "taylor":
        stack = _dstack_taylor(lin, t_eval)
    elif method == "symbolic":
        stack = _dstack_symbolic(lin, t_eval)
    else:
        raise ValueError(f"unknown method {method!r}")
    d = linalg.exact_rank(stack)
    return ControlVerdict(uncontrollable_dim=lin.n - d, controllable=d == lin.n)


def feedback_matrix(
    lin: Linearization, T: float = 1.0, method: str = "vanloan"
) -> np.ndarray:
    """Stabilizing K = -B' W(T)^{-1} via the finite-horizon Gramian.

    Raises GramianSingular when the Gramian's condition number exceeds 1e12
    (numerically uncontrollable directions).
    """
    if method == "vanloan":
        W = linalg.gramian_vanloan(lin.A, lin.B, T)
    elif method == "quadrature":
        W = linalg.gramian_quadrature(lin.A, lin.B, T)
    else:
        raise ValueError(f"unknown gramian method {method!r}")
    c = linalg.cond(W)
    if not np.isfinite(c) or c > GRAMIAN_COND_LIMIT:
        raise GramianSingular(f"condition number {c:.3g} exceeds 1e12")
    # W is symmetric so solve against B and transpose
    K = -np.linalg.solve(W, lin.B).T
    # The condition bound alone cannot promise stabilization in float64: a
    # Gramian correct to eps*cond yields gain errors that shift closed-loop
    # eigenvalues by ~||dK||*||B||, which can exceed the stability margin
    # when ||K|| is large.  The contract is stabilizing-or-raise, so check.
    if not verify_feedback(lin.A, lin.B, K):
        raise GramianSingular("gain from the Gramian fails to stabilize")
    return K


def closed_loop_decay(A, B, K) -> float:
    eigs = linalg.eigenvalues(np.asarray(A, float) + np.asarray(B, float) @ K)
    return linalg.decay_rate(eigs)


def verify_feedback(A, B, K, margin: float = CLOSED_LOOP_MARGIN) -> bool:
    """True iff every closed-loop eigenvalue has real part below -margin."""
    return closed_loop_decay(A, B, K) > margin
