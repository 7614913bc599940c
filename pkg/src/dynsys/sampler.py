"""Calibrated random generation of expression trees and differential systems.

Trees are drawn uniformly among all *expressions* with a prescribed number of
internal operators via the classic empty-slot dynamic program: D(e, n) counts
the ways to finish a tree that has ``e`` unfilled slots and ``n`` operators
still to place, weighting operator choices by their multiplicities (q1, q2)
and every leaf slot by the leaf-alphabet size L.  The L factor is what makes
binary nodes dominate (q2*L >> q1), so sampled trees are leaf-rich rather
than unary chains.  Sampling walks slots left to right in prefix order;
skipped slots become leaves, whose *content* is then drawn separately
(integer with probability p_int, else a uniform variable).
"""

from __future__ import annotations

import random
from dataclasses import dataclass, fields, replace
from functools import lru_cache
from typing import Iterator, Sequence

from .errors import (
    ComplexJacobian,
    DegenerateSystem,
    NonIntegerRecurrence,
)
from .expr import (
    BINARY_OPS,
    UNARY_OPS,
    BinaryOp,
    ConstLeaf,
    Expr,
    IntLeaf,
    UnaryOp,
    VarLeaf,
    constant_fold,
    eval_complex,
    free_vars,
    sub,
    substitute,
)

REAL_SHIFT_TOL = 1e-9


@dataclass(frozen=True)
class DistributionConfig:
    """Flat, file-serializable knobs for system sampling.

    ``ops_lo``/``ops_hi`` are affine lines "slope,intercept" over the total
    variable count n+q, giving the per-equation operator-count range
    [slope_lo*(n+q)+int_lo, slope_hi*(n+q)+int_hi].  ``unary_weights`` lists
    "op:weight" pairs; weights act as operator multiplicities both for shape
    counting and for operator assignment.  ``x_eq_choices`` non-empty means
    the equilibrium coordinate is drawn uniformly from the listed values
    per sample instead of the fixed ``x_eq``.
    """

    n_min: int = 2
    n_max: int = 5
    q_min: int = 0
    q_max: int = 0
    include_time: bool = False
    p_int: float = 0.30
    int_lo: int = -10
    int_hi: int = 10
    unary_weights: str = "exp:1,log:1,sqrt:1,sin:1,cos:1,tan:1,asin:1,acos:1,atan:1"
    ops_lo: str = "0,3"
    ops_hi: str = "2,3"
    x_eq: float = 0.01
    x_eq_choices: str = ""
    u_eq: float = 0.5
    t_eval: float = 0.5
    horizon: float = 1.0
    sig_digits: int = 4
    seed: int = 0

    # --- validation / parsing -------------------------------------------

    def validate(self) -> None:
        if not (1 <= self.n_min <= self.n_max <= 9):
            raise ValueError(f"bad state-dimension range [{self.n_min}, {self.n_max}]")
        if not (0 <= self.q_min <= self.q_max <= 3):
            raise ValueError(f"bad control-count range [{self.q_min}, {self.q_max}]")
        if not (0.0 <= self.p_int <= 1.0):
            raise ValueError(f"p_int must be a probability, got {self.p_int}")
        if not (self.int_lo <= -1 and 1 <= self.int_hi):
            raise ValueError("integer leaf range must straddle (but exclude) zero")
        if self.sig_digits not in (2, 3, 4):
            raise ValueError("sig_digits must be 2, 3 or 4")
        parse_weights(self.unary_weights)
        lo_a, lo_b = _affine(self.ops_lo)
        hi_a, hi_b = _affine(self.ops_hi)
        nq = self.n_min + self.q_min
        if lo_a * nq + lo_b > hi_a * nq + hi_b:
            raise ValueError("empty operator-count range")
        for v in self.x_eq_values():
            float(v)

    def x_eq_values(self) -> tuple[float, ...]:
        if not self.x_eq_choices.strip():
            return (self.x_eq,)
        return tuple(float(s) for s in self.x_eq_choices.split(","))

    def ops_range(self, n_plus_q: int) -> tuple[int, int]:
        lo_a, lo_b = _affine(self.ops_lo)
        hi_a, hi_b = _affine(self.ops_hi)
        lo = lo_a * n_plus_q + lo_b
        hi = hi_a * n_plus_q + hi_b
        if lo < 0 or hi < lo:
            raise ValueError(f"bad operator range [{lo}, {hi}]")
        return lo, hi

    def int_leaves(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.int_lo, self.int_hi + 1) if i != 0)

    # --- serialization ---------------------------------------------------

    def to_kv(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_kv(cls, text: str) -> "DistributionConfig":
        overrides = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
            key, _, val = line.partition("=")
            overrides[key.strip()] = val.strip()
        return cls().with_overrides(overrides)

    def with_overrides(self, overrides: dict[str, str]) -> "DistributionConfig":
        typed = {}
        by_name = {f.name: f for f in fields(self)}
        for key, val in overrides.items():
            if key not in by_name:
                raise ValueError(f"unknown config field {key!r}")
            kind = by_name[key].type
            if kind == "int":
                typed[key] = int(val)
            elif kind == "float":
                typed[key] = float(val)
            elif kind == "bool":
                if str(val).lower() in ("true", "1", "yes"):
                    typed[key] = True
                elif str(val).lower() in ("false", "0", "no"):
                    typed[key] = False
                else:
                    raise ValueError(f"bad boolean for {key}: {val!r}")
            else:
                typed[key] = str(val)
        cfg = replace(self, **typed)
        cfg.validate()
        return cfg


def _affine(spec: str) -> tuple[int, int]:
    parts = spec.split(",")
    if len(parts) != 2:
        raise ValueError(f"expected 'slope,intercept', got {spec!r}")
    return int(parts[0]), int(parts[1])


@lru_cache(maxsize=64)
def parse_weights(spec: str) -> tuple[tuple[str, int], ...]:
    out = []
    for item in spec.split(","):
        name, _, w = item.strip().partition(":")
        if name not in UNARY_OPS:
            raise ValueError(f"unknown unary operator {name!r}")
        weight = int(w) if w else 1
        if weight <= 0:
            raise ValueError(f"weight for {name} must be positive")
        out.append((name, weight))
    if len({n for n, _ in out}) != len(out):
        raise ValueError("duplicate operator in weights")
    return tuple(out)


# --- shape tables -------------------------------------------------------


class _ShapeTable:
    """D(e, n) with multiplicities (q1, q2) and leaf alphabet L, exact ints.

    D(e, 0) = L^e (finish every slot with a leaf); otherwise
    D(e, n) = L*D(e-1, n) + q1*D(e, n-1) + q2*D(e+1, n-1).
    """

    def __init__(self, q1: int, q2: int, L: int):
        self.q1 = q1
        self.q2 = q2
        self.L = L
        self._n_max = 0
        self._e_max = 0
        self._rows: list[list[int]] = [[1]]

    def _rebuild(self, n_max: int, e_max: int) -> None:
        # row n loses one column of slack per level (it reads prev[e + 1])
        self._n_max = max(self._n_max, n_max)
        self._e_max = max(self._e_max, e_max)
        width = self._e_max + self._n_max + 2
        rows = [[self.L**e for e in range(width)]]
        for n in range(1, self._n_max + 1):
            prev = rows[n - 1]
            row = [0] * (width - n)
            for e in range(1, len(row)):
                row[e] = (
                    self.L * row[e - 1]
                    + self.q1 * prev[e]
                    + self.q2 * prev[e + 1]
                )
            rows.append(row)
        self._rows = rows

    def count(self, e: int, n: int) -> int:
        if e < 0:
            return 0
        if n == 0:
            return self.L**e
        if n > self._n_max or e > self._e_max:
            self._rebuild(n, e)
        return self._rows[n][e]


_tables: dict[tuple[int, int, int], _ShapeTable] = {}


def shape_table(q1: int, q2: int, L: int) -> _ShapeTable:
    key = (q1, q2, L)
    if key not in _tables:
        _tables[key] = _ShapeTable(q1, q2, L)
    return _tables[key]


def sample_tree(
    rng: random.Random,
    n_ops: int,
    variables: Sequence[str],
    cfg: DistributionConfig,
) -> Expr:
    """Draw a tree with exactly ``n_ops`` internal operators.

    Shape and operator-arity assignment are uniform over expressions (leaf
    slots weighted by the alphabet size L = #integers + #variables); leaf
    content is then an integer with probability ``p_int`` (uniform over the
    nonzero range) and otherwise a uniform variable.
    """
    weights = parse_weights(cfg.unary_weights)
    q1 = sum(w for _, w in weights)
    q2 = len(BINARY_OPS)
    ints = cfg.int_leaves()
    L = len(ints) + len(variables)
    table = shape_table(q1, q2, L)

    def leaf() -> Expr:
        if rng.random() < cfg.p_int:
            return IntLeaf(rng.choice(ints))
        return VarLeaf(rng.choice(list(variables)))

    def unary_op() -> str:
        r = rng.randrange(q1)
        for name, w in weights:
            if r < w:
                return name
            r -= w
        raise AssertionError("unreachable")

    # each hole is (container list, index); containers are ["op", c1, ...]
    root: list = [None]
    holes: list[tuple[list, int]] = [(root, 0)]
    remaining = n_ops
    while remaining > 0:
        e = len(holes)
        total = table.count(e, remaining)
        r = rng.randrange(total)
        k = 0
        arity = 0
        lk = 1  # L^k: skipping a slot commits it to one of L leaves
        for k in range(e):
            w_un = lk * q1 * table.count(e - k, remaining - 1)
            if r < w_un:
                arity = 1
                break
            r -= w_un
            w_bin = lk * q2 * table.count(e - k + 1, remaining - 1)
            if r < w_bin:
                arity = 2
                break
            r -= w_bin
            lk *= L
        else:
            raise AssertionError("slot walk exhausted")
        for container, idx in holes[:k]:
            container[idx] = leaf()
        container, idx = holes[k]
        if arity == 1:
            node = [unary_op(), None]
        else:
            node = [rng.choice(BINARY_OPS), None, None]
        container[idx] = node
        children = [(node, i) for i in range(1, arity + 1)]
        holes = children + holes[k + 1 :]
        remaining -= 1
    for container, idx in holes:
        container[idx] = leaf()
    return _freeze(root[0])


def _freeze(node) -> Expr:
    if isinstance(node, Expr):
        return node
    op = node[0]
    if len(node) == 2:
        return UnaryOp(op, _freeze(node[1]))
    return BinaryOp(op, _freeze(node[1]), _freeze(node[2]))


# --- systems -------------------------------------------------------------


@dataclass(frozen=True)
class System:
    """First-order system x' = f(x, u, t) with a designated equilibrium."""

    equations: tuple[Expr, ...]
    n_states: int
    n_controls: int
    has_time: bool
    x_eq: tuple[float, ...]
    u_eq: tuple[float, ...]

    @property
    def state_vars(self) -> tuple[str, ...]:
        return tuple(f"x{i}" for i in range(self.n_states))

    @property
    def control_vars(self) -> tuple[str, ...]:
        return tuple(f"u{i}" for i in range(self.n_controls))

    def eq_env(self) -> dict[str, complex]:
        env = {f"x{i}": complex(v) for i, v in enumerate(self.x_eq)}
        env.update({f"u{j}": complex(v) for j, v in enumerate(self.u_eq)})
        return env


def ensure_coverage(
    equations: Sequence[Expr], n_states: int, n_controls: int = 0
) -> None:
    """Reject systems in which a state or control variable appears nowhere.

    A missing state leaves a direction the dynamics never read; a missing
    control makes the declared input count a lie (its B column is zero by
    construction).  Both count as degenerate draws.
    """
    seen: set[str] = set()
    for eq in equations:
        seen |= free_vars(eq)
    missing = [f"x{i}" for i in range(n_states) if f"x{i}" not in seen]
    missing += [f"u{j}" for j in range(n_controls) if f"u{j}" not in seen]
    if missing:
        raise DegenerateSystem(f"variables absent from system: {missing}")


def sample_system(rng: random.Random, cfg: DistributionConfig) -> System:
    """Draw dimensions, equations, and the equilibrium point.

    Raises DegenerateSystem when a state variable is never mentioned; callers
    tally that as a rejection and redraw.
    """
    n = rng.randint(cfg.n_min, cfg.n_max)
    if cfg.q_max == 0:
        p = 0
    else:
        p = rng.randint(cfg.q_min, min(cfg.q_max, max(1, n // 2)))
    variables = [f"x{i}" for i in range(n)] + [f"u{j}" for j in range(p)]
    if cfg.include_time:
        variables.append("t")
    lo, hi = cfg.ops_range(n + p)
    equations = tuple(
        sample_tree(rng, rng.randint(lo, hi), variables, cfg) for _ in range(n)
    )
    x_val = rng.choice(cfg.x_eq_values()) if len(cfg.x_eq_values()) > 1 else cfg.x_eq
    system = System(
        equations=equations,
        n_states=n,
        n_controls=p,
        has_time=cfg.include_time,
        x_eq=(x_val,) * n,
        u_eq=(cfg.u_eq,) * p,
    )
    ensure_coverage(equations, n, p)
    return system


def make_equilibrium(
    system: System,
    *,
    allow_complex_shift: bool,
    t_eval: float = 0.5,
) -> System:
    """Shift every equation so the designated point is an exact equilibrium.

    Autonomous equations get a numeric offset f(x_e, u_e); equations that
    mention the time variable get a symbolic offset f(x_e, u_e, t) with t
    left free, constant-folded.  When ``allow_complex_shift`` is false, an
    offset with imaginary part beyond tolerance (evaluated at ``t_eval`` for
    time-dependent ones) raises ComplexJacobian.
    """
    env = system.eq_env()
    const_env = {name: ConstLeaf(v) for name, v in env.items()}
    shifted = []
    for eq in system.equations:
        if system.has_time and "t" in free_vars(eq):
            offset = constant_fold(substitute(eq, const_env))
            probe = eval_complex(offset, {"t": complex(t_eval)})
        else:
            probe = eval_complex(eq, env)
            offset = ConstLeaf(probe)
        if not allow_complex_shift and abs(probe.imag) > REAL_SHIFT_TOL:
            raise ComplexJacobian(
                f"equilibrium shift {probe:.3g} is not real"
            )
        shifted.append(sub(eq, offset))
    return replace(system, equations=tuple(shifted))


# --- counting -------------------------------------------------------------


def count_expressions(n_ops: int, L: int, q1: int, q2: int) -> int:
    """Exact number of distinct trees with ``n_ops`` operators.

    Convolution form: C(0) = L and
    C(m) = q1*C(m-1) + q2 * sum_{i+j=m-1} C(i)*C(j).
    Serves as the enumeration-backed cross-check for the closed recurrence.
    """
    if n_ops < 0 or L <= 0 or q1 < 0 or q2 < 0:
        raise ValueError("bad counting parameters")
    c = [L]
    for m in range(1, n_ops + 1):
        total = q1 * c[m - 1] + q2 * sum(c[i] * c[m - 1 - i] for i in range(m))
        c.append(total)
    return c[n_ops]


def problem_space_size(
    m: int,
    q: int | None = None,
    L: int | None = None,
    q1: int = 9,
    q2: int = 4,
) -> int:
    """Closed three-term recurrence for the m-operator expression count.

    Exactly one of ``q`` (variable count; leaf alphabet is then the 20
    nonzero integers plus the variables) or ``L`` (explicit leaf count) must
    be given.  All arithmetic is exact; a non-integral division raises
    NonIntegerRecurrence.
    """
    if (q is None) == (L is None):
        raise ValueError("pass exactly one of q or L")
    if L is None:
        if q < 0:
            raise ValueError("q must be nonnegative")
        L = 20 + q
    if m < 0 or L <= 0:
        raise ValueError("bad counting parameters")
    e_prev2 = L  # E_0
    if m == 0:
        return e_prev2
    e_prev1 = (q1 + q2 * L) * L  # E_1
    if m == 1:
        return e_prev1
    for k in range(2, m + 1):
        num = (q1 + 2 * q2 * L) * (2 * k - 1) * e_prev1 - q1 * (k - 2) * e_prev2
        den = k + 1
        if num % den:
            raise NonIntegerRecurrence(
                f"step {k}: {num} not divisible by {den} "
                f"(L={L}, q1={q1}, q2={q2})"
            )
        e_prev2, e_prev1 = e_prev1, num // den
    return e_prev1


def enumerate_trees(
    n_ops: int,
    leaves: Sequence[Expr],
    unary_ops: Sequence[str] = UNARY_OPS,
    binary_ops: Sequence[str] = BINARY_OPS,
) -> Iterator[Expr]:
    """Exhaustively yield every tree with exactly ``n_ops`` operators.

    Exponential; intended for tiny cross-checks of the counting functions.
    """
    if n_ops == 0:
        yield from leaves
        return
    for op in unary_ops:
        for child in enumerate_trees(n_ops - 1, leaves, unary_ops, binary_ops):
            yield UnaryOp(op, child)
    for op in binary_ops:
        for i in range(n_ops):
            for left in enumerate_trees(i, leaves, unary_ops, binary_ops):
                for right in enumerate_trees(
                    n_ops - 1 - i, leaves, unary_ops, binary_ops
                ):
                    yield BinaryOp(op, left, right)
