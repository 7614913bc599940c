"""Existence/decay oracle for constant-coefficient evolution equations.

The operator is a polynomial in the partial derivatives, stored as a
multi-index -> coefficient map.  Its symbol replaces each derivative of
order k along an axis by (i*xi)^k; initial conditions are per-axis products
of factors with known transforms (gaussian, sinc window, scaled impulse, or
the constant function) times complex exponential modulations, so their
frequency support is a Cartesian product of points, intervals, and full
lines computed structurally.

Units: supports are tracked in cycles (a sinc of slope a occupies
[-a/(2pi), a/(2pi)], a modulation of slope b shifts by b/(2pi)); the
minimum of the real symbol over the support is reported on the angular
scale, i.e. 2pi times the cycle-unit infimum.  The classification only
depends on the sign, which both scales share.
"""

from __future__ import annotations

import hashlib
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import DetectorDisagreement, MarginalSample

TWO_PI = 2.0 * math.pi
MAX_ORDER = 8
MARGINAL_BAND = 1e-9
FREE_AXIS_BOX = 40.0  # modulation shifts cap at 100/(2pi) ~ 15.9
GRID_BUDGET = 550_000
RAY_RADII = (1.0e3, 1.0e6)
RAY_BLOWDOWN = -900.0
ZERO_COEFF = 1e-12


# ---------------------------------------------------------------------------
# initial-condition factors and supports


@dataclass(frozen=True, slots=True)
class Gaussian:
    """exp(-(a*x)^2): transform is another gaussian, full-line support."""

    a: float


@dataclass(frozen=True, slots=True)
class Sinc:
    """sin(a*x)/(a*x): transform is a window on [-|a|, |a|]/(2pi)."""

    a: float


@dataclass(frozen=True, slots=True)
class DiracScaled:
    """Scaled unit impulse: transform is constant, full-line support."""

    a: float


@dataclass(frozen=True, slots=True)
class One:
    """Constant factor: transform is a point mass at frequency zero."""


Factor = Gaussian | Sinc | DiracScaled | One


@dataclass(frozen=True, slots=True)
class InitialCondition:
    """Per-axis base factors plus (axis, slope) modulation list."""

    factors: tuple[Factor, ...]
    modulations: tuple[tuple[int, float], ...] = ()

    def __post_init__(self):
        n = len(self.factors)
        for axis, _ in self.modulations:
            if not 0 <= axis < n:
                raise ValueError(f"modulation axis {axis} out of range for n={n}")


@dataclass(frozen=True, slots=True)
class Point:
    c: float


@dataclass(frozen=True, slots=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")


@dataclass(frozen=True, slots=True)
class FullLine:
    pass


FULL_LINE = FullLine()

AxisSupport = Point | Interval | FullLine


@dataclass(frozen=True, slots=True)
class SupportSet:
    axes: tuple[AxisSupport, ...]


@dataclass(frozen=True, slots=True)
class PDEVerdict:
    exists: bool
    vanishes: bool
    support: SupportSet
    min_real: float


# ---------------------------------------------------------------------------
# operators and symbols


@dataclass(frozen=True, slots=True)
class DiffOperator:
    """Multi-index -> coefficient map; at least one term must be nonzero."""

    n_axes: int
    terms: tuple[tuple[tuple[int, ...], float], ...]

    def __post_init__(self):
        if self.n_axes < 1:
            raise ValueError("operator needs at least one axis")
        seen = set()
        any_nonzero = False
        for alpha, coeff in self.terms:
            if len(alpha) != self.n_axes:
                raise ValueError(f"multi-index {alpha} has wrong length")
            if any(k < 0 for k in alpha):
                raise ValueError(f"negative derivative order in {alpha}")
            if sum(alpha) > MAX_ORDER:
                raise ValueError(f"order {sum(alpha)} exceeds {MAX_ORDER}")
            if alpha in seen:
                raise ValueError(f"duplicate multi-index {alpha}")
            seen.add(alpha)
            any_nonzero |= coeff != 0
        if not any_nonzero:
            raise ValueError("operator has no nonzero coefficient")

    @classmethod
    def from_dict(cls, n_axes: int, terms: dict[tuple[int, ...], float]) -> DiffOperator:
        return cls(n_axes, tuple(sorted(terms.items())))


def fourier_polynomial(op: DiffOperator) -> dict[tuple[int, ...], complex]:
    """Symbol of the operator: the xi^alpha coefficient is a_alpha * i^|alpha|."""
    out: dict[tuple[int, ...], complex] = {}
    for alpha, coeff in op.terms:
        if coeff == 0:
            continue
        out[alpha] = coeff * (1j) ** (sum(alpha) % 4)
    return out


def real_part(poly: dict[tuple[int, ...], complex]) -> dict[tuple[int, ...], float]:
    """Monomials of Re f; even-order terms of a real operator land here exactly."""
    return {a: c.real for a, c in poly.items() if c.real != 0.0}


def support_of(u0: InitialCondition) -> SupportSet:
    shifts = [0.0] * len(u0.factors)
    for axis, b in u0.modulations:
        shifts[axis] += b
    axes: list[AxisSupport] = []
    for factor, b in zip(u0.factors, shifts):
        c = b / TWO_PI
        if isinstance(factor, (Gaussian, DiracScaled)):
            axes.append(FULL_LINE)
        elif isinstance(factor, Sinc):
            half = abs(factor.a) / TWO_PI
            axes.append(Interval(c - half, c + half))
        elif isinstance(factor, One):
            axes.append(Point(c))
        else:  # pragma: no cover - closed union
            raise TypeError(f"unknown factor {factor!r}")
    return SupportSet(tuple(axes))


# ---------------------------------------------------------------------------
# minimization of the real symbol over a support set


def _split_axes(support: SupportSet):
    """Indices of the moving axes, their boxes, and the fixed-point values."""
    var_idx: list[int] = []
    boxes: list[tuple[float, float]] = []
    free: list[bool] = []
    fixed = [0.0] * len(support.axes)
    for j, ax in enumerate(support.axes):
        if isinstance(ax, Point):
            fixed[j] = ax.c
        elif isinstance(ax, Interval):
            var_idx.append(j)
            boxes.append((ax.lo, ax.hi))
            free.append(False)
        else:
            var_idx.append(j)
            boxes.append((-FREE_AXIS_BOX, FREE_AXIS_BOX))
            free.append(True)
    return var_idx, boxes, free, fixed


def _eval_many(terms, pts: np.ndarray) -> np.ndarray:
    """Re f at each row of pts; loops over the (few) monomials, vectorized in points."""
    out = np.zeros(len(pts))
    for alpha, coeff in terms:
        term = np.full(len(pts), coeff)
        for j, k in enumerate(alpha):
            if k:
                term *= pts[:, j] ** k
        out += term
    return out


def _content_rng(terms, support: SupportSet) -> np.random.Generator:
    h = hashlib.blake2b(digest_size=8)
    for alpha, coeff in sorted(terms):
        h.update(repr((alpha, float(coeff))).encode())
    h.update(repr(support).encode())
    return np.random.Generator(np.random.PCG64(int.from_bytes(h.digest(), "big")))


def _ray_poly(terms, fixed, var_idx, free_mask, direction, anchor) -> np.ndarray:
    """Coefficients (by power of the ray parameter) of Re f along xi = base + r*d.

    Free axes move as r*d_j from 0; bounded axes sit at their anchor values.
    Only exact-ray motion is supported, which keeps this a plain 1-D polynomial.
    """
    point = list(fixed)
    for slot, j in enumerate(var_idx):
        point[j] = anchor[slot]
    coeffs = np.zeros(MAX_ORDER + 1)
    for alpha, coeff in terms:
        power = 0
        c = coeff
        for slot, j in enumerate(var_idx):
            k = alpha[j]
            if not k:
                continue
            if free_mask[slot]:
                power += k
                c *= direction[slot] ** k
            else:
                c *= point[j] ** k
        for j, k in enumerate(alpha):
            if k and j not in var_idx:
                c *= point[j] ** k
        coeffs[power] += c
    return coeffs


def _structural_unbounded(terms, fixed, var_idx, free_mask, patterns, anchors) -> bool:
    """Sound certificate search: a ray whose leading coefficient is negative."""
    for direction in patterns:
        for anchor in anchors:
            coeffs = _ray_poly(terms, fixed, var_idx, free_mask, direction, anchor)
            scale = max(1.0, float(np.abs(coeffs).max()))
            lead = 0.0
            for power in range(MAX_ORDER, 0, -1):
                if abs(coeffs[power]) > ZERO_COEFF * scale:
                    lead = coeffs[power]
                    break
            if lead < 0:
                return True
    return False


def _numeric_unbounded(terms, fixed, var_idx, free_mask, directions, anchors) -> bool:
    """Blow-down probe: Re f at two radii along each direction must plunge."""
    n = len(fixed)
    for direction in directions:
        for anchor in anchors:
            base = np.array(fixed)
            for slot, j in enumerate(var_idx):
                base[j] = 0.0 if free_mask[slot] else anchor[slot]
            ray = np.zeros(n)
            for slot, j in enumerate(var_idx):
                if free_mask[slot]:
                    ray[j] = direction[slot]
            pts = np.stack([base + r * ray for r in RAY_RADII])
            v3, v6 = _eval_many(terms, pts)
            if v6 < RAY_BLOWDOWN and v6 < 2.0 * v3:
                return True
    return False


def _axis_anchors(boxes, free_mask, rng) -> list[tuple[float, ...]]:
    """Coarse bounded-axis grid (ends + midpoint) plus two hashed interior points."""
    slots = []
    for (lo, hi), is_free in zip(boxes, free_mask):
        if is_free:
            slots.append((0.0,))
        else:
            slots.append((lo, 0.5 * (lo + hi), hi))
    grid = list(itertools.product(*slots))
    if len(grid) > 64:
        keep = rng.choice(len(grid), size=64, replace=False)
        grid = [grid[i] for i in keep]
    for _ in range(2):
        u = rng.uniform(0.05, 0.95, size=len(boxes))
        grid.append(
            tuple(
                0.0 if is_free else lo + ui * (hi - lo)
                for (lo, hi), is_free, ui in zip(boxes, free_mask, u)
            )
        )
    return grid


def _grid_nodes(k: int) -> int:
    nodes = 65
    while nodes > 2 and nodes**k > GRID_BUDGET:
        nodes = max(2, int(GRID_BUDGET ** (1.0 / k)))
    return nodes


def _line_minimize(terms, point, j, lo, hi) -> tuple[float, float]:
    """Exact minimum of the univariate restriction along axis j over [lo, hi]."""
    coeffs = np.zeros(MAX_ORDER + 1)
    for alpha, coeff in terms:
        c = coeff
        for i, k in enumerate(alpha):
            if i == j or not k:
                continue
            c *= point[i] ** k
        coeffs[alpha[j]] += c
    deg = MAX_ORDER
    while deg > 0 and coeffs[deg] == 0.0:
        deg -= 1
    candidates = [lo, hi]
    if deg >= 2:
        dcoeffs = [coeffs[p] * p for p in range(deg, 0, -1)]
        roots = np.roots(dcoeffs)
        for r in roots:
            if abs(r.imag) < 1e-9 and lo <= r.real <= hi:
                candidates.append(float(r.real))
    best_x, best_v = lo, math.inf
    for x in candidates:
        # Horner on the ascending coefficient array
        v = 0.0
        for p in range(deg, -1, -1):
            v = v * x + coeffs[p]
        if v < best_v:
            best_x, best_v = x, v
    return best_x, best_v


def _polish(terms, start, var_idx, boxes, fixed) -> float:
    point = list(fixed)
    for slot, j in enumerate(var_idx):
        point[j] = start[slot]
    value = float(_eval_many(terms, np.array([point]))[0])
    for _ in range(60):
        improved = False
        for slot, j in enumerate(var_idx):
            lo, hi = boxes[slot]
            x, v = _line_minimize(terms, point, j, lo, hi)
            if v < value - 1e-12 * (1.0 + abs(value)):
                point[j] = x
                value = v
                improved = True
        if not improved:
            break
    return value


def min_real_on_support(
    poly: dict[tuple[int, ...], complex], support: SupportSet
) -> float:
    """2pi times the infimum of Re f over the support; -inf when unbounded below.

    Raises DetectorDisagreement when the structural ray test and the numeric
    blow-down probe do not reach the same unboundedness verdict.
    """
    re_terms = sorted(real_part(poly).items())
    if not re_terms:
        return 0.0
    var_idx, boxes, free_mask, fixed = _split_axes(support)

    if any(free_mask):
        k = sum(free_mask)
        rng = _content_rng(re_terms, support)
        anchors = _axis_anchors(boxes, free_mask, rng)
        patterns = []
        for signs in itertools.product((-1.0, 0.0, 1.0), repeat=k):
            if not any(signs):
                continue
            it = iter(signs)
            patterns.append(
                tuple(next(it) if is_free else 0.0 for is_free in free_mask)
            )
        extra = rng.normal(size=(2**k * k * k, k))
        hashed = []
        for row in extra:
            norm = float(np.linalg.norm(row))
            if norm < 1e-12:
                continue
            it = iter(row / norm)
            hashed.append(
                tuple(float(next(it)) if is_free else 0.0 for is_free in free_mask)
            )
        structural = _structural_unbounded(
            re_terms, fixed, var_idx, free_mask, patterns, anchors
        )
        numeric = _numeric_unbounded(
            re_terms, fixed, var_idx, free_mask, patterns + hashed, anchors
        )
        if structural != numeric:
            raise DetectorDisagreement(
                f"ray test says {'unbounded' if structural else 'bounded'}, "
                f"radius probe says {'unbounded' if numeric else 'bounded'}"
            )
        if structural:
            return -math.inf

    if not var_idx:
        return TWO_PI * float(_eval_many(re_terms, np.array([fixed]))[0])

    nodes = _grid_nodes(len(var_idx))
    axes = [np.linspace(lo, hi, nodes) for lo, hi in boxes]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.zeros((mesh[0].size, len(fixed)))
    pts[:] = fixed
    for slot, j in enumerate(var_idx):
        pts[:, j] = mesh[slot].ravel()
    values = _eval_many(re_terms, pts)
    order = np.argsort(values)[:5]
    best = math.inf
    for i in order:
        start = tuple(pts[i, j] for j in var_idx)
        best = min(best, _polish(re_terms, start, var_idx, boxes, fixed))
    return TWO_PI * best


def classify_pde(op: DiffOperator, u0: InitialCondition) -> PDEVerdict:
    """(exists, vanishes) from the sign of the support minimum of the symbol.

    Raises MarginalSample when the finite minimum sits inside the +-1e-9 band,
    DetectorDisagreement when unboundedness cannot be decided consistently.
    """
    support = support_of(u0)
    m = min_real_on_support(fourier_polynomial(op), support)
    if m == -math.inf:
        return PDEVerdict(exists=False, vanishes=False, support=support, min_real=m)
    if abs(m) < MARGINAL_BAND:
        raise MarginalSample(f"support minimum {m:.3g} within +-1e-9 of zero")
    return PDEVerdict(exists=True, vanishes=m > 0, support=support, min_real=m)


# ---------------------------------------------------------------------------
# samplers


def _half_scaled(rng, lo: int, hi: int) -> float:
    """Nonzero integer in [lo, hi], halved one time in four."""
    v = 0
    while v == 0:
        v = rng.randint(lo, hi)
    return v / 2.0 if rng.random() < 0.25 else float(v)


def sample_operator(rng, n_axes: int, max_order: int = MAX_ORDER) -> DiffOperator:
    """Random operator: 2..2n terms, orders <= max_order, at least one derivative."""
    n_terms = rng.randint(2, 2 * n_axes)
    terms: dict[tuple[int, ...], float] = {}
    while len(terms) < n_terms:
        total = rng.randint(0 if terms else 1, max_order)
        alpha = [0] * n_axes
        for _ in range(total):
            alpha[rng.randrange(n_axes)] += 1
        key = tuple(alpha)
        if key in terms:
            continue
        terms[key] = _half_scaled(rng, -9, 9)
    if all(sum(a) == 0 for a in terms):  # pragma: no cover - guarded by total>=1
        raise AssertionError
    return DiffOperator.from_dict(n_axes, terms)


def sample_initial_condition(rng, n_axes: int) -> InitialCondition:
    """Per-axis factor from the four families; 0..2n modulations."""
    factories = (
        lambda: Gaussian(_half_scaled(rng, -100, 100)),
        lambda: Sinc(_half_scaled(rng, -100, 100)),
        lambda: DiracScaled(_half_scaled(rng, -100, 100)),
        lambda: One(),
    )
    factors = tuple(factories[rng.randrange(4)]() for _ in range(n_axes))
    n_mod = rng.randint(0, 2 * n_axes)
    mods = tuple(
        (rng.randrange(n_axes), _half_scaled(rng, -100, 100)) for _ in range(n_mod)
    )
    return InitialCondition(factors=factors, modulations=mods)
