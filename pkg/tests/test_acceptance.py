"""Acceptance gate: one test per shipping criterion.

Golden values are frozen from high-precision recomputation (mpmath, 50
digits) of the worked examples; two criteria assert quoted values that the
underlying mathematics contradicts, and those are marked xfail(strict=True)
with the companion test freezing the true values next to them.  Property
tests draw fresh random instances every run from pinned seeds.
"""

import dataclasses
import math
import random
import time

import numpy as np
import pytest

from dynsys.control import (
    Linearization,
    controllability,
    feedback_matrix,
    kalman_matrix,
    linearize,
    verify_feedback,
)
from dynsys.errors import (
    DynSysError,
    EvalOverflow,
    EvalSingular,
    GramianSingular,
)
from dynsys.expr import (
    BinaryOp,
    ConstLeaf,
    IntLeaf,
    UnaryOp,
    VarLeaf,
    differentiate,
    eval_complex,
    free_vars,
)
from dynsys.linalg import gramian_vanloan
from dynsys.pde import (
    FULL_LINE,
    TWO_PI,
    DiffOperator,
    Gaussian,
    InitialCondition,
    Interval,
    One,
    Point,
    Sinc,
    classify_pde,
)
from dynsys.pipeline import GenJob, generate, task_config
from dynsys.sampler import (
    DistributionConfig,
    System,
    count_expressions,
    enumerate_trees,
    problem_space_size,
    sample_tree,
)
from dynsys.stability import classify_stability

pytestmark = pytest.mark.acceptance


def x(i):
    return VarLeaf(f"x{i}")


def u(i):
    return VarLeaf(f"u{i}")


def add(a, b):
    return BinaryOp("add", a, b)


def sub(a, b):
    return BinaryOp("sub", a, b)


def mul(a, b):
    return BinaryOp("mul", a, b)


def stability_example():
    # x0' = cos(x1) - 1 - sin(x0), x1' = x0^2 - sqrt(1 + x1) at (0.1, 0.1)
    eq0 = sub(sub(UnaryOp("cos", x(1)), IntLeaf(1)), UnaryOp("sin", x(0)))
    eq1 = sub(mul(x(0), x(0)), UnaryOp("sqrt", add(IntLeaf(1), x(1))))
    return System(
        equations=(eq0, eq1), n_states=2, n_controls=0, has_time=False,
        x_eq=(0.1, 0.1), u_eq=(),
    )


def control_example():
    # two states, one control, equilibrium x = (0.5, 0.5), u = 1
    eq0 = add(
        add(
            UnaryOp("sin", mul(x(0), x(0))),
            UnaryOp("log", add(IntLeaf(1), x(1))),
        ),
        BinaryOp("div", UnaryOp("atan", mul(u(0), x(0))), add(IntLeaf(1), x(1))),
    )
    eq1 = sub(x(1), UnaryOp("exp", mul(x(0), x(1))))
    return System(
        equations=(eq0, eq1), n_states=2, n_controls=1, has_time=False,
        x_eq=(0.5, 0.5), u_eq=(1.0,),
    )


def pde_example():
    op = DiffOperator.from_dict(
        3,
        {
            (2, 0, 0): 2.0,
            (0, 2, 0): 0.5,
            (0, 0, 4): 1.0,
            (1, 1, 0): -7.0,
            (0, 1, 2): -1.5,
        },
    )
    u0 = InitialCondition(
        factors=(Sinc(1.0), One(), Gaussian(1.0)),
        modulations=((2, -3.0), (1, 2.5)),
    )
    return op, u0


# --- golden examples ---------------------------------------------------------


@pytest.mark.xfail(
    strict=True,
    reason="the quoted pair {-1.031, -0.441} matches this Jacobian only with "
    "its (1,0) entry negated — a determinant sign slip; the companion test "
    "freezes the true spectrum",
)
def test_stability_golden_quoted_eigenvalues():
    v = classify_stability(stability_example())
    got = sorted(e.real for e in v.eigenvalues)
    assert got == pytest.approx([-1.031, -0.441], abs=1e-3)
    assert v.decay == pytest.approx(0.441, abs=1e-3)


def test_stability_golden_true_spectrum_and_latency():
    s = stability_example()
    classify_stability(s)  # warm import/caches before timing
    t0 = time.perf_counter()
    v = classify_stability(s)
    elapsed = time.perf_counter() - t0
    assert v.stable
    got = sorted(e.real for e in v.eigenvalues)
    assert got == pytest.approx(
        [-0.9530888357043756, -0.5186466241972267], abs=1e-11
    )
    assert v.decay == pytest.approx(0.5186466241972267, abs=1e-11)
    assert all(abs(e.imag) < 1e-12 for e in v.eigenvalues)
    assert elapsed < 1e-3


def test_control_golden_worked_pair():
    lin = linearize(control_example())
    assert lin.A == pytest.approx(
        np.array([[1.50, 0.46], [-0.64, 0.36]]), abs=5e-3
    )
    assert lin.B == pytest.approx(np.array([[0.27], [0.0]]), abs=5e-3)
    kal = kalman_matrix(lin)
    assert kal == pytest.approx(
        np.array([[0.27, 0.40], [0.0, -0.17]]), abs=5e-3
    )
    verdict = controllability(lin)
    assert verdict.uncontrollable_dim == 0  # Kalman rank n - 0 = 2
    assert verdict.controllable
    # the quoted gain stabilizes, and so does ours
    assert verify_feedback(lin.A, lin.B, np.array([[-22.8, 44.0]]))
    K = feedback_matrix(lin, T=1.0)
    assert verify_feedback(lin.A, lin.B, K)


def test_pde_golden_support_minimum_verdict():
    op, u0 = pde_example()
    v = classify_pde(op, u0)
    half = 1.0 / TWO_PI
    ax0, ax1, ax2 = v.support.axes
    assert isinstance(ax0, Interval)
    assert ax0.lo == pytest.approx(-half, abs=1e-12)
    assert ax0.hi == pytest.approx(half, abs=1e-12)
    assert isinstance(ax1, Point)
    assert ax1.c == pytest.approx(2.5 / TWO_PI, abs=1e-12)
    assert ax2 == FULL_LINE
    assert v.min_real == pytest.approx(-3.597, abs=1e-2)
    assert (v.exists, v.vanishes) == (True, False)


# --- theorem-level property suite --------------------------------------------

_PROPERTY_SECONDS: dict[str, float] = {}


def test_feedback_stabilizes_200_random_controllable_pairs():
    t0 = time.perf_counter()
    rng = random.Random(101)
    verified = attempts = 0
    while verified < 200:
        attempts += 1
        assert attempts < 4000, "rejection rate out of control"
        n = rng.randint(2, 5)
        p = rng.randint(1, 2)
        A = np.array([[rng.uniform(-2, 2) for _ in range(n)] for _ in range(n)])
        B = np.array([[rng.uniform(-2, 2) for _ in range(p)] for _ in range(n)])
        lin = Linearization(A=A, B=B, sym_A=(), sym_B=(), n=n, p=p)
        if not controllability(lin).controllable:
            continue
        try:
            K = feedback_matrix(lin, T=1.0)
        except GramianSingular:
            continue  # the one sanctioned numerical escape hatch
        assert verify_feedback(A, B, K), (A, B, K)
        verified += 1
    _PROPERTY_SECONDS["feedback"] = time.perf_counter() - t0


def test_kalman_rank_iff_gramian_definite_200_pairs():
    t0 = time.perf_counter()
    rng = random.Random(102)
    for _ in range(200):
        n = rng.randint(1, 4)
        p = rng.randint(1, 2)
        if rng.random() < 0.5:
            A = np.array([[rng.uniform(-2, 2) for _ in range(n)] for _ in range(n)])
            B = np.array([[rng.uniform(-2, 2) for _ in range(p)] for _ in range(n)])
        else:
            # planted uncontrollable pair: inputs only reach the first state
            A = np.diag([rng.uniform(-2, 2) for _ in range(n)])
            B = np.zeros((n, p))
            B[0, :] = 1.0
        lin = Linearization(A=A, B=B, sym_A=(), sym_B=(), n=n, p=p)
        full_rank = controllability(lin).controllable
        lam = np.linalg.eigvalsh(gramian_vanloan(A, B, 1.0))
        definite = bool(lam.min() > 1e-12 * max(lam.max(), 1e-30))
        assert full_rank == definite, (A, B, lam)
    _PROPERTY_SECONDS["kalman-gramian"] = time.perf_counter() - t0


def test_symbolic_derivative_matches_finite_difference_10k():
    t0 = time.perf_counter()
    rng = random.Random(103)
    cfg = task_config("stability")
    names = ("x0", "x1", "x2")
    h = 1e-6
    checked = attempts = 0
    while checked < 10_000:
        attempts += 1
        assert attempts < 200_000, "finite-difference filter rejecting too much"
        e = sample_tree(rng, rng.randint(1, 8), names, cfg)
        present = sorted(free_vars(e))
        if not present:
            continue
        var = rng.choice(present)
        pt = {
            name: complex(rng.uniform(-1, 1), rng.uniform(-1, 1))
            for name in present
        }
        try:
            d_sym = eval_complex(differentiate(e, var), pt)
            up, dn = dict(pt), dict(pt)
            up[var] = pt[var] + h
            dn[var] = pt[var] - h
            f_up = eval_complex(e, up)
            f_dn = eval_complex(e, dn)
            fd = (f_up - f_dn) / (2 * h)
            up[var] = pt[var] + h / 2
            dn[var] = pt[var] - h / 2
            fd2 = (eval_complex(e, up) - eval_complex(e, dn)) / h
        except (EvalSingular, EvalOverflow):
            continue
        if max(abs(f_up), abs(f_dn)) > 1e3:
            continue  # FD noise floor |f| eps/h would drown the tolerance
        if abs(fd - fd2) > 1e-4 * (1 + abs(fd)):
            continue  # FD itself unstable near a singularity; not evidence
        assert abs(d_sym - fd) <= 1e-5 * (1 + abs(d_sym))
        checked += 1
    _PROPERTY_SECONDS["derivative-fd"] = time.perf_counter() - t0


def test_linear_decay_equals_spectral_abscissa_1k():
    t0 = time.perf_counter()
    rng = np.random.default_rng(104)
    for _ in range(1000):
        n = int(rng.integers(1, 7))
        M = rng.normal(scale=2.0, size=(n, n))
        eqs = []
        for i in range(n):
            expr = mul(ConstLeaf(float(M[i, 0])), x(0))
            for j in range(1, n):
                expr = add(expr, mul(ConstLeaf(float(M[i, j])), x(j)))
            eqs.append(expr)
        system = System(
            equations=tuple(eqs), n_states=n, n_controls=0, has_time=False,
            x_eq=(0.0,) * n, u_eq=(),
        )
        v = classify_stability(system, marginal_band=0.0)
        abscissa = float(np.max(np.linalg.eigvals(M).real))
        assert abs(v.decay + abscissa) <= 1e-9
    _PROPERTY_SECONDS["linear-decay"] = time.perf_counter() - t0


def test_property_suite_single_threaded_runtime():
    needed = {"feedback", "kalman-gramian", "derivative-fd", "linear-decay"}
    if not needed <= _PROPERTY_SECONDS.keys():
        pytest.skip("property tests did not all run in this session")
    assert sum(_PROPERTY_SECONDS.values()) < 300.0, _PROPERTY_SECONDS


# --- dataset statistics -------------------------------------------------------


def _class_rate(tmp_path, task, seed=123):
    job = GenJob(
        task=task, config=task_config(task), count=10_000,
        out_template=str(tmp_path / (task + "-{shard}.tsv")),
        shard_size=10_000, seed=seed,
    )
    report = generate(job)
    assert report["records"] == 10_000
    return report["class_counts"].get("controllable", 0) / report["records"]


def test_autonomous_control_base_rate_10k(tmp_path):
    assert _class_rate(tmp_path, "ctrl-auto") > 0.95


def test_nonautonomous_control_base_rate_10k(tmp_path):
    assert _class_rate(tmp_path, "ctrl-nonauto") == pytest.approx(0.83, abs=0.02)


# --- counting -----------------------------------------------------------------

# (operators m, variables q, equations per system) -> quoted magnitude
_SPACE_CLAIMS = (
    (14, 6, 6, 3e212),
    (20, 9, 6, 4e310),
    (10, 5, 3, 5e74),
)


def _log10_big(value: int) -> float:
    s = str(value)
    return (len(s) - 1) + math.log10(float("0." + s[:17]) * 10.0)


@pytest.mark.xfail(
    strict=True,
    reason="the quoted order-of-magnitude triple is off by 1e2.8-1e6.9 from "
    "what the pinned recurrence (or exhaustive enumeration) produces; the "
    "companion test freezes the exact magnitudes",
)
def test_counting_quoted_magnitudes():
    for m, q, eqs, claim in _SPACE_CLAIMS:
        total = problem_space_size(m, q=q) ** eqs
        assert abs(_log10_big(total) - math.log10(claim)) <= 1.0, (m, q)


def test_counting_exact_magnitudes():
    # digit counts and leading digits frozen from exact integer arithmetic
    frozen = {
        (14, 6, 6): (219, "136078221168077", 218.133789),
        (20, 9, 6): (318, "308787802877021", 317.489660),
        (10, 5, 3): (78, "314302830691316", 77.497348),
    }
    for m, q, eqs, _ in _SPACE_CLAIMS:
        total = problem_space_size(m, q=q) ** eqs
        digits, head, lg = frozen[(m, q, eqs)]
        s = str(total)
        assert len(s) == digits
        assert s[:15] == head
        assert _log10_big(total) == pytest.approx(lg, abs=5e-6)


def test_counting_matches_exhaustive_enumeration_small():
    leaves = [x(0), IntLeaf(1)]
    for m in range(4):
        brute = sum(
            1 for _ in enumerate_trees(m, leaves, ["sqrt"], ["add", "mul"])
        )
        assert brute == count_expressions(m, L=2, q1=1, q2=2)
        assert brute == problem_space_size(m, L=2, q1=1, q2=2)


# --- determinism and throughput -------------------------------------------------


def test_shard_regeneration_byte_identical(tmp_path):
    blobs = []
    for run in ("first", "second"):
        d = tmp_path / run
        d.mkdir()
        job = GenJob(
            task="stability", config=task_config("stability"), count=400,
            out_template=str(d / "s-{shard}.tsv"), shard_size=200, seed=11,
        )
        generate(job)
        blobs.append(
            [
                (job.shard_path(i).split("/")[-1], open(job.shard_path(i), "rb").read(),
                 open(job.meta_path(i), "rb").read())
                for i in range(job.n_shards())
            ]
        )
    assert blobs[0] == blobs[1]


def test_stability_throughput_degree3(tmp_path):
    cfg = dataclasses.replace(task_config("stability"), n_min=3, n_max=3)
    job = GenJob(
        task="stability", config=cfg, count=2000,
        out_template=str(tmp_path / "deg3-{shard}.tsv"), shard_size=2000,
        seed=17,
    )
    t0 = time.perf_counter()
    report = generate(job)
    elapsed = time.perf_counter() - t0
    assert report["records"] == 2000
    assert 2000 / elapsed >= 500.0, f"{2000 / elapsed:.0f} records/sec"
