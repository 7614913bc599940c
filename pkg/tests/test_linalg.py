import math
import random

import numpy as np
import pytest

from dynsys.errors import (
    ComplexJacobian,
    NoConvergence,
    Overflow,
    QuadratureStall,
)
from dynsys.linalg import (
    cond,
    decay_rate,
    eigenvalues,
    exact_rank,
    expm,
    gramian_quadrature,
    gramian_vanloan,
    rank,
    real_view,
)


from conftest import assert_spectra_match


def _stable_pair(rng, n, p):
    """Random (A, B) with A shifted to be comfortably Hurwitz."""
    A = np.array([[rng.uniform(-1, 1) for _ in range(n)] for _ in range(n)])
    A -= (max(np.linalg.eigvals(A).real) + rng.uniform(0.2, 1.0)) * np.eye(n)
    B = np.array([[rng.uniform(-1, 1) for _ in range(p)] for _ in range(n)])
    return A, B


class TestEigenvalues:
    def test_reference_jacobian(self):
        # values frozen against a 50-digit evaluation of the characteristic
        # polynomial roots for this exact float matrix
        J = [
            [-math.cos(0.1), -math.sin(0.1)],
            [0.2, -1.0 / (2.0 * math.sqrt(1.1))],
        ]
        eigs = sorted(eigenvalues(J).real)
        assert abs(eigs[0] - (-0.9530888357043756)) < 1e-12
        assert abs(eigs[1] - (-0.5186466241972267)) < 1e-12
        assert decay_rate(eigenvalues(J)) == pytest.approx(0.5186466241972267)

    def test_complex_pair(self):
        eigs = eigenvalues([[0.0, 1.0], [-1.0, 0.0]])
        assert sorted(e.imag for e in eigs) == pytest.approx([-1.0, 1.0])
        assert eigs.real == pytest.approx([0.0, 0.0])

    def test_triangular_exact(self):
        eigs = sorted(eigenvalues([[2.0, 5.0], [0.0, -3.0]]).real)
        assert eigs == pytest.approx([-3.0, 2.0])

    def test_shape_checks(self):
        with pytest.raises(ValueError):
            eigenvalues(np.zeros((2, 3)))
        with pytest.raises(ValueError):
            eigenvalues(np.zeros((17, 17)))

    def test_no_convergence_translation(self, monkeypatch):
        def boom(_):
            raise np.linalg.LinAlgError("did not converge")

        monkeypatch.setattr(np.linalg, "eigvals", boom)
        with pytest.raises(NoConvergence):
            eigenvalues(np.eye(2))

    def test_negation_flips_spectrum(self):
        rng = random.Random(11)
        for _ in range(50):
            n = rng.randint(1, 5)
            A = np.array([[rng.uniform(-2, 2) for _ in range(n)] for _ in range(n)])
            assert_spectra_match(eigenvalues(A), -eigenvalues(-A), 1e-9)


class TestRealView:
    def test_accepts_tiny_imag(self):
        M = np.array([[1 + 1e-12j, 0], [0, 2 - 1e-13j]])
        out = real_view(M)
        assert out.dtype == float
        assert out == pytest.approx(np.diag([1.0, 2.0]))

    def test_rejects_large_imag(self):
        with pytest.raises(ComplexJacobian):
            real_view(np.array([[1 + 1e-6j]]))


class TestRank:
    def test_full_and_deficient(self):
        assert rank(np.eye(3)) == 3
        assert rank([[1.0, 2.0], [2.0, 4.0]]) == 1
        assert rank(np.zeros((3, 3))) == 0
        assert rank([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]) == 2

    def test_threshold_scaling(self):
        # a direction 1e-8 below sigma_max counts at the default tolerance
        M = np.diag([1.0, 1e-8])
        assert rank(M) == 2
        assert rank(M, rel_tol=1e-6) == 1

    def test_wide_matrix(self):
        M = np.hstack([np.eye(3), np.eye(3)])
        assert rank(M) == 3


class TestExactRank:
    def test_graded_independent_columns_survive(self):
        # the SVD threshold writes off the 1e-30 direction; the rational
        # elimination keeps it
        M = np.diag([1.0, 1e-30])
        assert rank(M) == 1
        assert exact_rank(M) == 2

    def test_exact_dependencies_detected(self):
        assert exact_rank([[1.0, 2.0], [2.0, 4.0]]) == 1
        col = np.array([[1e-100], [1e100]])
        assert exact_rank(np.hstack([col, 2.0 * col])) == 1
        assert exact_rank(np.zeros((3, 3))) == 0
        assert exact_rank(np.zeros((2, 0))) == 0

    def test_matches_integer_rank(self):
        rng = random.Random(3)
        for _ in range(60):
            m = rng.randint(1, 5)
            n = rng.randint(1, 7)
            M = np.array([[rng.randint(-4, 4) for _ in range(n)] for _ in range(m)],
                         dtype=float)
            assert exact_rank(M) == np.linalg.matrix_rank(M)

    def test_row_scaling_invariance(self):
        rng = random.Random(4)
        M = np.array([[rng.uniform(-1, 1) for _ in range(6)] for _ in range(4)])
        scaled = M * np.array([[2.0**-500], [1.0], [2.0**500], [2.0**-40]])
        assert exact_rank(scaled) == exact_rank(M)

    def test_non_finite_rejected(self):
        with pytest.raises(Overflow):
            exact_rank([[1.0, np.inf]])


class TestExpm:
    def test_scalar(self):
        assert expm([[1.0]])[0, 0] == pytest.approx(math.e, rel=1e-14)

    def test_nilpotent(self):
        N = np.array([[0.0, 1.0], [0.0, 0.0]])
        assert expm(N) == pytest.approx(np.array([[1.0, 1.0], [0.0, 1.0]]))

    def test_transpose_property(self):
        rng = random.Random(12)
        for _ in range(40):
            n = rng.randint(1, 6)
            A = np.array([[rng.uniform(-3, 3) for _ in range(n)] for _ in range(n)])
            E1 = expm(A.T)
            E2 = expm(A).T
            denom = max(1.0, float(np.linalg.norm(E2, "fro")))
            assert float(np.linalg.norm(E1 - E2, "fro")) / denom < 1e-11

    def test_overflow_guard(self):
        with pytest.raises(Overflow):
            expm(np.diag([800.0, 0.0]))

    def test_inverse_identity(self):
        A = np.array([[0.3, -1.2], [0.7, 0.1]])
        assert expm(A) @ expm(-A) == pytest.approx(np.eye(2), abs=1e-12)


class TestGramian:
    def test_scalar_golden(self):
        # integral_0^1 e^{2t} dt for A = [-1]
        W = gramian_quadrature(np.array([[-1.0]]), np.array([[1.0]]), 1.0)
        assert W[0, 0] == pytest.approx((math.e**2 - 1) / 2, rel=1e-10)
        assert W[0, 0] == pytest.approx(3.194528049465325, rel=1e-10)

    def test_vanloan_scalar(self):
        W = gramian_vanloan(np.array([[-1.0]]), np.array([[1.0]]), 1.0)
        assert W[0, 0] == pytest.approx((math.e**2 - 1) / 2, rel=1e-12)

    def test_zero_a_gives_bbt(self):
        B = np.array([[1.0, 2.0], [0.5, -1.0], [0.0, 3.0]])
        for W in (
            gramian_quadrature(np.zeros((3, 3)), B, 1.0),
            gramian_vanloan(np.zeros((3, 3)), B, 1.0),
        ):
            assert W == pytest.approx(B @ B.T, abs=1e-12)

    def test_routes_agree(self):
        rng = random.Random(13)
        for _ in range(25):
            n = rng.randint(1, 5)
            p = rng.randint(1, 2)
            A, B = _stable_pair(rng, n, p)
            Wq = gramian_quadrature(A, B, 1.0)
            Wv = gramian_vanloan(A, B, 1.0)
            scale = max(1.0, float(np.linalg.norm(Wq, "fro")))
            assert float(np.linalg.norm(Wq - Wv, "fro")) / scale < 1e-8

    def test_symmetric_psd(self):
        rng = random.Random(14)
        for _ in range(20):
            n = rng.randint(1, 4)
            A, B = _stable_pair(rng, n, 1)
            W = gramian_vanloan(A, B, 1.0)
            assert W == pytest.approx(W.T)
            assert min(np.linalg.eigvalsh(W)) > -1e-12

    def test_routes_agree_on_stiff_spectrum(self):
        # one exp(HT) loses every digit when the eigenvalue spread is ~56;
        # the doubling path must keep the routes matched anyway
        rng = np.random.default_rng(7)
        Q, _ = np.linalg.qr(rng.normal(size=(6, 6)))
        A = Q @ np.diag([55.1, 36.5, 4.39, -1.04, 1.34, 0.21]) @ Q.T
        B = np.ones((6, 1))
        Wq = gramian_quadrature(A, B, 1.0)
        Wv = gramian_vanloan(A, B, 1.0)
        assert float(np.linalg.norm(Wq - Wv, "fro")) < 1e-10 * float(
            np.linalg.norm(Wq, "fro")
        )

    def test_stall(self):
        A = np.array([[0.5]])
        B = np.array([[1.0]])
        with pytest.raises(QuadratureStall):
            gramian_quadrature(A, B, 1.0, rel_tol=0.0, max_panels=8)

    def test_vector_b_promoted(self):
        W = gramian_vanloan(np.array([[1.0]]), np.array([1.0]), 1.0)
        assert W.shape == (1, 1)

    def test_zero_b(self):
        W = gramian_quadrature(np.zeros((2, 2)), np.zeros((2, 1)), 1.0)
        assert W == pytest.approx(np.zeros((2, 2)))


class TestCond:
    def test_identity(self):
        assert cond(np.eye(3)) == pytest.approx(1.0)

    def test_singularish(self):
        assert cond(np.diag([1.0, 1e-15])) > 1e12
