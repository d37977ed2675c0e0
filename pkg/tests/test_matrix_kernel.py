import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eegame import matrix_kernel as mk
from eegame.matrix_kernel import (
    NotPositiveDefiniteError,
    NumericalError,
    diag_rect,
    inv_hpd,
    logdet_hpd,
    pinv_rect_diag,
    svd,
)


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def cofactor_det(a):
    """Determinant by Laplace expansion along the first row."""
    n = a.shape[0]
    if n == 1:
        return a[0, 0]
    total = 0
    for j in range(n):
        minor = np.delete(np.delete(a, 0, axis=0), j, axis=1)
        total += (-1) ** j * a[0, j] * cofactor_det(minor)
    return total


def gram_eigs_2x2(g):
    """Eigenvalues of a 2x2 Hermitian matrix from its characteristic polynomial."""
    tr = (g[0, 0] + g[1, 1]).real
    det = (g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0]).real
    disc = math.sqrt(max(tr * tr - 4 * det, 0.0))
    return sorted([(tr + disc) / 2, (tr - disc) / 2], reverse=True)


def check_svd(m, f):
    nr, nt = m.shape
    assert np.linalg.norm(f.u.conj().T @ f.u - np.eye(nr)) < 1e-10
    assert np.linalg.norm(f.v.conj().T @ f.v - np.eye(nt)) < 1e-10
    assert np.all(np.diff(f.sigma) <= 0) and np.all(f.sigma >= 0)
    assert np.linalg.norm(f.reconstruct() - m) <= 1e-10 * max(np.linalg.norm(m), 1.0)


class TestSvd:
    def test_identity(self):
        f = svd(np.eye(2))
        np.testing.assert_allclose(f.sigma, [1, 1])
        np.testing.assert_allclose(f.u, np.eye(2), atol=1e-15)
        np.testing.assert_allclose(f.v, np.eye(2), atol=1e-15)

    def test_diagonal(self):
        np.testing.assert_allclose(svd(np.diag([3.0, 1.0])).sigma, [3, 1])

    def test_random_tall_against_gram_oracle(self):
        rng = np.random.default_rng(1)
        m = crandn(rng, 4, 2)
        f = svd(m)
        check_svd(m, f)
        expected = np.sqrt(gram_eigs_2x2(m.conj().T @ m))
        np.testing.assert_allclose(f.sigma, expected, rtol=1e-10)

    @pytest.mark.parametrize("shape", [(1, 1), (2, 2), (2, 4), (4, 2), (3, 3)])
    def test_invariants_and_phase_convention(self, shape):
        rng = np.random.default_rng(sum(shape))
        m = crandn(rng, *shape)
        f = svd(m)
        check_svd(m, f)
        for j in range(f.u.shape[1]):
            col = f.u[:, j]
            first = col[np.flatnonzero(np.abs(col) > 1e-14)[0]]
            assert abs(first.imag) < 1e-14 and first.real >= 0

    def test_deterministic(self):
        m = crandn(np.random.default_rng(5), 3, 2)
        a, b = svd(m), svd(m.copy())
        assert np.array_equal(a.u, b.u) and np.array_equal(a.v, b.v) and np.array_equal(a.sigma, b.sigma)

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            svd(np.array([[1.0, np.nan]]))

    def test_nonconvergence_reports_dimensions(self, monkeypatch):
        def boom(*a, **k):
            raise np.linalg.LinAlgError("no convergence")

        monkeypatch.setattr(mk.np.linalg, "svd", boom)
        with pytest.raises(NumericalError, match="3x2"):
            svd(np.ones((3, 2)))


class TestLogdet:
    def test_identity(self):
        assert logdet_hpd(np.eye(3)) == 0.0

    def test_diagonal(self):
        assert logdet_hpd(np.diag([2.0, 2.0])) == pytest.approx(2 * math.log(2), abs=1e-12)
        assert logdet_hpd(np.diag([2.0, 2.0])) == pytest.approx(1.386294, abs=1e-6)

    def test_random_hpd_against_cofactor(self):
        rng = np.random.default_rng(2)
        b = crandn(rng, 3, 3)
        a = b.conj().T @ b + np.eye(3)
        expected = math.log(cofactor_det(a).real)
        assert logdet_hpd(a) == pytest.approx(expected, abs=1e-9)

    def test_additive_with_identity(self):
        rng = np.random.default_rng(3)
        b = crandn(rng, 3, 3)
        a = b.conj().T @ b + np.eye(3)
        assert logdet_hpd(a) + logdet_hpd(np.eye(3)) == pytest.approx(logdet_hpd(a @ np.eye(3)), abs=1e-9)

    @given(c=st.floats(1e-3, 1e3), n=st.integers(1, 6))
    @settings(max_examples=50, deadline=None)
    def test_scaled_identity(self, c, n):
        assert logdet_hpd(c * np.eye(n)) == pytest.approx(n * math.log(c), abs=1e-9)

    def test_indefinite_names_minor(self):
        a = np.array([[1.0, 0, 0], [0, -1.0, 0], [0, 0, 1.0]])
        with pytest.raises(NotPositiveDefiniteError, match="order 2") as info:
            logdet_hpd(a)
        assert info.value.minor == 2

    def test_non_hermitian_rejected(self):
        with pytest.raises(NotPositiveDefiniteError, match="Hermitian"):
            logdet_hpd(np.array([[2.0, 1.0], [0.0, 2.0]]))


class TestInverse:
    def test_identity(self):
        np.testing.assert_allclose(inv_hpd(np.eye(3)), np.eye(3))

    def test_diagonal(self):
        np.testing.assert_allclose(inv_hpd(np.diag([2.0, 4.0])), np.diag([0.5, 0.25]))

    def test_random_residual(self):
        rng = np.random.default_rng(4)
        b = crandn(rng, 3, 3)
        a = b.conj().T @ b + np.eye(3)
        assert np.linalg.norm(a @ inv_hpd(a) - np.eye(3)) < 1e-9

    def test_not_pd(self):
        with pytest.raises(NotPositiveDefiniteError):
            inv_hpd(np.diag([1.0, 0.0]))


def penrose(a, x, tol=1e-12):
    return (
        np.allclose(a @ x @ a, a, atol=tol)
        and np.allclose(x @ a @ x, x, atol=tol)
        and np.allclose((a @ x).conj().T, a @ x, atol=tol)
        and np.allclose((x @ a).conj().T, x @ a, atol=tol)
    )


class TestPinvRectDiag:
    def test_square(self):
        np.testing.assert_allclose(pinv_rect_diag([2.0, 1.0], 2, 2), np.diag([0.5, 1.0]))

    def test_wide_right_inverse(self):
        lam = diag_rect([2.0, 1.0], 2, 3)
        x = pinv_rect_diag([2.0, 1.0], 2, 3)
        assert x.shape == (3, 2)
        assert x[0, 0] == 0.5 and x[1, 1] == 1.0 and np.all(x[2] == 0)
        np.testing.assert_allclose(lam @ x, np.eye(2))

    def test_zero_singular_value(self):
        x = pinv_rect_diag([3.0, 0.0], 2, 2)
        np.testing.assert_allclose(x, np.diag([1 / 3, 0.0]))
        assert penrose(diag_rect([3.0, 0.0], 2, 2), x)

    @pytest.mark.parametrize("rows,cols", [(2, 2), (2, 4), (4, 2), (1, 3)])
    def test_penrose_and_involution(self, rows, cols):
        rng = np.random.default_rng(rows * 10 + cols)
        s = np.sort(rng.uniform(0.1, 3, min(rows, cols)))[::-1]
        lam = diag_rect(s, rows, cols)
        x = pinv_rect_diag(s, rows, cols)
        assert penrose(lam, x)
        back = pinv_rect_diag(np.diag(x).real, cols, rows)
        np.testing.assert_allclose(back, lam)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            pinv_rect_diag([1.0, 2.0, 3.0], 2, 3)
