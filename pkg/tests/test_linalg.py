"""Dense-matrix kernel checks, mostly against hand-derived closed forms."""

import math

import numpy as np
import pytest
from scipy.integrate import romb

from conftest import random_drift, random_spd
from eprlab.linalg import (
    NotHurwitzError,
    NotPositiveDefiniteError,
    NotSymmetricError,
    cholesky,
    mat_exp,
    solve_lyapunov,
    spectral_abscissa,
    sym_eig_extrema,
)


def test_mat_exp_at_t_zero_is_exact_identity():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((5, 5))
    assert np.array_equal(mat_exp(a, 0.0), np.eye(5))


def test_mat_exp_diagonal():
    e = mat_exp(np.diag([-1.0, -2.0]), 1.0)
    assert np.allclose(np.diag(e), [0.3678794412, 0.1353352832], atol=1e-10)
    assert abs(e[0, 1]) < 1e-15 and abs(e[1, 0]) < 1e-15


def test_mat_exp_rotation_by_pi():
    # e^{tB} = e^{-t} R(t) for B = -I + J, so t = pi gives -e^{-pi} I
    e = mat_exp(np.array([[-1.0, 1.0], [-1.0, -1.0]]), math.pi)
    assert np.allclose(np.diag(e), [-0.0432139183, -0.0432139183], atol=1e-10)
    assert abs(e[0, 1]) < 1e-12 and abs(e[1, 0]) < 1e-12


def test_mat_exp_rejects_bad_input():
    with pytest.raises(ValueError):
        mat_exp(np.ones((2, 3)), 1.0)
    with pytest.raises(ValueError):
        mat_exp(np.array([[np.nan, 0.0], [0.0, 1.0]]), 1.0)
    with pytest.raises(ValueError):
        mat_exp(np.eye(2), -0.5)


def test_mat_exp_semigroup_property():
    rng = np.random.default_rng(42)
    for _ in range(100):
        a = rng.standard_normal((4, 4))
        a *= rng.uniform(0.5, 5.0) / np.linalg.norm(a, 2)
        s, t = rng.uniform(0.0, 2.0, 2)
        lhs = mat_exp(a, s + t)
        diff = np.linalg.norm(lhs - mat_exp(a, s) @ mat_exp(a, t), "fro")
        assert diff <= 1e-10 * max(1.0, np.linalg.norm(lhs, "fro"))


def test_solve_lyapunov_closed_forms():
    assert np.allclose(solve_lyapunov(-np.eye(2), np.eye(2)), 0.5 * np.eye(2), atol=1e-14)
    b = np.array([[-1.0, 1.0], [-1.0, -1.0]])
    assert np.allclose(solve_lyapunov(b, np.eye(2)), 0.5 * np.eye(2), atol=1e-13)
    assert np.allclose(solve_lyapunov(np.array([[-1.0]]), np.array([[2.0]])),
                       [[1.0]], atol=1e-14)


def test_solve_lyapunov_random_residuals():
    rng = np.random.default_rng(7)
    for _ in range(100):
        d = int(rng.integers(1, 7))
        b = random_drift(rng, d)
        q = random_spd(rng, d)
        x = solve_lyapunov(b, q)
        resid = np.linalg.norm(b @ x + x @ b.T + q, "fro")
        assert resid <= 1e-10 * np.linalg.norm(q, "fro")
        assert np.array_equal(x, x.T)
        lo, _ = sym_eig_extrema(x)
        assert lo > 0.0


def _quadrature_gram(b, q, t_upper, k=14):
    """romb estimate of the integral of e^{sB} q e^{sB^T} over [0, t_upper]."""
    n = 2 ** k + 1
    grid = np.linspace(0.0, t_upper, n)
    vals = np.empty((n, b.shape[0], b.shape[0]))
    for i, s in enumerate(grid):
        e = mat_exp(b, s)
        vals[i] = e @ q @ e.T
    return romb(vals, dx=grid[1] - grid[0], axis=0)


def test_solve_lyapunov_matches_quadrature():
    rng = np.random.default_rng(3)
    cases = [
        (np.array([[-1.0, 1.0], [-1.0, -1.0]]), np.eye(2)),
        (np.diag([-1.0, -3.0]), np.diag([2.0, 0.5])),
        (random_drift(rng, 3), random_spd(rng, 3)),
    ]
    for b, q in cases:
        # t_upper makes the e^{tB} tail negligible against the 1e-8 budget
        t_upper = 30.0 / abs(spectral_abscissa(b))
        x = solve_lyapunov(b, q)
        approx = _quadrature_gram(b, q, t_upper)
        assert np.linalg.norm(x - approx, "fro") <= 1e-8


def test_solve_lyapunov_rejections():
    with pytest.raises(NotHurwitzError):
        solve_lyapunov(np.array([[0.0, 1.0], [0.0, 0.0]]), np.eye(2))
    with pytest.raises(NotSymmetricError):
        solve_lyapunov(-np.eye(2), np.array([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(NotPositiveDefiniteError):
        solve_lyapunov(-np.eye(2), np.diag([1.0, -0.2]))


def test_spectral_abscissa_examples():
    assert spectral_abscissa(np.diag([-3.0, -1.0])) == pytest.approx(-1.0, abs=1e-12)
    b = np.array([[-1.0, 1.0], [-1.0, -1.0]])
    assert spectral_abscissa(b) == pytest.approx(-1.0, abs=1e-9)
    assert spectral_abscissa(np.array([[0.0, 1.0], [0.0, 0.0]])) == pytest.approx(0.0, abs=1e-12)


def test_sym_eig_extrema_examples():
    assert sym_eig_extrema(np.eye(3)) == pytest.approx((1.0, 1.0))
    assert sym_eig_extrema(np.diag([0.5, 0.5])) == pytest.approx((0.5, 0.5))
    lo, hi = sym_eig_extrema(np.array([[2.0, 1.0], [1.0, 2.0]]))
    assert lo == pytest.approx(1.0, rel=1e-10)
    assert hi == pytest.approx(3.0, rel=1e-10)
    with pytest.raises(NotSymmetricError):
        sym_eig_extrema(np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_cholesky_examples():
    assert np.allclose(cholesky(np.eye(3)), np.eye(3), atol=1e-15)
    assert np.allclose(cholesky(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]), atol=1e-15)
    l = cholesky(np.array([[4.0, 2.0], [2.0, 5.0]]))
    assert np.allclose(l, [[2.0, 0.0], [1.0, 2.0]], atol=1e-14)


def test_cholesky_reconstruction():
    rng = np.random.default_rng(11)
    for _ in range(20):
        d = int(rng.integers(1, 8))
        s = random_spd(rng, d)
        l = cholesky(s)
        assert np.allclose(l, np.tril(l))
        assert np.linalg.norm(l @ l.T - s, "fro") <= 1e-12 * np.linalg.norm(s, "fro")


def test_cholesky_jitter_rescues_semidefinite_input():
    v = np.array([1.0, 2.0])
    s = np.outer(v, v)  # rank 1, exactly singular
    l = cholesky(s)
    assert np.linalg.norm(l @ l.T - s, "fro") <= 1e-12 * np.linalg.norm(s, "fro")


def test_cholesky_rejects_indefinite_input():
    with pytest.raises(NotPositiveDefiniteError):
        cholesky(np.diag([1.0, -0.1]))
