"""Dense linear algebra for small stable linear systems.

Everything operates on plain float64 numpy arrays.  State dimensions are
expected in the tens at most, so the solvers favour unconditionally robust
direct methods over asymptotically fast ones.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg


class NotSymmetricError(ValueError):
    """Input expected to be symmetric is not, beyond tolerance."""


class NotPositiveDefiniteError(ValueError):
    """Input expected to be (semi)definite fails the definiteness check."""


class NotHurwitzError(ValueError):
    """Matrix has an eigenvalue with non-negative real part."""


def as_square_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite, square float64 array or raise ValueError."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def check_symmetric(s: np.ndarray, name: str = "matrix", rtol: float = 1e-12) -> None:
    gap = np.linalg.norm(s - s.T, "fro")
    if gap > rtol * max(1.0, np.linalg.norm(s, "fro")):
        raise NotSymmetricError(f"{name} is not symmetric: ||S - S^T||_F = {gap:.3e}")


def symmetrize(s: np.ndarray) -> np.ndarray:
    return 0.5 * (s + s.T)


def mat_exp(a, t: float) -> np.ndarray:
    """exp(t*A) for square A and t >= 0.

    Scaling-and-squaring with a Pade core (scipy's expm).  t = 0 returns the
    identity exactly.
    """
    a = as_square_matrix(a, "a")
    t = float(t)
    if not np.isfinite(t) or t < 0.0:
        raise ValueError(f"t must be finite and >= 0, got {t}")
    if t == 0.0:
        return np.eye(a.shape[0])
    return scipy.linalg.expm(t * a)


def spectral_abscissa(a) -> float:
    """max Re(lambda) over the eigenvalues of A."""
    a = as_square_matrix(a, "a")
    return float(np.linalg.eigvals(a).real.max())


def sym_eig_extrema(s) -> tuple[float, float]:
    """(lambda_min, lambda_max) of a symmetric matrix."""
    s = as_square_matrix(s, "s")
    check_symmetric(s, "s")
    w = np.linalg.eigvalsh(s)
    return float(w[0]), float(w[-1])


def solve_lyapunov(b, q) -> np.ndarray:
    """Solve B X + X B^T + Q = 0 for symmetric X, B Hurwitz, Q symmetric PSD.

    Dense Kronecker vectorization: (I (x) B + B (x) I) vec(X) = -vec(Q)
    column-major, one LU solve, then symmetrization.  O(d^6) flops, which is
    irrelevant at the dimensions used here and has no convergence conditions.

    The result is checked against the residual contract
    ||B X + X B^T + Q||_F <= 1e-10 ||Q||_F and an ArithmeticError is raised
    if conditioning ate the budget.
    """
    b = as_square_matrix(b, "b")
    q = as_square_matrix(q, "q")
    if b.shape != q.shape:
        raise ValueError(f"shape mismatch: b is {b.shape}, q is {q.shape}")
    check_symmetric(q, "q")
    lam_min, lam_max = sym_eig_extrema(q)
    if lam_min < -1e-12 * max(1.0, lam_max):
        raise NotPositiveDefiniteError(
            f"q must be positive semidefinite, lambda_min = {lam_min:.3e}"
        )
    alpha = spectral_abscissa(b)
    if alpha >= 0.0:
        raise NotHurwitzError(f"b is not Hurwitz: spectral abscissa = {alpha:.3e}")

    d = b.shape[0]
    eye = np.eye(d)
    coeff = np.kron(eye, b) + np.kron(b, eye)
    x = np.linalg.solve(coeff, -q.flatten(order="F"))
    x = symmetrize(x.reshape((d, d), order="F"))

    resid = np.linalg.norm(b @ x + x @ b.T + q, "fro")
    if resid > 1e-10 * np.linalg.norm(q, "fro"):
        raise ArithmeticError(
            f"Lyapunov solve residual {resid:.3e} exceeds contract; "
            "system too ill-conditioned"
        )
    return x


def cholesky(s) -> np.ndarray:
    """Lower-triangular L with L L^T = S for symmetric positive definite S.

    One jitter retry (1e-14 * trace/d on the diagonal) is attempted when S
    sits numerically on the PSD boundary; anything still failing raises
    NotPositiveDefiniteError.
    """
    s = as_square_matrix(s, "s")
    check_symmetric(s, "s")
    try:
        return np.linalg.cholesky(s)
    except np.linalg.LinAlgError:
        pass
    jitter = 1e-14 * np.trace(s) / s.shape[0]
    if jitter > 0.0:
        try:
            return np.linalg.cholesky(s + jitter * np.eye(s.shape[0]))
        except np.linalg.LinAlgError:
            pass
    raise NotPositiveDefiniteError(
        "matrix is not positive definite (Cholesky failed after jitter retry)"
    )
