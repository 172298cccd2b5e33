"""Stationary Ornstein-Uhlenbeck model and its entropy production rate.

The process solves dX_t = B X_t dt + Sigma dW_t with B Hurwitz and
Q = Sigma Sigma^T strictly positive definite.  Its invariant law is the
centred Gaussian N(0, Gamma) with B Gamma + Gamma B^T + Q = 0, and the
stationary entropy production rate has the closed form

    ep = (1/2) tr(Qtilde Gamma),   Qtilde = M^T Q M,   M = 2 Q^{-1} B + Gamma^{-1}.

ep vanishes exactly when the dynamics are reversible, i.e. when Q^{-1} B is
symmetric; in one dimension that is always the case.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import linalg


class ModelError(ValueError):
    """Invalid model specification."""


class DegenerateNoiseError(ModelError):
    """Noise covariance Sigma Sigma^T is not strictly positive definite."""


class UnstableDriftError(ModelError):
    """Drift matrix is not Hurwitz (an eigenvalue reaches the closed right half-plane)."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class OUModel:
    """Validated model with all derived stationary quantities precomputed.

    Arrays are read-only views; construct via build_model.
    """

    d: int
    B: np.ndarray
    Sigma: np.ndarray
    Q: np.ndarray
    Gamma: np.ndarray
    GammaInv: np.ndarray
    M: np.ndarray
    Qtilde: np.ndarray
    ep: float


@dataclass(frozen=True)
class FunctionalConstants:
    """Worst-case functional-inequality constants of the invariant Gaussian.

    decay_rate:     L2 semigroup decay exponent lambda_min(Q)/lambda_max(Gamma)
    poincare_const: Poincare constant 2 lambda_max(Gamma)/lambda_min(Q)
    lsi_const:      log-Sobolev constant 4 lambda_max(Gamma)/lambda_min(Q)
    eta_max:        exponential integrability threshold lambda_min(Q)/(8 lambda_max(Gamma)^2)
    """

    decay_rate: float
    poincare_const: float
    lsi_const: float
    eta_max: float


def build_model(B, Sigma) -> OUModel:
    """Validate (B, Sigma) and derive Gamma, M, Qtilde and ep.

    Raises DegenerateNoiseError if lambda_min(Q) <= 1e-12 lambda_max(Q),
    UnstableDriftError if the spectral abscissa of B is >= -1e-12, and
    ModelError on shape problems.
    """
    try:
        B = linalg.as_square_matrix(B, "B")
        Sigma = linalg.as_square_matrix(Sigma, "Sigma")
    except ValueError as exc:
        raise ModelError(str(exc)) from None
    if B.shape != Sigma.shape:
        raise ModelError(f"dimension mismatch: B is {B.shape}, Sigma is {Sigma.shape}")
    d = B.shape[0]

    Q = linalg.symmetrize(Sigma @ Sigma.T)
    lam_min_q, lam_max_q = linalg.sym_eig_extrema(Q)
    if lam_min_q <= 1e-12 * max(lam_max_q, 0.0):
        raise DegenerateNoiseError(
            "noise covariance Sigma Sigma^T is not strictly positive definite: "
            f"lambda_min = {lam_min_q:.3e}, lambda_max = {lam_max_q:.3e}"
        )
    alpha = linalg.spectral_abscissa(B)
    if alpha >= -1e-12:
        raise UnstableDriftError(
            f"drift matrix is not Hurwitz: spectral abscissa = {alpha:.6e} >= -1e-12"
        )

    Gamma = linalg.solve_lyapunov(B, Q)
    GammaInv = linalg.symmetrize(np.linalg.inv(Gamma))
    M = 2.0 * np.linalg.solve(Q, B) + GammaInv
    Qtilde = linalg.symmetrize(M.T @ Q @ M)
    ep = 0.5 * float(np.sum(Qtilde * Gamma))
    if ep < 0.0:
        # roundoff at the reversible point; the exact value is >= 0
        ep = 0.0

    return OUModel(
        d=d,
        B=_readonly(B),
        Sigma=_readonly(Sigma),
        Q=_readonly(Q),
        Gamma=_readonly(Gamma),
        GammaInv=_readonly(GammaInv),
        M=_readonly(M),
        Qtilde=_readonly(Qtilde),
        ep=ep,
    )


def grad_log_density(model: OUModel, x) -> np.ndarray:
    """Gradient of log of the invariant density at x: -Gamma^{-1} x."""
    x = np.asarray(x, dtype=np.float64)
    return -(model.GammaInv @ x)


def epr_integrand(model: OUModel, x) -> float:
    """Pointwise entropy production integrand (1/2) (M x)^T Q (M x) = (1/2) x^T Qtilde x."""
    x = np.asarray(x, dtype=np.float64)
    return 0.5 * float(x @ model.Qtilde @ x)


def entropy_production_rate(model: OUModel) -> float:
    """Stationary entropy production rate in closed form, (1/2) trace(Qtilde Gamma).

    Cached on the model as .ep at build time; this is the named accessor.
    """
    return model.ep


def is_reversible(model: OUModel, tol: float = 1e-9) -> bool:
    """Whether Q^{-1} B is symmetric within tol (relative to max(1, its norm))."""
    qinv_b = np.linalg.solve(model.Q, model.B)
    gap = np.linalg.norm(qinv_b - qinv_b.T, "fro")
    return gap <= tol * max(1.0, np.linalg.norm(qinv_b, "fro"))


def functional_constants(model: OUModel) -> FunctionalConstants:
    lam_min_q = linalg.sym_eig_extrema(model.Q)[0]
    lam_max_g = linalg.sym_eig_extrema(model.Gamma)[1]
    return FunctionalConstants(
        decay_rate=lam_min_q / lam_max_g,
        poincare_const=2.0 * lam_max_g / lam_min_q,
        lsi_const=4.0 * lam_max_g / lam_min_q,
        eta_max=lam_min_q / (8.0 * lam_max_g * lam_max_g),
    )


def transition_params(model: OUModel, delta: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact transition over time delta: mean map e^{delta B} and covariance
    Gamma_delta = Gamma - e^{delta B} Gamma e^{delta B^T}."""
    delta = float(delta)
    if not (delta >= 0.0) or not math.isfinite(delta):
        raise ValueError(f"delta must be nonnegative and finite, got {delta}")
    e = linalg.mat_exp(model.B, delta)
    g = linalg.symmetrize(model.Gamma - e @ model.Gamma @ e.T)
    return e, g


@dataclass(frozen=True)
class InitialLaw:
    """Gaussian initial law N(mean, Gamma).  mean=None is the invariant law itself."""

    mean: np.ndarray | None = None

    @staticmethod
    def stationary() -> "InitialLaw":
        return InitialLaw(mean=None)

    @staticmethod
    def shifted(mean) -> "InitialLaw":
        mean = np.asarray(mean, dtype=np.float64).reshape(-1)
        if mean.size == 0 or not np.all(np.isfinite(mean)):
            raise ValueError("shift mean must be a non-empty finite vector")
        return InitialLaw(mean=_readonly(mean))

    @property
    def label(self) -> str:
        if self.mean is None:
            return "stationary"
        return "shift:" + ",".join(f"{v:.17g}" for v in self.mean)

    @staticmethod
    def parse(text: str) -> "InitialLaw":
        """Parse 'stationary' or 'shift:m1,m2,...'."""
        text = text.strip()
        if text == "stationary":
            return InitialLaw.stationary()
        if text.startswith("shift:"):
            body = text[len("shift:"):]
            try:
                mean = [float(v) for v in body.split(",") if v != ""]
            except ValueError:
                raise ValueError(f"bad shift vector in initial law: {text!r}") from None
            if not mean:
                raise ValueError(f"empty shift vector in initial law: {text!r}")
            return InitialLaw.shifted(mean)
        raise ValueError(
            f"unknown initial law {text!r}; expected 'stationary' or 'shift:m1,m2,...'"
        )


def _reject_json_constant(name: str):
    raise ModelError(f"model file contains non-finite constant {name!r}")


def _matrix_from_json(obj, name: str) -> np.ndarray:
    if not isinstance(obj, list) or not obj:
        raise ModelError(f"{name} must be a non-empty list of rows")
    width = None
    for row in obj:
        if not isinstance(row, list) or not row:
            raise ModelError(f"{name} must be a list of non-empty rows")
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise ModelError(f"{name} is ragged: row lengths differ")
        for v in row:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ModelError(f"{name} contains a non-numeric entry: {v!r}")
    a = np.asarray(obj, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise ModelError(f"{name} contains non-finite entries")
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ModelError(f"{name} must be square, got shape {a.shape}")
    return a


def model_matrices_from_json(text: str) -> tuple[np.ndarray, np.ndarray]:
    """Parse and validate the {"B": [[...]], "Sigma": [[...]]} model document."""
    try:
        doc = json.loads(text, parse_constant=_reject_json_constant)
    except json.JSONDecodeError as exc:
        raise ModelError(f"model file is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ModelError("model file must contain a JSON object")
    for key in ("B", "Sigma"):
        if key not in doc:
            raise ModelError(f"model file is missing required key {key!r}")
    b = _matrix_from_json(doc["B"], "B")
    sigma = _matrix_from_json(doc["Sigma"], "Sigma")
    return b, sigma


def load_model(path) -> OUModel:
    """Load and validate a model JSON file."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    b, sigma = model_matrices_from_json(text)
    return build_model(b, sigma)


def model_to_json(model: OUModel) -> str:
    """Serialize the defining pair (B, Sigma) losslessly (shortest repr floats)."""
    doc = {"B": model.B.tolist(), "Sigma": model.Sigma.tolist()}
    return json.dumps(doc, indent=2, sort_keys=True)
