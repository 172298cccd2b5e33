"""Shared reference models and seeded random-model factories."""

import numpy as np
import pytest

from eprlab.linalg import spectral_abscissa
from eprlab.model import build_model

# d=2 rotational reference: Gamma = I/2, M = [[0,2],[-2,0]], ep = 2.
ROT2_B = np.array([[-1.0, 1.0], [-1.0, -1.0]])
ROT2_SIGMA = np.eye(2)


@pytest.fixture(scope="session")
def rot2():
    return build_model(ROT2_B, ROT2_SIGMA)


@pytest.fixture(scope="session")
def rev2():
    """Reversible companion (B = -I, Sigma = I): M vanishes identically."""
    return build_model(-np.eye(2), np.eye(2))


def random_drift(rng, d, margin=0.5):
    """Random matrix shifted left so its spectral abscissa is -margin."""
    a = rng.standard_normal((d, d))
    return a - (spectral_abscissa(a) + margin) * np.eye(d)


def random_spd(rng, d):
    g = rng.standard_normal((d, d))
    q = g @ g.T
    # ridge keeps the condition number benign across all seeds
    return q + 0.05 * (np.trace(q) / d + 1.0) * np.eye(d)


def random_model(rng, d=None):
    if d is None:
        d = int(rng.integers(1, 6))
    q = random_spd(rng, d)
    return build_model(random_drift(rng, d), np.linalg.cholesky(q))


def reversible_model(rng, d=None):
    """B = -Q.S with S symmetric PD, so Q^{-1}B = -S is symmetric."""
    if d is None:
        d = int(rng.integers(1, 6))
    q = random_spd(rng, d)
    s = random_spd(rng, d)
    return build_model(-q @ s, np.linalg.cholesky(q))
