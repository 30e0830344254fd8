"""Random instance generators shared by the verification suites and tests.

Matrices are drawn with singular values in a fixed band so that identity
checks involving inverses and determinants stay near machine precision.
"""

from __future__ import annotations

import numpy as np

from .gaussian import MeanCovariance
from .kronmat import SymmetricMatrix


def random_orthogonal(n: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def random_well_conditioned(
    n: int, rng: np.random.Generator, lo: float = 0.5, hi: float = 2.0
) -> np.ndarray:
    """General square matrix with singular values in [lo, hi]."""
    u = random_orthogonal(n, rng)
    v = random_orthogonal(n, rng)
    return u @ np.diag(rng.uniform(lo, hi, n)) @ v.T


def random_spd(
    n: int, rng: np.random.Generator, lo: float = 0.5, hi: float = 2.0
) -> np.ndarray:
    """Symmetric positive definite matrix with eigenvalues in [lo, hi]."""
    q = random_orthogonal(n, rng)
    a = q @ np.diag(rng.uniform(lo, hi, n)) @ q.T
    return 0.5 * (a + a.T)


def random_symmetric(n: int, rng: np.random.Generator) -> np.ndarray:
    a = rng.standard_normal((n, n))
    return 0.5 * (a + a.T)


def random_gaussian(n: int, rng: np.random.Generator) -> MeanCovariance:
    return MeanCovariance(rng.standard_normal(n), SymmetricMatrix.from_full(random_spd(n, rng)))
