"""Gaussian distributions in three interchangeable forms.

Mean/covariance, mean/precision, and the natural (inverse covariance)
form, with conversions, log-density, KL divergence, and sampling.
Positive definiteness is validated once at construction via Cholesky;
log-determinants come from the cached factor's pivots.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import ClassVar

import numpy as np

from .kronmat import DimensionError, SymmetricMatrix

__all__ = [
    "NotPositiveDefiniteError",
    "MeanCovariance",
    "MeanPrecision",
    "NaturalForm",
    "FORM_TAGS",
    "convert",
    "log_pdf",
    "kl",
    "sample",
    "mean_of",
    "cov_of",
    "prec_of",
    "dim_of",
]

FORM_TAGS = ("mean_cov", "mean_prec", "natural")

_LOG_2PI = float(np.log(2.0 * np.pi))


class NotPositiveDefiniteError(ValueError):
    """A matrix required to be positive definite has a nonpositive pivot."""


def _chol(a: np.ndarray, what: str) -> np.ndarray:
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(f"{what} is not positive definite") from exc


def _logdet_from_chol(chol: np.ndarray) -> float:
    return 2.0 * float(np.sum(np.log(np.diag(chol))))


def _check_mean(mean, matrix: SymmetricMatrix) -> np.ndarray:
    mean = np.asarray(mean, dtype=float).reshape(-1)
    if mean.shape[0] != matrix.dim:
        raise DimensionError(
            f"mean has length {mean.shape[0]} but matrix dimension is {matrix.dim}"
        )
    if not np.all(np.isfinite(mean)):
        raise ValueError("mean contains non-finite entries")
    return mean


@dataclass(frozen=True, eq=False)
class MeanCovariance:
    """Gaussian parameterized by mean and covariance."""

    mean: np.ndarray
    cov: SymmetricMatrix
    form: ClassVar[str] = "mean_cov"

    def __post_init__(self) -> None:
        object.__setattr__(self, "mean", _check_mean(self.mean, self.cov))
        object.__setattr__(self, "_chol", _chol(self.cov.full(), "covariance"))

    @classmethod
    def from_dense(cls, mean, cov) -> "MeanCovariance":
        return cls(mean, SymmetricMatrix.from_full(cov))

    @property
    def dim(self) -> int:
        return self.cov.dim

    @property
    def chol(self) -> np.ndarray:
        """Lower Cholesky factor of the covariance."""
        return self._chol


@dataclass(frozen=True, eq=False)
class MeanPrecision:
    """Gaussian parameterized by mean and precision (inverse covariance)."""

    mean: np.ndarray
    prec: SymmetricMatrix
    form: ClassVar[str] = "mean_prec"

    def __post_init__(self) -> None:
        object.__setattr__(self, "mean", _check_mean(self.mean, self.prec))
        object.__setattr__(self, "_chol", _chol(self.prec.full(), "precision"))

    @classmethod
    def from_dense(cls, mean, prec) -> "MeanPrecision":
        return cls(mean, SymmetricMatrix.from_full(prec))

    @property
    def dim(self) -> int:
        return self.prec.dim

    @property
    def chol(self) -> np.ndarray:
        """Lower Cholesky factor of the precision."""
        return self._chol


@dataclass(frozen=True, eq=False)
class NaturalForm:
    """Natural parameters: eta1 = prec @ mean, eta2 = prec."""

    eta1: np.ndarray
    eta2: SymmetricMatrix
    form: ClassVar[str] = "natural"

    def __post_init__(self) -> None:
        object.__setattr__(self, "eta1", _check_mean(self.eta1, self.eta2))
        object.__setattr__(self, "_chol", _chol(self.eta2.full(), "precision"))

    @property
    def dim(self) -> int:
        return self.eta2.dim

    @property
    def chol(self) -> np.ndarray:
        return self._chol


GaussianDistribution = MeanCovariance | MeanPrecision | NaturalForm


def dim_of(g) -> int:
    return g.dim


def mean_of(g) -> np.ndarray:
    if isinstance(g, NaturalForm):
        return np.linalg.solve(g.eta2.full(), g.eta1)
    return g.mean.copy()


def _inv_sym(a: np.ndarray) -> np.ndarray:
    inv = np.linalg.inv(a)
    return 0.5 * (inv + inv.T)


def cov_of(g) -> np.ndarray:
    """Dense covariance of any form."""
    if isinstance(g, MeanCovariance):
        return g.cov.full()
    prec = g.prec.full() if isinstance(g, MeanPrecision) else g.eta2.full()
    return _inv_sym(prec)


def prec_of(g) -> np.ndarray:
    """Dense precision of any form."""
    if isinstance(g, MeanPrecision):
        return g.prec.full()
    if isinstance(g, NaturalForm):
        return g.eta2.full()
    return _inv_sym(g.cov.full())


def convert(g, target: str):
    """Convert between the three forms; round trips recover the input."""
    if target not in FORM_TAGS:
        raise ValueError(f"unknown form tag {target!r}; expected one of {FORM_TAGS}")
    if g.form == target:
        return g
    if target == "mean_cov":
        return MeanCovariance.from_dense(mean_of(g), cov_of(g))
    if target == "mean_prec":
        return MeanPrecision.from_dense(mean_of(g), prec_of(g))
    prec = prec_of(g)
    return NaturalForm(prec @ mean_of(g), SymmetricMatrix.from_full(prec))


def log_pdf(g, x) -> float:
    """Log density at x, computed via the cached Cholesky factor."""
    x = np.asarray(x, dtype=float).reshape(-1)
    n = g.dim
    if x.shape[0] != n:
        raise DimensionError(f"point has length {x.shape[0]}, expected {n}")
    delta = x - mean_of(g)
    if isinstance(g, MeanCovariance):
        w = np.linalg.solve(g.chol, delta)
        quad = float(w @ w)
        logdet_cov = _logdet_from_chol(g.chol)
    else:
        # chol factors the precision
        w = g.chol.T @ delta
        quad = float(w @ w)
        logdet_cov = -_logdet_from_chol(g.chol)
    return -0.5 * (quad + logdet_cov + n * _LOG_2PI)


def kl(q, p) -> float:
    """KL divergence between two Gaussians, closed form."""
    q = convert(q, "mean_cov")
    p = convert(p, "mean_cov")
    if q.dim != p.dim:
        raise DimensionError(f"dimension mismatch: {q.dim} vs {p.dim}")
    n = q.dim
    sigma_q = q.cov.full()
    delta = p.mean - q.mean
    # solve against p's covariance through its Cholesky factor
    lp = p.chol
    trace = float(np.trace(np.linalg.solve(lp.T, np.linalg.solve(lp, sigma_q))))
    w = np.linalg.solve(lp, delta)
    quad = float(w @ w)
    logdets = _logdet_from_chol(lp) - _logdet_from_chol(q.chol)
    return 0.5 * (trace + quad - n + logdets)


def sample(g, count: int, seed: int) -> np.ndarray:
    """Draw count samples, deterministically for a given seed.

    Returns an array of shape (count, dim).
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    mu = mean_of(g)
    if isinstance(g, MeanCovariance):
        chol_cov = g.chol
    else:
        chol_cov = _chol(cov_of(g), "covariance")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((count, g.dim))
    return mu + z @ chol_cov.T
