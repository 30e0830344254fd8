"""Matrix-calculus identities validated by finite differences.

These back the closed-form derivative expressions used throughout:
d|X| = |X| tr(X^{-1} dX), d ln|X| = tr(X^{-1} dX), d X^{-1} = -X^{-1} dX X^{-1},
and d tr(A X) = tr(A dX).
"""

import numpy as np

from ngvi._testing import random_spd, random_symmetric, random_well_conditioned

STEP = 1e-6


def directional(f, x, direction, h=STEP):
    return (f(x + h * direction) - f(x - h * direction)) / (2.0 * h)


def test_determinant_differential():
    rng = np.random.default_rng(0)
    for n in (2, 3, 4):
        x = random_well_conditioned(n, rng)
        v = rng.standard_normal((n, n))
        fd = directional(np.linalg.det, x, v)
        closed = np.linalg.det(x) * np.trace(np.linalg.solve(x, v))
        assert np.isclose(fd, closed, rtol=1e-7, atol=1e-9)


def test_log_determinant_differential():
    rng = np.random.default_rng(1)
    for n in (2, 3, 4):
        x = random_spd(n, rng)
        v = random_symmetric(n, rng)
        fd = directional(lambda a: np.linalg.slogdet(a)[1], x, v)
        closed = np.trace(np.linalg.solve(x, v))
        assert np.isclose(fd, closed, rtol=1e-7, atol=1e-9)


def test_inverse_differential():
    rng = np.random.default_rng(2)
    for n in (2, 3):
        x = random_well_conditioned(n, rng)
        v = rng.standard_normal((n, n))
        fd = directional(np.linalg.inv, x, v)
        inv = np.linalg.inv(x)
        closed = -inv @ v @ inv
        assert np.allclose(fd, closed, rtol=1e-6, atol=1e-8)


def test_trace_differential():
    rng = np.random.default_rng(3)
    n = 3
    a = rng.standard_normal((n, n))
    x = rng.standard_normal((n, n))
    v = rng.standard_normal((n, n))
    fd = directional(lambda m: np.trace(a @ m), x, v)
    assert np.isclose(fd, np.trace(a @ v), rtol=1e-9, atol=1e-10)


def test_quadratic_form_gradient():
    # d/dmu (1/2)(mu - m)^T P (mu - m) = P (mu - m)
    rng = np.random.default_rng(4)
    n = 3
    p = random_spd(n, rng)
    m = rng.standard_normal(n)
    mu = rng.standard_normal(n)
    v = rng.standard_normal(n)
    fd = directional(lambda u: 0.5 * (u - m) @ p @ (u - m), mu, v)
    assert np.isclose(fd, (p @ (mu - m)) @ v, rtol=1e-7, atol=1e-9)
