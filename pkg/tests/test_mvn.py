import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import ndtr, ndtri
from scipy.stats import norm

from src.errors import ValidationError
from src.mvn import (
    bvnu,
    cbc_lattice,
    lower_orthant,
    orthant_probability_mc,
    permuted_cholesky,
    primes_up_to,
)


def equicorrelated(k, rho):
    return np.full((k, k), rho) + (1.0 - rho) * np.eye(k)


def equicorrelated_orthant(h, k, rho):
    """P(Z <= h for all k variables), equal correlation rho >= 0, by 1-D quadrature."""
    a, b = math.sqrt(rho), math.sqrt(1.0 - rho)
    value, _ = quad(lambda z: norm.pdf(z) * ndtr((h - a * z) / b) ** k, -12, 12, epsabs=1e-16, epsrel=1e-10, limit=200)
    return value


@pytest.mark.parametrize("r", [-0.99, -0.95, -0.5, 0.0, 0.3, 0.8, 0.95, 0.999])
def test_bvnu_at_origin(r):
    assert bvnu(0.0, 0.0, r) == pytest.approx(0.25 + math.asin(r) / (2 * math.pi), abs=1e-14)


@pytest.mark.parametrize("h,k,r", [
    (1.0, -0.5, 0.4), (-2.0, -1.0, -0.7), (3.7, 3.7, 0.5), (3.7, 3.7, 0.97), (0.5, -1.5, -0.96),
])
def test_bvnu_against_quadrature(h, k, r):
    # P(X > h, Y > k) = integral over x > h of phi(x) * P(Y > k | x)
    s = math.sqrt(1.0 - r * r)
    expected, _ = quad(lambda x: norm.pdf(x) * ndtr((r * x - k) / s), h, np.inf, epsabs=1e-15, epsrel=1e-11)
    assert bvnu(h, k, r) == pytest.approx(expected, rel=1e-9, abs=1e-13)


def test_bvnu_infinite_limits():
    assert bvnu(math.inf, 0.0, 0.5) == 0.0
    assert bvnu(-math.inf, -math.inf, 0.5) == 1.0
    assert bvnu(-math.inf, 1.0, 0.5) == pytest.approx(ndtr(-1.0))


def test_primes_up_to():
    assert primes_up_to(20).tolist() == [2, 3, 5, 7, 11, 13, 17, 19]
    assert primes_up_to(1).tolist() == []


def test_cbc_lattice_shape():
    z, n = cbc_lattice(3, 100)
    assert n == 97
    assert z.shape == (3,)
    assert z[0] == pytest.approx(1 / 97)
    assert np.all((z > 0) & (z < 1))


def test_permuted_cholesky_unit_diagonal():
    corr = np.array([[1.0, 0.3, 0.1], [0.3, 1.0, 0.5], [0.1, 0.5, 1.0]])
    cho, hi = permuted_cholesky(corr, np.array([0.0, -1.0, 2.0]))
    np.testing.assert_allclose(np.diag(cho), 1.0)
    np.testing.assert_allclose(np.triu(cho, 1), 0.0)
    assert hi.shape == (3,)


def test_univariate_and_independent():
    assert lower_orthant([1.0], [[1.0]]).value == pytest.approx(ndtr(1.0))
    result = lower_orthant([0.0, 1.0, -1.0], np.eye(3))
    assert result.method == "independent"
    assert result.value == pytest.approx(0.5 * ndtr(1.0) * ndtr(-1.0))


def test_shape_mismatch():
    with pytest.raises(ValidationError):
        lower_orthant([0.0, 0.0], np.eye(3))


@pytest.mark.parametrize("rho", [0.2, 0.6, 0.9])
def test_trivariate_origin_closed_form(rho):
    result = lower_orthant(np.zeros(3), equicorrelated(3, rho))
    expected = 0.125 + 3 * math.asin(rho) / (4 * math.pi)
    assert result.method == "lattice"
    assert result.value == pytest.approx(expected, abs=2e-5)


@pytest.mark.parametrize("k", [3, 4, 5])
def test_half_correlation_orthant(k):
    # With all correlations 1/2 the orthant at zero is 1 / (k + 1)
    assert lower_orthant(np.zeros(k), equicorrelated(k, 0.5)).value == pytest.approx(1 / (k + 1), abs=2e-5)


@pytest.mark.parametrize("k,rho", [(3, 0.4), (4, 0.4), (3, 0.85), (5, 0.6)])
def test_rare_event_orthant(k, rho):
    h = float(ndtri(1e-3))
    expected = equicorrelated_orthant(h, k, rho)
    result = lower_orthant(np.full(k, h), equicorrelated(k, rho), rng=np.random.default_rng(3))
    assert result.value == pytest.approx(expected, rel=1e-2)


def test_lattice_is_reproducible():
    corr = equicorrelated(4, 0.3)
    first = lower_orthant(np.full(4, -1.0), corr)
    second = lower_orthant(np.full(4, -1.0), corr)
    assert first.value == second.value


def test_monte_carlo_agrees():
    corr = equicorrelated(3, 0.5)
    p, se = orthant_probability_mc(np.zeros(3), corr, 200_000, np.random.default_rng(1), batch=50_000)
    assert abs(p - 0.25) < 5 * se
