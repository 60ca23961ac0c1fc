#!/usr/bin/env python3
"""Lower orthant probabilities of the multivariate normal distribution.

    P(Z_1 <= h_1, ..., Z_k <= h_k),  Z ~ N(0, R), R a correlation matrix

Two variables use Genz's deterministic bivariate algorithm (Drezner and
Wesolowsky with Genz's double-precision modifications). Three or more use
separation of variables with a randomly shifted rank-1 lattice rule built
by fast component-by-component construction; the error estimate is three
standard errors over the random shifts.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.fft import fft, ifft
from scipy.special import ndtr, ndtri, roots_legendre

from .errors import ValidationError

DEFAULT_ABS_TOL = 1e-8
DEFAULT_REL_TOL = 1e-3
DEFAULT_LIMIT = 200_000
N_BATCHES = 10


@dataclass(frozen=True)
class OrthantResult:
    value: float
    error: float
    n_samples: int = 0
    method: str = ""


# ---------------------------------------------------------------- bivariate

def _legendre_rule(r: float) -> tuple[np.ndarray, np.ndarray]:
    n = 6 if abs(r) < 0.3 else 12 if abs(r) < 0.75 else 20
    x, w = roots_legendre(n)
    return 1.0 + x, w


def bvnu(dh: float, dk: float, r: float) -> float:
    """P(X > dh, Y > dk) for standard bivariate normal with correlation r.

    P(X < h, Y < k) is bvnu(-h, -k, r).
    """
    inf = math.inf
    if dh == inf or dk == inf:
        return 0.0
    if dh == -inf:
        return 1.0 if dk == -inf else float(ndtr(-dk))
    if dk == -inf:
        return float(ndtr(-dh))
    if r == 0:
        return float(ndtr(-dh) * ndtr(-dk))

    tp = 2.0 * math.pi
    h, k = dh, dk
    hk = h * k
    x, w = _legendre_rule(r)

    if abs(r) < 0.925:
        hs = (h * h + k * k) / 2.0
        asr = math.asin(r) / 2.0
        sn = np.sin(asr * x)
        bvn = float(np.exp((sn * hk - hs) / (1.0 - sn ** 2)) @ w)
        bvn = bvn * asr / tp + float(ndtr(-h) * ndtr(-k))
        return max(0.0, min(1.0, bvn))

    if r < 0:
        k = -k
        hk = -hk
    bvn = 0.0
    if abs(r) < 1:
        as_ = 1.0 - r * r
        a = math.sqrt(as_)
        bs = (h - k) ** 2
        asr = -(bs / as_ + hk) / 2.0
        c = (4.0 - hk) / 8.0
        d = (12.0 - hk) / 80.0
        if asr > -100:
            bvn = a * math.exp(asr) * (1.0 - c * (bs - as_) * (1.0 - d * bs) / 3.0 + c * d * as_ * as_)
        if hk > -100:
            b = math.sqrt(bs)
            sp = math.sqrt(tp) * float(ndtr(-b / a))
            bvn -= math.exp(-hk / 2.0) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0)
        a /= 2.0
        xs = (a * x) ** 2
        asr_v = -(bs / xs + hk) / 2.0
        keep = asr_v > -100
        xs = xs[keep]
        sp_v = 1.0 + c * xs * (1.0 + 5.0 * d * xs)
        rs = np.sqrt(1.0 - xs)
        ep = np.exp(-(hk / 2.0) * xs / (1.0 + rs) ** 2) / rs
        bvn = (a * float((np.exp(asr_v[keep]) * (sp_v - ep)) @ w[keep]) - bvn) / tp

    if r > 0:
        bvn += float(ndtr(-max(h, k)))
    elif h >= k:
        bvn = -bvn
    else:
        span = float(ndtr(k) - ndtr(h)) if h < 0 else float(ndtr(-h) - ndtr(-k))
        bvn = span - bvn
    return max(0.0, min(1.0, bvn))


# ----------------------------------------------------------- lattice rule

def primes_up_to(n: int) -> np.ndarray:
    """All primes <= n."""
    if n < 2:
        return np.array([], dtype=int)
    sieve = np.ones(n + 1, dtype=bool)
    sieve[:2] = False
    for p in range(2, int(math.isqrt(n)) + 1):
        if sieve[p]:
            sieve[p * p::p] = False
    return np.flatnonzero(sieve)


def _prime_factors(n: int) -> list[int]:
    factors = set()
    for p in primes_up_to(math.isqrt(n) + 1):
        p = int(p)
        while n % p == 0:
            factors.add(p)
            n //= p
        if n == 1:
            break
    if n != 1:
        factors.add(n)
    return sorted(factors)


def _primitive_root(p: int) -> int:
    factors = _prime_factors(p - 1)
    r = 2
    i = 0
    while i < len(factors):
        if pow(r, (p - 1) // factors[i], p) == 1:
            r += 1
            i = 0
        else:
            i += 1
    return r


def cbc_lattice(n_dim: int, n_points: int) -> tuple[np.ndarray, int]:
    """Generating vector of a rank-1 lattice by fast CBC construction.

    ``n_points`` is rounded down to a prime; the prime is returned with
    the generator, which lies in (0, 1)^n_dim.
    """
    n = int(primes_up_to(max(n_points, 5))[-1])
    weights = np.hstack([1.0, 0.8 ** np.arange(n_dim - 1)])
    z = np.arange(1, n_dim + 1)
    m = (n - 1) // 2
    g = _primitive_root(n)
    perm = np.ones(m, dtype=np.int64)
    for j in range(m - 1):
        perm[j + 1] = (g * perm[j]) % n
    perm = np.minimum(n - perm, perm)
    pn = perm / n
    kernel = pn * pn - pn + 1.0 / 6.0
    kernel_fft = fft(kernel)
    q = 1.0
    w = 0
    for s in range(1, n_dim):
        reordered = np.hstack([kernel[:w + 1][::-1], kernel[w + 1:m][::-1]])
        q = q * (1.0 + weights[s - 1] * reordered)
        w = int(ifft(kernel_fft * fft(q)).real.argmin())
        z[s] = perm[w]
    return z / n, n


# ------------------------------------------------- separation of variables

def _swap(x: np.ndarray, a, b) -> None:
    tmp = x[a].copy()
    x[a] = x[b].copy()
    x[b] = tmp


def permuted_cholesky(corr: np.ndarray, upper: np.ndarray, tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Cholesky factor with variables reordered, least likely first.

    Returns the factor with unit diagonal and the matching scaled upper limits.
    """
    cho = np.array(corr, dtype=float)
    hi = np.array(upper, dtype=float)
    n = len(hi)
    y = np.zeros(n)
    sqtp = math.sqrt(2.0 * math.pi)
    for k in range(n):
        pick, ck, dem, hi_pick = k, 0.0, 1.0, 0.0
        for i in range(k, n):
            if cho[i, i] > tol:
                ci = math.sqrt(cho[i, i])
                s = float(cho[i, :k] @ y[:k]) if k else 0.0
                hi_i = (hi[i] - s) / ci
                de = float(ndtr(hi_i))
                if de <= dem:
                    pick, ck, dem, hi_pick = i, ci, de, hi_i
        if pick > k:
            cho[pick, pick] = cho[k, k]
            _swap(cho, np.s_[pick, :k], np.s_[k, :k])
            _swap(cho, np.s_[pick + 1:, pick], np.s_[pick + 1:, k])
            _swap(cho, np.s_[k + 1:pick, k], np.s_[pick, k + 1:pick])
            _swap(hi, k, pick)
        if ck > (k + 1) * tol:
            cho[k, k] = ck
            cho[k, k + 1:] = 0.0
            for i in range(k + 1, n):
                cho[i, k] /= ck
                cho[i, k + 1:i + 1] -= cho[i, k] * cho[k + 1:i + 1, k]
            if abs(dem) > tol:
                # E[Z | Z <= hi]
                y[k] = -math.exp(-hi_pick * hi_pick / 2.0) / (sqtp * dem)
            else:
                y[k] = hi_pick
            cho[k, :k + 1] /= ck
            hi[k] /= ck
        else:
            cho[k:, k] = 0.0
            y[k] = hi[k]
    return np.tril(cho), hi


def _integrand(cho: np.ndarray, hi: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Product of conditional probabilities at lattice points, shape (m,)."""
    n = len(hi)
    m = points.shape[0]
    tiny = np.finfo(float).tiny
    d = np.full(m, float(ndtr(hi[0] / cho[0, 0])))
    value = d.copy()
    y = np.zeros((m, n - 1))
    for i in range(1, n):
        u = np.abs(2.0 * points[:, i - 1] - 1.0)       # tent periodization
        y[:, i - 1] = ndtri(np.clip(u * d, tiny, 1.0 - 1e-16))
        s = y[:, :i] @ cho[i, :i]
        if cho[i, i] > 0:
            d = ndtr((hi[i] - s) / cho[i, i])
        else:
            d = (s <= hi[i]).astype(float)
        value = value * d
    return value


def _lattice_pass(cho, hi, n_points, rng) -> tuple[float, float, int]:
    n_dim = len(hi) - 1
    q, n_lattice = cbc_lattice(n_dim, max(n_points // N_BATCHES, 1))
    j = np.arange(1, n_lattice + 1)[:, None]
    means = np.empty(N_BATCHES)
    for b in range(N_BATCHES):
        shift = rng.random(n_dim)
        means[b] = _integrand(cho, hi, (j * q + shift) % 1.0).mean()
    value = float(means.mean())
    error = 3.0 * float(means.std(ddof=1)) / math.sqrt(N_BATCHES)
    return value, error, N_BATCHES * n_lattice


def lattice_orthant(
    upper: np.ndarray,
    corr: np.ndarray,
    rng: np.random.Generator,
    abs_tol: float = DEFAULT_ABS_TOL,
    rel_tol: float = DEFAULT_REL_TOL,
    limit: int = DEFAULT_LIMIT,
) -> OrthantResult:
    """Refine lattice passes until the error estimate meets the tolerance.

    Passes grow by a factor of sqrt(2) and are combined with inverse-variance
    weights until the error is at most min(abs_tol, rel_tol * value) or the
    sample count passes ``limit``.
    """
    cho, hi = permuted_cholesky(corr, upper)
    n = len(hi)
    points = min(limit, n * 1000)
    value, error, used = 0.0, 1.0, 0
    while used < limit:
        points = round(math.sqrt(2) * points)
        pass_value, pass_error, pass_used = _lattice_pass(cho, hi, points, rng)
        used += pass_used
        weight = 1.0 / (1.0 + (pass_error / error) ** 2) if error > 0 else 0.0
        value += weight * (pass_value - value)
        error = math.sqrt(weight) * pass_error
        target = min(abs_tol, rel_tol * value) if value > 0 else abs_tol
        if error <= target:
            break
    return OrthantResult(value=max(0.0, min(1.0, value)), error=error, n_samples=used, method="lattice")


def lower_orthant(
    upper,
    corr,
    rng: Optional[np.random.Generator] = None,
    abs_tol: float = DEFAULT_ABS_TOL,
    rel_tol: float = DEFAULT_REL_TOL,
    limit: int = DEFAULT_LIMIT,
) -> OrthantResult:
    """P(Z <= upper) for Z ~ N(0, corr).

    Args:
        upper: upper limits, one per variable
        corr: correlation matrix (unit diagonal)
        rng: generator for the lattice shifts; a fixed seed when omitted
    """
    upper = np.asarray(upper, dtype=float)
    corr = np.asarray(corr, dtype=float)
    n = len(upper)
    if corr.shape != (n, n):
        raise ValidationError(f"Correlation matrix shape {corr.shape} does not match {n} limits")
    if n == 0:
        return OrthantResult(1.0, 0.0, method="empty")
    if n == 1:
        return OrthantResult(float(ndtr(upper[0])), 1e-16, method="univariate")
    if n == 2:
        value = bvnu(-upper[0], -upper[1], float(corr[0, 1]))
        return OrthantResult(value, 1e-15, method="bivariate")

    off = corr[~np.eye(n, dtype=bool)]
    if np.all(off == 0):
        return OrthantResult(float(np.prod(ndtr(upper))), 1e-16 * n, method="independent")
    rng = rng if rng is not None else np.random.default_rng(0)
    return lattice_orthant(upper, corr, rng, abs_tol, rel_tol, limit)


def orthant_probability_mc(
    mean, cov, n: int, rng: np.random.Generator, batch: int = 1_000_000
) -> tuple[float, float]:
    """Monte Carlo estimate of P(X <= 0) for X ~ N(mean, cov), with its standard error."""
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    factor = np.linalg.cholesky(cov)
    hits = 0
    drawn = 0
    while drawn < n:
        size = min(batch, n - drawn)
        x = mean + rng.standard_normal((size, len(mean))) @ factor.T
        hits += int(np.count_nonzero(np.all(x <= 0.0, axis=1)))
        drawn += size
    p = hits / n
    return p, math.sqrt(p * (1.0 - p) / n)
