"""Numerical primitives: seeded RNG streams, jittered Cholesky, multivariate
normal sampling, a chi-square survival function, and ordinary least squares.

The RNG is numpy's PCG64 seeded through SeedSequence; substreams are derived
from integer key paths so parallel callers get independent, reproducible
streams regardless of scheduling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SingularDesignError, SingularMatrixError


class RngStream:
    """A seeded random stream with splittable substreams.

    Two streams built from the same seed and key path produce identical
    outputs.  ``substream(*keys)`` derives an independent child stream; the
    parent's state is untouched.
    """

    def __init__(self, seed: int, _path: tuple = ()):
        self.seed = int(seed)
        self.path = tuple(int(k) for k in _path)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def substream(self, *keys: int) -> "RngStream":
        return RngStream(self.seed, self.path + tuple(keys))


def cholesky_with_jitter(m: np.ndarray, max_rel_jitter: float = 1e-6):
    """Lower Cholesky factor of a symmetric matrix, adding diagonal jitter
    if needed.

    Tries jitter 0, then 1e-12 * mean-diagonal scaled up by 10 per step until
    ``max_rel_jitter`` * mean-diagonal.  Returns (L, jitter_used).
    """
    m = np.asarray(m, dtype=float)
    k = m.shape[0]
    if m.shape != (k, k):
        raise SingularMatrixError("matrix must be square")
    sym_err = np.abs(m - m.T).max()
    scale = max(np.abs(m).max(), 1.0)
    if sym_err > 1e-10 * scale:
        raise SingularMatrixError(f"matrix is not symmetric (error {sym_err:g})")
    tbar = max(np.trace(m) / k, 0.0)
    if np.all(m == 0.0):
        return np.zeros_like(m), 0.0
    jitter = 0.0
    while True:
        try:
            l = np.linalg.cholesky(m + jitter * np.eye(k))
            return l, jitter
        except np.linalg.LinAlgError:
            nxt = 1e-12 * tbar if jitter == 0.0 else jitter * 10.0
            if tbar == 0.0 or nxt > max_rel_jitter * tbar:
                raise SingularMatrixError(
                    f"Cholesky failed even at maximum jitter "
                    f"{max_rel_jitter * tbar:g}"
                )
            jitter = nxt


def mvn_sample(rng: RngStream, cov: np.ndarray, count: int) -> np.ndarray:
    """Draw ``count`` vectors from N(0, cov) via the jittered Cholesky factor."""
    if count < 1:
        raise ValueError("count must be >= 1")
    l, _ = cholesky_with_jitter(cov)
    z = rng.generator.standard_normal((count, l.shape[0]))
    return z @ l.T


def _gamma_p_series(a: float, x: float) -> float:
    # Lower regularized incomplete gamma by power series, for x < a + 1.
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(10000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * 1e-16:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))

def _gamma_q_contfrac(a: float, x: float) -> float:
    # Upper regularized incomplete gamma by Lentz continued fraction,
    # for x >= a + 1.
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def chi2_sf(x: float, df: int) -> float:
    """P(chi-square with ``df`` degrees of freedom >= x)."""
    if df < 1:
        raise ValueError("df must be >= 1")
    if x < 0:
        raise ValueError("x must be >= 0")
    if x == 0.0:
        return 1.0
    a = df / 2.0
    half = x / 2.0
    if half < a + 1.0:
        return max(0.0, min(1.0, 1.0 - _gamma_p_series(a, half)))
    return max(0.0, min(1.0, _gamma_q_contfrac(a, half)))


def chi2_cdf(x: float, df: int) -> float:
    return 1.0 - chi2_sf(x, df)


def normal_quantile(p: float) -> float:
    """Inverse standard normal CDF (Acklam's rational approximation with a
    Halley refinement; absolute error well below 1e-12)."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must be in (0, 1)")
    a = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
         1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
    b = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
         6.680131188771972e+01, -1.328068155288572e+01)
    c = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
         -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
    d = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
         3.754408661907416e+00)
    p_low, p_high = 0.02425, 1.0 - 0.02425
    if p < p_low:
        q = math.sqrt(-2.0 * math.log(p))
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    elif p <= p_high:
        q = p - 0.5
        r = q * q
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q / \
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
    else:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    # one Halley step against the exact CDF
    e = 0.5 * math.erfc(-x / math.sqrt(2.0)) - p
    u = e * math.sqrt(2.0 * math.pi) * math.exp(x * x / 2.0)
    return x - u / (1.0 + x * u / 2.0)


def ols_fit(x: np.ndarray, y: np.ndarray):
    """Least squares via the normal equations.

    Returns (coefficients, coefficient covariance) where the covariance is
    ``rss/(n-p) * (X'X)^-1``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = x.shape
    if n <= p:
        raise SingularDesignError(f"need n > p (n={n}, p={p})")
    xtx = x.T @ x
    sv = np.linalg.svd(xtx, compute_uv=False)
    if sv[-1] <= 1e-12 * sv[0]:
        raise SingularDesignError("design matrix is rank deficient")
    coef = np.linalg.solve(xtx, x.T @ y)
    resid = y - x @ coef
    s2 = float(resid @ resid) / (n - p)
    cov = s2 * np.linalg.inv(xtx)
    return coef, cov
