"""Random deviates and densities for the built-in models.

The Euler-multinomial family describes the exits from a compartment of size
``size`` over a time step ``dt`` when ``k`` competing exponential exit routes
run at constant rates.  Route ``j`` receives probability

    p_j = (rate_j / sum(rates)) * (1 - exp(-sum(rates) * dt)),

and the vector of exit counts is multinomial with the remaining mass staying
put.  A zero total rate is the analytic limit p_j = 0 (all counts zero), not a
0/0 error, so edge states such as an empty infected compartment work.

Everything here is a pure function taking an explicit generator, safe for
concurrent use with distinct streams.
"""

from __future__ import annotations

import numpy as np
from scipy.special import gammaln, xlogy

from .exceptions import DomainError

__all__ = [
    "euler_multinomial_probs",
    "reulermultinom",
    "deulermultinom",
    "dnbinom_mu",
    "rnbinom_mu",
    "dpois",
    "dlnorm",
]


def _validate_spec(size, rates, dt):
    rates = np.asarray(rates, dtype=float)
    if rates.ndim == 1:
        rates = rates[None, :]
    if np.any(rates < 0) or not np.all(np.isfinite(rates)):
        raise DomainError("rates must be finite and non-negative")
    size_arr = np.asarray(size, dtype=float)
    if np.any(size_arr < 0) or np.any(size_arr != np.floor(size_arr)):
        raise DomainError("size must be a non-negative integer")
    if not (np.isscalar(dt) or np.ndim(dt) == 0) or dt <= 0:
        raise DomainError("dt must be a positive scalar")
    return size_arr, rates


def euler_multinomial_probs(rates, dt) -> np.ndarray:
    """Per-route exit probabilities over a step of length ``dt``.

    ``rates`` may be (k,) or (n, k); the result has the same shape.  Rows with
    zero total rate get all-zero probabilities.
    """
    rates = np.asarray(rates, dtype=float)
    squeeze = rates.ndim == 1
    r = rates[None, :] if squeeze else rates
    total = r.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(total > 0, r / np.where(total > 0, total, 1.0), 0.0)
    p = p * (-np.expm1(-total * float(dt)))
    return p[0] if squeeze else p


def reulermultinom(size, rates, dt, rng) -> np.ndarray:
    """Draw Euler-multinomial exit counts.

    ``size`` scalar or (n,), ``rates`` (k,) or (n, k).  Returns integer counts
    with the same leading shape as the broadcast of the two; the counts never
    exceed ``size`` row-wise.
    """
    size_arr, rates2 = _validate_spec(size, rates, dt)
    scalar = np.ndim(size) == 0 and np.asarray(rates).ndim == 1
    n = max(rates2.shape[0], size_arr.size if size_arr.ndim else 1)
    p = euler_multinomial_probs(np.broadcast_to(rates2, (n, rates2.shape[1])), dt)
    remaining = np.broadcast_to(np.asarray(size_arr, dtype=np.int64), (n,)).copy()
    remaining_p = np.ones(n)
    counts = np.zeros((n, p.shape[1]), dtype=np.int64)
    # Stick-breaking multinomial: route j is Binomial(remaining, p_j / mass left).
    for j in range(p.shape[1]):
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(remaining_p > 0, p[:, j] / np.where(remaining_p > 0, remaining_p, 1.0), 0.0)
        q = np.clip(q, 0.0, 1.0)
        draw = rng.binomial(remaining, q)
        counts[:, j] = draw
        remaining -= draw
        remaining_p -= p[:, j]
    return counts[0] if scalar else counts


def deulermultinom(counts, size, rates, dt, log=False):
    """Probability mass of Euler-multinomial exit counts.

    Counts exceeding ``size`` (or negative) have density 0 (log: -inf) rather
    than raising, so density-evaluation loops never abort on impossible
    proposals.
    """
    size_arr, rates2 = _validate_spec(size, rates, dt)
    counts = np.asarray(counts, dtype=float)
    scalar = counts.ndim == 1
    c = counts[None, :] if scalar else counts
    if c.shape[1] != rates2.shape[1]:
        raise DomainError(
            f"counts have {c.shape[1]} routes but rates have {rates2.shape[1]}"
        )
    n = max(c.shape[0], rates2.shape[0], size_arr.size if size_arr.ndim else 1)
    c = np.broadcast_to(c, (n, c.shape[1]))
    sz = np.broadcast_to(np.asarray(size_arr, dtype=float), (n,))
    p = euler_multinomial_probs(np.broadcast_to(rates2, (n, rates2.shape[1])), dt)

    stay = sz - c.sum(axis=1)
    valid = (stay >= 0) & np.all(c >= 0, axis=1) & np.all(c == np.floor(c), axis=1)
    p_stay = np.clip(1.0 - p.sum(axis=1), 0.0, 1.0)
    logpmf = (
        gammaln(sz + 1)
        - gammaln(np.where(valid, stay, 0.0) + 1)
        - gammaln(c + 1).sum(axis=1)
        + xlogy(c, p).sum(axis=1)
        + xlogy(np.where(valid, stay, 0.0), p_stay)
    )
    logpmf = np.where(valid, logpmf, -np.inf)
    out = logpmf if log else np.exp(logpmf)
    return float(out[0]) if scalar else out


def dnbinom_mu(y, size, mu, log=False):
    """Negative binomial pmf parameterized by mean ``mu`` and dispersion ``size``.

    Mean mu, variance mu + mu**2/size.  ``mu = 0`` is the point mass at zero.
    """
    size = np.asarray(size, dtype=float)
    mu = np.asarray(mu, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(size <= 0):
        raise DomainError("dispersion (size) must be positive")
    if np.any(mu < 0):
        raise DomainError("mu must be non-negative")
    valid = (y >= 0) & (y == np.floor(y))
    yv = np.where(valid, y, 0.0)
    logpmf = (
        gammaln(yv + size)
        - gammaln(size)
        - gammaln(yv + 1)
        + size * (np.log(size) - np.log(size + mu))
        + xlogy(yv, mu)
        - yv * np.log(size + mu)
    )
    logpmf = np.where(valid, logpmf, -np.inf)
    out = logpmf if log else np.exp(logpmf)
    return float(out) if np.ndim(out) == 0 else out


def rnbinom_mu(size, mu, rng, n=None):
    """Draw negative binomial deviates with mean ``mu`` and dispersion ``size``.

    Uses the gamma-Poisson mixture, which accepts real dispersion and mu = 0.
    """
    size = np.asarray(size, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if np.any(size <= 0):
        raise DomainError("dispersion (size) must be positive")
    if np.any(mu < 0):
        raise DomainError("mu must be non-negative")
    shape = (n,) if n is not None else np.broadcast_shapes(size.shape, mu.shape)
    lam = rng.gamma(np.broadcast_to(size, shape), np.broadcast_to(mu / size, shape))
    return rng.poisson(lam)


def dpois(y, lam, log=False):
    """Poisson pmf; lam = 0 is the point mass at zero."""
    y = np.asarray(y, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise DomainError("Poisson rate must be non-negative")
    valid = (y >= 0) & (y == np.floor(y))
    yv = np.where(valid, y, 0.0)
    logpmf = np.where(valid, xlogy(yv, lam) - lam - gammaln(yv + 1), -np.inf)
    out = logpmf if log else np.exp(logpmf)
    return float(out) if np.ndim(out) == 0 else out


def dlnorm(y, meanlog, sdlog, log=False):
    """Lognormal density; zero (log: -inf) for y <= 0."""
    y = np.asarray(y, dtype=float)
    meanlog = np.asarray(meanlog, dtype=float)
    sdlog = np.asarray(sdlog, dtype=float)
    if np.any(sdlog <= 0):
        raise DomainError("sdlog must be positive")
    with np.errstate(divide="ignore", invalid="ignore"):
        ly = np.where(y > 0, np.log(np.where(y > 0, y, 1.0)), 0.0)
        z = (ly - meanlog) / sdlog
        logpdf = -0.5 * z**2 - np.log(sdlog) - 0.5 * np.log(2 * np.pi) - ly
    logpdf = np.where(y > 0, logpdf, -np.inf)
    out = logpdf if log else np.exp(logpdf)
    return float(out) if np.ndim(out) == 0 else out
