"""Sequential Monte Carlo likelihood evaluation (the particle filter).

One filtering pass propagates a swarm of J particles through the latent
process, weights them by the measurement density at each observation,
resamples systematically, and accumulates per-step conditional log
likelihoods whose sum estimates the log likelihood.  Resampling happens at
every observation; there is no ESS-triggered adaptive scheme.

The estimator is unbiased for the likelihood (not the log likelihood), which
is why replicate estimates are combined with :func:`logmeanexp`.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import core
from .exceptions import DomainError, FilteringFailureError
from .rng import stream

__all__ = ["FilterResult", "pfilter", "systematic_resample", "ess", "logmeanexp"]

logger = logging.getLogger("pompkit")


@dataclass(frozen=True)
class FilterResult:
    """Output of one particle-filtering pass.

    ``loglik`` always equals ``cond_logliks.sum()``; ``ess`` holds the
    effective sample size of the weights at each observation and
    ``filter_means`` the weighted state means before resampling.
    """

    loglik: float
    cond_logliks: np.ndarray
    ess: np.ndarray
    filter_means: np.ndarray
    num_particles: int
    n_failures: int = 0
    final_particles: Optional[np.ndarray] = None


def systematic_resample(weights, rng, n=None) -> np.ndarray:
    """Systematic resampling: one uniform draw, n evenly spaced sampling points.

    Returns 0-based indices ``k`` with ``P(k_j = m)`` equal to the normalized
    weight of particle m, and the count of each index m guaranteed to lie in
    {floor(n*w_m), ceil(n*w_m)}.  ``n`` defaults to the number of weights, in
    which case equal weights reproduce ``arange(n)`` for every draw.
    """
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise DomainError("weights must be a non-empty 1-D vector")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise DomainError("weights must be finite and non-negative")
    total = w.sum()
    if total <= 0:
        raise DomainError("all weights are zero")
    n = w.size if n is None else int(n)
    cumulative = np.cumsum(w / total)
    cumulative[-1] = 1.0
    u = (rng.random() + np.arange(n)) / n
    return np.searchsorted(cumulative, u, side="left").astype(np.intp)


def ess(weights) -> float:
    """Effective sample size 1 / sum(w_tilde**2) of a weight vector."""
    w = np.asarray(weights, dtype=float)
    total = w.sum()
    if total <= 0:
        raise DomainError("all weights are zero")
    w = w / total
    return float(1.0 / np.sum(w**2))


def logmeanexp(values, with_se=False):
    """log(mean(exp(values))), computed stably, with an optional jackknife SE.

    The SE is the delta-method jackknife over the vector; it is NaN for a
    single value (undefined rather than zero).
    """
    x = np.asarray(values, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise DomainError("logmeanexp needs a non-empty vector")
    m = np.max(x)
    if not np.isfinite(m):
        est = float(m)
    else:
        est = float(m + np.log(np.mean(np.exp(x - m))))
    if not with_se:
        return est
    n = x.size
    if n == 1:
        return est, float("nan")
    loo = np.empty(n)
    for k in range(n):
        loo[k] = logmeanexp(np.delete(x, k))
    se = float((n - 1) * np.std(loo, ddof=1) / math.sqrt(n))
    return est, se


def pfilter(model: core.ModelSpec, params=None, num_particles=1000, seed=0,
            max_fail=0, save_final_particles=False) -> FilterResult:
    """Run the particle filter and estimate the log likelihood.

    A step where every particle weight vanishes is a filtering failure.  By
    default that raises :class:`FilteringFailureError` naming the step; with
    ``max_fail`` > 0 up to that many failed steps instead contribute -inf to
    the log likelihood while the swarm continues unresampled.

    Deterministic given ``(seed, num_particles)``, independent of worker count.
    """
    model.require("particle filtering", "rprocess", "dmeasure")
    if num_particles < 1:
        raise DomainError("num_particles must be at least 1")
    p = core.params_to_dict(model.default_params(params))
    data = model.data
    J = int(num_particles)
    rng = stream(seed, "pfilter")

    x = core._init_states(model, p, data.t0, rng, J)
    N = data.n_obs
    cond_logliks = np.empty(N)
    ess_vec = np.empty(N)
    filter_means = np.empty((N, model.n_states))
    n_failures = 0

    t_prev = data.t0
    for n in range(N):
        t = float(data.times[n])
        x = core.advance(model, x, p, t_prev, t, rng)
        logw = core.measurement_logdensity(model, data.record(n), x, p, t)
        max_logw = np.max(logw)
        if not np.isfinite(max_logw):
            n_failures += 1
            if n_failures > max_fail:
                raise FilteringFailureError(n + 1, t)
            logger.warning("filtering failure at step %d (t=%g): zero weights tolerated "
                           "(%d of %s)", n + 1, t, n_failures, max_fail)
            cond_logliks[n] = -np.inf
            ess_vec[n] = J
            filter_means[n] = x.mean(axis=0)
        else:
            w = np.exp(logw - max_logw)
            sum_w = w.sum()
            cond_logliks[n] = max_logw + np.log(sum_w / J)
            w_norm = w / sum_w
            ess_vec[n] = 1.0 / np.sum(w_norm**2)
            filter_means[n] = w_norm @ x
            x = x[systematic_resample(w_norm, rng)]
        core._reset_accumulators(model, x)
        t_prev = t

    return FilterResult(
        loglik=float(cond_logliks.sum()),
        cond_logliks=cond_logliks,
        ess=ess_vec,
        filter_means=filter_means,
        num_particles=J,
        n_failures=n_failures,
        final_particles=x.copy() if save_final_particles else None,
    )
