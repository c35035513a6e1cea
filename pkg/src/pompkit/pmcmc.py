"""Particle marginal Metropolis-Hastings posterior sampling.

Each proposal's log likelihood comes from a fresh particle-filtering pass;
the incumbent's estimate is carried along unchanged, never recomputed, which
is what makes the chain target the exact posterior despite the likelihood
being estimated.  Proposals are a symmetric diagonal-normal random walk, so
the acceptance ratio needs no proposal terms.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import core
from .exceptions import DomainError, FilteringFailureError
from .rng import stream
from .smc import pfilter

__all__ = [
    "Proposal",
    "mvn_diag_rw",
    "Chain",
    "pmcmc",
    "effective_sample_size",
    "uniform_box_prior",
]

logger = logging.getLogger("pompkit")


@dataclass(frozen=True)
class Proposal:
    """Symmetric multivariate-normal random walk with diagonal covariance.

    Parameters with zero scale are held fixed.  Symmetry is what lets the
    Metropolis ratio omit proposal densities.
    """

    sd: dict
    kind: str = "mvn-diag-rw"

    def __post_init__(self):
        if any(v < 0 for v in self.sd.values()):
            raise DomainError("proposal scales must be non-negative")

    def scales(self, names) -> np.ndarray:
        unknown = set(self.sd) - set(names)
        if unknown:
            raise DomainError(f"proposal names not in parameters: {sorted(unknown)}")
        return np.array([float(self.sd.get(n, 0.0)) for n in names])

    def propose(self, theta: np.ndarray, scales: np.ndarray, rng) -> np.ndarray:
        return theta + scales * rng.standard_normal(theta.shape)


def mvn_diag_rw(sd: dict) -> Proposal:
    """Diagonal-normal random-walk proposal with per-parameter scales."""
    return Proposal(sd=dict(sd))


def uniform_box_prior(bounds: dict):
    """Independent uniform prior over a box: name -> (low, high).

    Returns ``(rprior, dprior)`` callbacks; parameters not listed are ignored
    by the density (treated as improper-flat).
    """
    for name, (lo, hi) in bounds.items():
        if not lo < hi:
            raise DomainError(f"empty prior interval for {name!r}: ({lo}, {hi})")
    log_volume = sum(math.log(hi - lo) for lo, hi in bounds.values())

    def rprior(rng, n):
        return {name: rng.uniform(lo, hi, size=n) for name, (lo, hi) in bounds.items()}

    def dprior(params, log=True):
        inside = all(lo <= np.min(params[name]) and np.max(params[name]) <= hi
                     for name, (lo, hi) in bounds.items())
        logp = -log_volume if inside else -math.inf
        return logp if log else math.exp(logp)

    return rprior, dprior


@dataclass(frozen=True)
class Chain:
    """A Metropolis chain of parameter samples with acceptance bookkeeping.

    Row m repeats row m-1 whenever step m was rejected.  ``logliks`` holds the
    carried likelihood estimate of the retained sample (for feature-matching
    chains this is the scaled probe distance instead; see ``extras``).
    """

    param_names: tuple
    samples: np.ndarray
    logliks: np.ndarray
    log_priors: np.ndarray
    accepted: np.ndarray
    extras: dict = field(default_factory=dict)

    @property
    def n_steps(self) -> int:
        return self.samples.shape[0]

    @property
    def acceptance_rate(self) -> float:
        return float(np.mean(self.accepted))

    def column(self, name) -> np.ndarray:
        return self.samples[:, self.param_names.index(name)].copy()

    def posterior_mean(self, burn_in=0) -> dict:
        return {n: float(v) for n, v in
                zip(self.param_names, self.samples[burn_in:].mean(axis=0))}

    def posterior_sd(self, burn_in=0) -> dict:
        return {n: float(v) for n, v in
                zip(self.param_names, self.samples[burn_in:].std(axis=0, ddof=1))}


def effective_sample_size(samples, with_flag=False):
    """ESS of a scalar chain: N / (1 + 2 * sum of autocorrelations).

    Autocorrelations are summed by Geyer's initial-positive-sequence rule
    (consecutive pairs kept while their sum stays positive).  A constant chain
    reports 1.  Chains with net negative correlation would report more than N;
    such values are capped at N and flagged.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim != 1 or x.size < 10:
        raise DomainError("effective_sample_size needs a 1-D chain of length >= 10")
    n = x.size
    x = x - x.mean()
    var = np.dot(x, x) / n
    if var == 0:
        return (1.0, False) if with_flag else 1.0
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:n].real / n
    rho = acov / acov[0]

    tau = 0.0
    capped = False
    for j in range(0, n - 1, 2):
        pair = rho[j] + rho[j + 1] if j + 1 < n else rho[j]
        if pair <= 0:
            break
        tau += 2.0 * pair
    tau -= 1.0
    if tau <= 0 or n / tau > n:
        ess_value, capped = float(n), True
    else:
        ess_value = float(n / tau)
    return (ess_value, capped) if with_flag else ess_value


def pmcmc(model: core.ModelSpec, start: core.ParamVector, n_steps: int,
          num_particles: int, proposal: Proposal, seed=0, max_fail=0) -> Chain:
    """Particle marginal Metropolis-Hastings.

    Accepts a proposal with probability min(1, prior ratio times the ratio of
    likelihood estimates).  A filtering failure at a proposal counts as
    likelihood zero (auto-reject, logged); zero prior density at the start is
    an error.
    """
    model.require("pmcmc", "rprocess", "dmeasure")
    if model.dprior is None:
        raise DomainError("pmcmc requires a dprior callback on the model")
    names = start.names
    theta = np.array(start.values)
    logprior = float(model.dprior(dict(zip(names, theta)), True))
    if not np.isfinite(logprior):
        raise DomainError("starting parameters have zero prior density")
    scales = proposal.scales(names)

    def estimate_loglik(theta_vec, tag):
        params = core.ParamVector(dict(zip(names, theta_vec)))
        try:
            return pfilter(model, params, num_particles=num_particles,
                           seed=stream(seed, "pmcmc-pfilter", tag)).loglik
        except FilteringFailureError as err:
            logger.warning("proposal auto-rejected: %s", err)
            return -math.inf

    loglik = estimate_loglik(theta, 0)
    rng = stream(seed, "pmcmc-chain")

    M = int(n_steps)
    samples = np.empty((M, len(names)))
    logliks = np.empty(M)
    log_priors = np.empty(M)
    accepted = np.zeros(M, dtype=bool)

    for m in range(1, M + 1):
        theta_prop = proposal.propose(theta, scales, rng)
        logprior_prop = float(model.dprior(dict(zip(names, theta_prop)), True))
        log_u = math.log(rng.random())
        if np.isfinite(logprior_prop):
            # Prior-zero proposals skip the filtering pass: they are rejected
            # with probability one either way, and the model components need
            # never see out-of-domain parameters.
            loglik_prop = estimate_loglik(theta_prop, m)
            log_ratio = (logprior_prop + loglik_prop) - (logprior + loglik)
        else:
            loglik_prop, log_ratio = -math.inf, -math.inf
        if log_u < log_ratio:
            theta, loglik, logprior = theta_prop, loglik_prop, logprior_prop
            accepted[m - 1] = True
        samples[m - 1] = theta
        logliks[m - 1] = loglik
        log_priors[m - 1] = logprior

    return Chain(
        param_names=names,
        samples=samples,
        logliks=logliks,
        log_priors=log_priors,
        accepted=accepted,
    )
