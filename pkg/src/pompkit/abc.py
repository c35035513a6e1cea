"""Approximate Bayesian computation by Markov chain Monte Carlo.

Each proposal simulates a single dataset, summarizes it with the probe list,
and is accepted only if the scaled probe mismatch falls inside a tolerance
ball AND a Metropolis draw passes the prior ratio.  The per-step scaled
distance (and the simulated probes behind it) are kept on the chain for
audit.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import core
from .exceptions import DomainError
from .pmcmc import Chain, Proposal
from .probes import apply_probes, probe_labels
from .rng import stream

__all__ = ["AbcSettings", "abc", "compute_probe_scales"]

logger = logging.getLogger("pompkit")


@dataclass(frozen=True)
class AbcSettings:
    """Controls for one ABC-MCMC chain.

    ``scale`` holds one positive scale per probe dimension; the acceptance
    ball is sum(((s - s*) / scale)**2) < epsilon**2.
    """

    probes: tuple
    scale: np.ndarray
    proposal: Proposal
    n_steps: int
    epsilon: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "probes", tuple(self.probes))
        object.__setattr__(self, "scale", np.asarray(self.scale, dtype=float).ravel())
        if not self.probes:
            raise DomainError("probe list is empty")
        dim = sum(p.arity for p in self.probes)
        if self.scale.size != dim:
            raise DomainError(f"scale has length {self.scale.size}, probes have "
                              f"total dimension {dim}")
        if np.any(self.scale <= 0) or not np.all(np.isfinite(self.scale)):
            raise DomainError("scales must be positive and finite")
        if self.epsilon < 0:
            raise DomainError("epsilon must be non-negative")
        if self.n_steps < 1:
            raise DomainError("n_steps must be at least 1")


def compute_probe_scales(model: core.ModelSpec, params, probes, nsim=500,
                         seed=0) -> np.ndarray:
    """Per-probe standard deviations across ``nsim`` simulations at ``params``.

    The natural relative scaling for the ABC ball; a zero-variance probe is an
    error naming the probe.
    """
    if nsim < 2:
        raise DomainError("nsim must be at least 2")
    _, obs_arrays = core.simulate_paths(model, model.default_params(params),
                                        stream(seed, "probe-scales"), nsim)
    batch = {name: obs_arrays[:, :, i] for i, name in enumerate(model.obs_names)}
    values = apply_probes(probes, batch)
    scales = values.std(axis=0, ddof=1)
    labels = probe_labels(probes)
    degenerate = [labels[i] for i in np.where(~(scales > 0))[0]]
    if degenerate:
        raise DomainError(f"zero-variance probes cannot be scaled: {degenerate}")
    return scales


def abc(model: core.ModelSpec, start: core.ParamVector, settings: AbcSettings,
        seed=0) -> Chain:
    """Random-walk ABC-MCMC targeting the probe-matching posterior.

    The returned chain stores, per step, the proposal's scaled distance and
    simulated probe values in ``extras`` ("distance", "sim_probes"), alongside
    the usual acceptance bookkeeping.  ``logliks`` is all-NaN: ABC never
    evaluates a likelihood.
    """
    model.require("abc", "rprocess", "rmeasure")
    if model.dprior is None:
        raise DomainError("abc requires a dprior callback on the model")
    names = start.names
    theta = np.array(start.values)
    logprior = float(model.dprior(dict(zip(names, theta)), True))
    if not np.isfinite(logprior):
        raise DomainError("starting parameters have zero prior density")
    scales = settings.proposal.scales(names)
    tau = settings.scale
    eps2 = settings.epsilon**2

    data_batch = {name: model.data.column(name)[None, :] for name in model.obs_names}
    observed = apply_probes(settings.probes, data_batch)[0]

    rng = stream(seed, "abc-chain")
    M = settings.n_steps
    samples = np.empty((M, len(names)))
    log_priors = np.empty(M)
    accepted = np.zeros(M, dtype=bool)
    distances = np.full(M, np.nan)
    sim_probes = np.full((M, observed.size), np.nan)

    for m in range(M):
        theta_prop = settings.proposal.propose(theta, scales, rng)
        logprior_prop = float(model.dprior(dict(zip(names, theta_prop)), True))
        if np.isfinite(logprior_prop):
            # Out-of-prior proposals never reach the simulator (they are
            # rejected regardless, and may lie outside the model's domain).
            params = core.ParamVector(dict(zip(names, theta_prop)))
            _, obs_arrays = core.simulate_paths(model, params,
                                                stream(seed, "abc-sim", m), 1)
            batch = {name: obs_arrays[:, :, i] for i, name in enumerate(model.obs_names)}
            sim_vals = apply_probes(settings.probes, batch)[0]
            dist2 = float(np.sum(((sim_vals - observed) / tau) ** 2))
            distances[m] = dist2
            sim_probes[m] = sim_vals
            if dist2 < eps2 and math.log(rng.random()) < logprior_prop - logprior:
                theta, logprior = theta_prop, logprior_prop
                accepted[m] = True
        samples[m] = theta
        log_priors[m] = logprior

    return Chain(
        param_names=names,
        samples=samples,
        logliks=np.full(M, np.nan),
        log_priors=log_priors,
        accepted=accepted,
        extras={
            "distance": distances,
            "sim_probes": sim_probes,
            "observed_probes": observed,
            "scale": tau,
            "epsilon": float(settings.epsilon),
        },
    )
