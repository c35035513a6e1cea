"""Nonlinear-forecasting simulated quasi-likelihood.

A long stationary simulation trains a lagged radial-basis regression that
predicts each observation from earlier ones; applying the trained predictor
to the data yields Gaussian prediction errors whose log density is the
quasi-log-likelihood.  The simulation seed is held fixed across calls with
the same settings, so the objective is deterministic and can be handed to a
simplex optimizer.

The radial basis functions are Gaussian bumps,
``f_k(x) = exp(-(x - m_k)**2 / (2 s**2))``, with centers spread over the
simulated range plus a 20% overhang and a scale of 0.3 times the range.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import core
from .exceptions import DomainError
from .oracle import nelder_mead
from .rng import stream

__all__ = ["NlfSettings", "rbf_centers", "nlf_quasi_loglik", "nlf_fit", "NlfResult"]

logger = logging.getLogger("pompkit")


@dataclass(frozen=True)
class NlfSettings:
    """Controls for the quasi-likelihood: lags, basis size, simulation lengths.

    ``transient`` observations are simulated and discarded before the
    ``sim_length`` used for fitting; both must exceed the largest lag.
    """

    lags: tuple
    sim_length: int = 1000          # fitted portion of the simulation
    transient: int = 1000           # discarded warm-up
    n_rbf: int = 4
    est: tuple = ()
    transform: bool = True

    def __post_init__(self):
        object.__setattr__(self, "lags", tuple(int(l) for l in self.lags))
        object.__setattr__(self, "est", tuple(self.est))
        if not self.lags or any(l < 1 for l in self.lags):
            raise DomainError("lags must be a non-empty list of integers >= 1")
        if self.n_rbf < 2:
            raise DomainError("need at least 2 radial basis functions")
        max_lag = max(self.lags)
        if self.sim_length < max_lag + 1 or self.transient < max_lag + 1:
            raise DomainError("sim_length and transient must exceed max(lags)")


def rbf_centers(ymin: float, ymax: float, n_rbf: int):
    """Centers and scale for the radial basis over the range [ymin, ymax].

    Centers span the range widened by 10% on each side; the common scale is
    0.3 times the range.  A degenerate range is an error.
    """
    if n_rbf < 2:
        raise DomainError("need at least 2 radial basis functions")
    span = float(ymax) - float(ymin)
    if not span > 0:
        raise DomainError(f"degenerate simulated range [{ymin}, {ymax}]")
    k = np.arange(n_rbf, dtype=float)
    centers = ymin + span * (1.2 * k / (n_rbf - 1) - 0.1)
    return centers, 0.3 * span


def _rbf_design(values: np.ndarray, lags, centers, scale) -> np.ndarray:
    """Design matrix of radial-basis features of lagged values.

    ``values`` is the series, rows of the output correspond to targets
    values[max_lag:], columns to (lag j, basis k) pairs.
    """
    max_lag = max(lags)
    n = values.size
    cols = []
    for lag in lags:
        lagged = values[max_lag - lag : n - lag]
        cols.append(np.exp(-((lagged[:, None] - centers[None, :]) ** 2)
                           / (2.0 * scale**2)))
    return np.concatenate(cols, axis=1)


def _uniform_spacing(times: np.ndarray) -> float:
    diffs = np.diff(times)
    dt = float(diffs[0]) if diffs.size else 1.0
    if diffs.size and np.any(np.abs(diffs - dt) > 1e-8 * max(1.0, abs(dt))):
        raise DomainError("quasi-likelihood fitting requires evenly spaced observations")
    if dt <= 0:
        raise DomainError("need at least two distinct observation times")
    return dt


def nlf_quasi_loglik(model: core.ModelSpec, params=None,
                     settings: NlfSettings = None, seed=0) -> float:
    """Simulated quasi-log-likelihood of the data at one parameter point.

    Deterministic given ``(params, settings, seed)``.  Models with
    time-varying covariates are rejected: the method assumes stationarity.
    """
    if settings is None:
        raise DomainError("settings are required")
    model.require("quasi-likelihood", "rprocess", "rmeasure")
    if model.covariates is not None:
        raise DomainError("quasi-likelihood fitting does not support models "
                          "with time-varying covariates")
    if len(model.obs_names) != 1:
        raise DomainError("quasi-likelihood fitting supports a single observable")
    data = model.data
    max_lag = max(settings.lags)
    if data.n_obs <= max_lag:
        raise DomainError(f"need more than max(lags)={max_lag} observations")
    y_star = data.observations[:, 0]
    if np.isnan(y_star).any():
        raise DomainError("quasi-likelihood fitting requires complete data")

    # spacing from the observation grid itself; t0 may coincide with the
    # first observation time (the long simulation is stationary either way)
    dt = _uniform_spacing(data.times)
    total = settings.transient + settings.sim_length
    sim_times = data.t0 + dt * np.arange(1, total + 1)
    _, obs_arrays = core.simulate_paths(model, model.default_params(params),
                                        stream(seed, "nlf"), 1,
                                        times=sim_times, t0=data.t0)
    series = obs_arrays[0, :, 0]
    fitted = series[settings.transient:]

    centers, scale = rbf_centers(fitted.min(), fitted.max(), settings.n_rbf)
    # Training targets are the post-transient simulated values; predictors may
    # reach back into the transient by at most max_lag.
    train = series[settings.transient - max_lag:]
    design = _rbf_design(train, settings.lags, centers, scale)
    target = train[max_lag:]
    coef, _, rank, _ = np.linalg.lstsq(design, target, rcond=None)
    if rank < design.shape[1]:
        logger.warning("rank-deficient radial-basis fit (rank %d of %d); "
                       "minimum-norm coefficients used", rank, design.shape[1])
    resid = target - design @ coef
    sigma2 = float(np.mean(resid**2))
    if sigma2 <= 1e-12 * max(float(np.mean(target**2)), np.finfo(float).tiny):
        raise DomainError("degenerate deterministic fit: zero residual variance")

    data_design = _rbf_design(y_star, settings.lags, centers, scale)
    data_resid = y_star[max_lag:] - data_design @ coef
    n_terms = y_star.size - max_lag
    return float(-0.5 * n_terms * math.log(2.0 * math.pi * sigma2)
                 - np.sum(data_resid**2) / (2.0 * sigma2))


@dataclass(frozen=True)
class NlfResult:
    theta: core.ParamVector
    value: float
    status: str
    n_evals: int


def nlf_fit(model: core.ModelSpec, start: core.ParamVector,
            settings: NlfSettings, seed=0, maxit=400, reltol=1e-6) -> NlfResult:
    """Maximize the quasi-log-likelihood over ``settings.est``.

    Runs the simplex search on the estimation scale with the simulation seed
    fixed across evaluations; a non-converged search returns the best point
    found, flagged in ``status``.
    """
    est = settings.est
    if not est:
        return NlfResult(theta=start, status="converged", n_evals=1,
                         value=nlf_quasi_loglik(model, start, settings, seed))
    unknown = set(est) - set(start.names)
    if unknown:
        raise DomainError(f"est names not in start: {sorted(unknown)}")
    base_nat = start.as_dict()
    work = (core.transform_params(model, base_nat, "to-estimation")
            if settings.transform else dict(base_nat))

    def unpack(x):
        w = dict(work)
        w.update(zip(est, x))
        nat = (core.transform_params(model, w, "from-estimation")
               if settings.transform else w)
        for name in start.names:
            if name not in est:
                nat[name] = base_nat[name]
        return core.ParamVector({n: nat[n] for n in start.names})

    def negobjective(x):
        try:
            return -nlf_quasi_loglik(model, unpack(x), settings, seed)
        except DomainError as err:
            logger.warning("quasi-likelihood degenerate at %s: %s", x, err)
            return math.inf

    x0 = np.array([work[n] for n in est])
    res = nelder_mead(negobjective, x0, maxit=maxit, reltol=reltol)
    status = res.status if res.status != "maxit" else "maxit (best found returned)"
    return NlfResult(theta=unpack(res.x), value=-res.fun, status=status,
                     n_evals=res.n_evals)
