"""Model abstraction and whole-model simulation.

A partially observed Markov process is described here by a :class:`ModelSpec`:
a latent-state simulator (``rprocess``), a measurement simulator and/or
density (``rmeasure`` / ``dmeasure``), an initial-state simulator
(``initializer``), optional prior callbacks, optional parameter transforms,
a dataset, and optional covariates.

Vectorized callback convention
------------------------------
All callbacks operate on *batches*: states and parameters are mappings from
name to a numpy array whose leading axis indexes the batch (particles or
replicate simulations).  Scalar parameter values broadcast against batched
states.  Signatures:

``rprocess(x, params, t0, t1, rng, covars) -> x``
    Advance every batch member from time ``t0`` to ``t1``.  ``covars`` is the
    model's :class:`CovariateTable` (or None); the step-function wrappers
    below handle interpolation.

``rmeasure(x, params, t, rng, covars_t) -> y``
    Draw one observation per batch member; ``covars_t`` is a dict of covariate
    values at ``t``.

``dmeasure(y, x, params, t, log, covars_t) -> array``
    Density of the single observation record ``y`` (dict of scalars, possibly
    NaN for missing components) under each batch member's state.  Must return
    finite values or ``-inf`` when ``log=True``; never NaN.

``initializer(params, t0, rng, n) -> x``
    Draw ``n`` initial states.  Values may be scalars (broadcast) or arrays of
    length ``n``.

``rprior(rng, n) -> params`` and ``dprior(params, log) -> scalar``
    Prior simulator and density over a plain parameter dict.

``to_estimation(params) / from_estimation(params)``
    Elementwise dict-to-dict transform pair between the natural and the
    unconstrained estimation scale.

Callbacks must be pure given their inputs and the supplied generator, which
makes a constructed model immutable and safe to share across workers.
"""

from __future__ import annotations

import logging
from collections.abc import Mapping
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .exceptions import (
    DomainError,
    ModelComponentError,
    SimulationDivergedError,
    TransformDomainError,
)
from .rng import stream

__all__ = [
    "ParamVector",
    "StateVector",
    "TimeSeriesData",
    "CovariateTable",
    "ModelSpec",
    "SimulationRecord",
    "simulate",
    "simulate_paths",
    "transform_params",
    "covariate_lookup",
    "discrete_time_process",
    "euler_process",
    "log_exp_transforms",
    "attach_data",
]

logger = logging.getLogger("pompkit")

INIT_SUFFIX = ".0"


class _NamedVector(Mapping):
    """Ordered, named real vector with total name lookup."""

    __slots__ = ("_names", "_values")

    def __init__(self, entries=None, **kwargs):
        if entries is None:
            items = list(kwargs.items())
        elif isinstance(entries, Mapping):
            items = list(entries.items()) + list(kwargs.items())
        else:
            items = list(entries) + list(kwargs.items())
        names = tuple(str(k) for k, _ in items)
        if not names:
            raise DomainError(f"{type(self).__name__} cannot be empty")
        if any(n == "" for n in names):
            raise DomainError(f"{type(self).__name__} names must be non-empty")
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise DomainError(f"duplicate names in {type(self).__name__}: {dupes}")
        self._names = names
        self._values = np.array([float(v) for _, v in items], dtype=float)

    @property
    def names(self) -> tuple:
        return self._names

    @property
    def values(self) -> np.ndarray:
        return self._values.copy()

    def __getitem__(self, name):
        try:
            return float(self._values[self._names.index(name)])
        except ValueError:
            raise KeyError(
                f"no entry named {name!r}; declared names: {list(self._names)}"
            ) from None

    def __iter__(self):
        return iter(self._names)

    def __len__(self):
        return len(self._names)

    def as_dict(self) -> dict:
        return {n: float(v) for n, v in zip(self._names, self._values)}

    def replace(self, **updates) -> "_NamedVector":
        d = self.as_dict()
        unknown = set(updates) - set(d)
        if unknown:
            raise KeyError(f"unknown names: {sorted(unknown)}")
        d.update(updates)
        return type(self)(d)

    def __repr__(self):
        body = ", ".join(f"{n}={v:.6g}" for n, v in zip(self._names, self._values))
        return f"{type(self).__name__}({body})"

    def __eq__(self, other):
        return (
            isinstance(other, _NamedVector)
            and self._names == other._names
            and np.array_equal(self._values, other._values)
        )

    def __hash__(self):
        return hash((self._names, self._values.tobytes()))


class ParamVector(_NamedVector):
    """Named, ordered parameter vector."""


class StateVector(_NamedVector):
    """Named, ordered state vector."""


@dataclass(frozen=True)
class TimeSeriesData:
    """Observation times, observation records, and the initial time.

    ``observations`` is an (N, r) array aligned with ``times``; missing values
    are NaN.  Times must satisfy t0 <= t1 < t2 < ... < tN.
    """

    t0: float
    times: np.ndarray
    observations: np.ndarray
    obs_names: tuple

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        obs = np.atleast_2d(np.asarray(self.observations, dtype=float))
        if obs.shape[0] != times.shape[0] and obs.shape[1] == times.shape[0]:
            obs = obs.T
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "observations", obs)
        object.__setattr__(self, "obs_names", tuple(self.obs_names))
        if times.ndim != 1 or times.size == 0:
            raise DomainError("times must be a non-empty 1-D array")
        if np.any(np.diff(times) <= 0):
            raise DomainError("observation times must be strictly increasing")
        if self.t0 > times[0]:
            raise DomainError(f"t0={self.t0} exceeds first observation time {times[0]}")
        if obs.shape != (times.size, len(self.obs_names)):
            raise DomainError(
                f"observations shape {obs.shape} does not match "
                f"(n_times={times.size}, n_names={len(self.obs_names)})"
            )

    @property
    def n_obs(self) -> int:
        return int(self.times.size)

    def column(self, name) -> np.ndarray:
        return self.observations[:, self.obs_names.index(name)].copy()

    def record(self, n) -> dict:
        """Observation record at time index ``n`` as a name->scalar dict."""
        return {k: float(v) for k, v in zip(self.obs_names, self.observations[n])}

    @property
    def has_missing(self) -> bool:
        return bool(np.isnan(self.observations).any())

    @staticmethod
    def empty(t0, times, obs_names) -> "TimeSeriesData":
        """Placeholder dataset of NaNs, to be filled by simulation."""
        times = np.asarray(times, dtype=float)
        return TimeSeriesData(
            t0=t0,
            times=times,
            observations=np.full((times.size, len(obs_names)), np.nan),
            obs_names=tuple(obs_names),
        )


@dataclass(frozen=True)
class CovariateTable:
    """Time-varying covariates with linear interpolation between rows."""

    times: np.ndarray
    values: np.ndarray
    names: tuple

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if values.shape[0] != times.shape[0] and values.shape[1] == times.shape[0]:
            values = values.T
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "names", tuple(self.names))
        if times.ndim != 1 or times.size == 0:
            raise DomainError("covariate times must be a non-empty 1-D array")
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise DomainError("covariate times must be strictly increasing")
        if len(set(self.names)) != len(self.names):
            raise DomainError("covariate names must be unique")
        if values.shape != (times.size, len(self.names)):
            raise DomainError(
                f"covariate values shape {values.shape} does not match "
                f"(n_times={times.size}, n_names={len(self.names)})"
            )
        object.__setattr__(self, "_warned", set())

    def lookup(self, t) -> dict:
        """Covariate values at time ``t``: exact at nodes, linear between them.

        Outside the table range the nearest two nodes are extrapolated
        linearly and a warning is logged once per side.
        """
        times, values = self.times, self.values
        t = float(t)
        if times.size == 1:
            return {n: float(values[0, i]) for i, n in enumerate(self.names)}
        if t < times[0] or t > times[-1]:
            side = "before" if t < times[0] else "after"
            if side not in self._warned:
                self._warned.add(side)
                logger.warning(
                    "covariate lookup at t=%g extrapolates %s the table range [%g, %g]",
                    t,
                    side,
                    times[0],
                    times[-1],
                )
            i = 0 if t < times[0] else times.size - 2
        else:
            i = int(np.searchsorted(times, t, side="right")) - 1
            i = min(max(i, 0), times.size - 2)
        w = (t - times[i]) / (times[i + 1] - times[i])
        row = values[i] + w * (values[i + 1] - values[i])
        return {n: float(row[k]) for k, n in enumerate(self.names)}


def covariate_lookup(table: CovariateTable, t) -> dict:
    """Interpolate ``table`` at time ``t`` (see :meth:`CovariateTable.lookup`)."""
    if table is None:
        raise DomainError("covariate_lookup requires a table")
    return table.lookup(t)


@dataclass(frozen=True)
class ModelSpec:
    """A partially observed Markov process model plus its dataset.

    Immutable after construction; see the module docstring for the callback
    contract.  ``accumulators`` lists state variables that sum events within a
    reporting interval and are reset to zero after each observation.
    """

    data: TimeSeriesData
    state_names: tuple
    rprocess: Optional[Callable] = None
    rmeasure: Optional[Callable] = None
    dmeasure: Optional[Callable] = None
    initializer: Optional[Callable] = None
    rprior: Optional[Callable] = None
    dprior: Optional[Callable] = None
    to_estimation: Optional[Callable] = None
    from_estimation: Optional[Callable] = None
    accumulators: tuple = ()
    params: Optional[ParamVector] = None
    covariates: Optional[CovariateTable] = None
    name: str = "model"

    def __post_init__(self):
        object.__setattr__(self, "state_names", tuple(self.state_names))
        object.__setattr__(self, "accumulators", tuple(self.accumulators))
        unknown = set(self.accumulators) - set(self.state_names)
        if unknown:
            raise DomainError(f"accumulators are not state names: {sorted(unknown)}")
        if (self.to_estimation is None) != (self.from_estimation is None):
            raise DomainError("to_estimation and from_estimation must be given together")

    @property
    def obs_names(self) -> tuple:
        return self.data.obs_names

    @property
    def n_states(self) -> int:
        return len(self.state_names)

    def require(self, operation, *components):
        for c in components:
            if getattr(self, c) is None:
                raise ModelComponentError(c, operation)

    def with_data(self, data: TimeSeriesData) -> "ModelSpec":
        return replace(self, data=data)

    def with_params(self, params: ParamVector) -> "ModelSpec":
        return replace(self, params=params)

    def default_params(self, params=None) -> ParamVector:
        p = params if params is not None else self.params
        if p is None:
            raise DomainError(f"no parameters supplied and model '{self.name}' has no default")
        return p


@dataclass(frozen=True)
class SimulationRecord:
    """One realization: latent states at (t0, t1..tN) and observations at t1..tN.

    Accumulator columns report the within-interval totals as seen by the
    measurement at each observation time; the internal carry is zeroed after
    each observation.
    """

    times: np.ndarray
    states: np.ndarray
    observations: np.ndarray
    state_names: tuple
    obs_names: tuple
    params: ParamVector

    def state_column(self, name) -> np.ndarray:
        return self.states[:, self.state_names.index(name)].copy()

    def obs_column(self, name) -> np.ndarray:
        return self.observations[:, self.obs_names.index(name)].copy()

    def as_dataset(self, t0) -> TimeSeriesData:
        return TimeSeriesData(
            t0=t0, times=self.times[1:], observations=self.observations.copy(),
            obs_names=self.obs_names,
        )


# ---------------------------------------------------------------------------
# Parameter handling


def params_to_dict(params) -> dict:
    if isinstance(params, _NamedVector):
        return params.as_dict()
    if isinstance(params, Mapping):
        return dict(params)
    raise TypeError(f"expected ParamVector or mapping, got {type(params)!r}")


def transform_params(model: ModelSpec, params, direction: str):
    """Map parameters between natural and estimation scales.

    ``direction`` is ``"to-estimation"`` or ``"from-estimation"``.  When the
    model registers no transform pair this is the identity.  Non-finite output
    raises :class:`TransformDomainError` naming the offending parameters.
    """
    if direction not in ("to-estimation", "from-estimation"):
        raise DomainError(f"unknown transform direction: {direction!r}")
    fn = model.to_estimation if direction == "to-estimation" else model.from_estimation
    as_vector = isinstance(params, _NamedVector)
    d = params_to_dict(params)
    if fn is not None:
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            d = dict(fn(d))
        bad = [k for k, v in d.items() if not np.all(np.isfinite(v))]
        if bad:
            raise TransformDomainError(bad, direction)
    return ParamVector(d) if as_vector else d


def log_exp_transforms(names):
    """Return a (to_estimation, from_estimation) pair taking ``names`` through log/exp."""
    names = tuple(names)

    def to_est(params):
        out = dict(params)
        for n in names:
            out[n] = np.log(out[n])
        return out

    def from_est(params):
        out = dict(params)
        for n in names:
            out[n] = np.exp(out[n])
        return out

    return to_est, from_est


# ---------------------------------------------------------------------------
# Process wrappers


def discrete_time_process(step_fn, delta_t):
    """Wrap a one-step map into an rprocess advancing in fixed steps of ``delta_t``.

    ``step_fn(x, params, t, delta_t, rng, covars_t) -> x`` is applied
    round((t1 - t0) / delta_t) times; the gap must be an integral number of
    steps.
    """

    def rprocess(x, params, t0, t1, rng, covars=None):
        span = t1 - t0
        nstep = int(round(span / delta_t))
        if abs(span - nstep * delta_t) > 1e-8 * max(1.0, abs(span)):
            raise DomainError(
                f"interval [{t0}, {t1}] is not a whole number of steps of {delta_t}"
            )
        t = t0
        for _ in range(nstep):
            cv = covars.lookup(t) if covars is not None else None
            x = step_fn(x, params, t, delta_t, rng, cv)
            t += delta_t
        return x

    rprocess.delta_t = delta_t
    return rprocess


def euler_process(step_fn, delta_t):
    """Wrap a step function into an rprocess using Euler sub-steps of at most ``delta_t``.

    The interval [t0, t1] is divided into ceil((t1-t0)/delta_t) equal sub-steps,
    so the step size actually used never exceeds ``delta_t``.
    """

    def rprocess(x, params, t0, t1, rng, covars=None):
        span = t1 - t0
        if span <= 0:
            return x
        nstep = max(1, int(np.ceil(span / delta_t - 1e-9)))
        dt = span / nstep
        t = t0
        for _ in range(nstep):
            cv = covars.lookup(t) if covars is not None else None
            x = step_fn(x, params, t, dt, rng, cv)
            t += dt
        return x

    rprocess.delta_t = delta_t
    return rprocess


# ---------------------------------------------------------------------------
# Initialization and batch-state helpers


def default_initializer(model: ModelSpec):
    """Point initializer copying '<state>.0' parameters into like-named states.

    Accumulator states without a '.0' parameter start at zero.
    """

    def initializer(params, t0, rng, n):
        out = {}
        for s in model.state_names:
            key = s + INIT_SUFFIX
            if key in params:
                out[s] = params[key]
            elif s in model.accumulators:
                out[s] = 0.0
            else:
                raise ModelComponentError(
                    f"initializer (no parameter '{key}' for state '{s}')", "initialize"
                )
        return out

    return initializer


def _init_states(model: ModelSpec, params: dict, t0, rng, n) -> np.ndarray:
    init = model.initializer if model.initializer is not None else default_initializer(model)
    x = init(params, t0, rng, n)
    mat = np.empty((n, model.n_states), dtype=float)
    for i, s in enumerate(model.state_names):
        if s not in x:
            raise ModelComponentError(f"initializer (state '{s}' not returned)", "initialize")
        mat[:, i] = np.broadcast_to(np.asarray(x[s], dtype=float), (n,))
    return mat


def _as_state_dict(model: ModelSpec, mat: np.ndarray) -> dict:
    return {s: mat[:, i] for i, s in enumerate(model.state_names)}


def _from_state_dict(model: ModelSpec, x: dict, n: int) -> np.ndarray:
    mat = np.empty((n, model.n_states), dtype=float)
    for i, s in enumerate(model.state_names):
        v = x[s]
        if isinstance(v, np.ndarray) and v.shape == (n,):
            mat[:, i] = v
        else:
            mat[:, i] = np.broadcast_to(np.asarray(v, dtype=float), (n,))
    return mat


def advance(model: ModelSpec, state_mat: np.ndarray, params: dict, t0, t1, rng) -> np.ndarray:
    """Propagate a (n, q) state matrix from t0 to t1 through rprocess."""
    n = state_mat.shape[0]
    x = model.rprocess(_as_state_dict(model, state_mat), params, t0, t1, rng, model.covariates)
    return _from_state_dict(model, x, n)


def measure(model: ModelSpec, state_mat: np.ndarray, params: dict, t, rng) -> np.ndarray:
    """Draw one observation per row of a (n, q) state matrix."""
    n = state_mat.shape[0]
    cv = model.covariates.lookup(t) if model.covariates is not None else None
    y = model.rmeasure(_as_state_dict(model, state_mat), params, t, rng, cv)
    out = np.empty((n, len(model.obs_names)), dtype=float)
    for i, name in enumerate(model.obs_names):
        v = y[name]
        if isinstance(v, np.ndarray) and v.shape == (n,):
            out[:, i] = v
        else:
            out[:, i] = np.broadcast_to(np.asarray(v, dtype=float), (n,))
    return out


def measurement_logdensity(model: ModelSpec, y: dict, state_mat: np.ndarray, params: dict, t):
    """Log measurement density of record ``y`` under each row of the state matrix.

    Observation records whose components are all missing contribute log-density
    zero (the conditioning convention); models receive NaN for partially
    missing components and apply the same convention per component.
    """
    n = state_mat.shape[0]
    if all(np.isnan(v) for v in y.values()):
        return np.zeros(n)
    cv = model.covariates.lookup(t) if model.covariates is not None else None
    logw = model.dmeasure(y, _as_state_dict(model, state_mat), params, t, True, cv)
    logw = np.broadcast_to(np.asarray(logw, dtype=float), (n,)).copy()
    if np.isnan(logw).any():
        raise DomainError(f"dmeasure returned NaN at t={t}; it must return finite values or -inf")
    return logw


def _reset_accumulators(model: ModelSpec, state_mat: np.ndarray):
    for s in model.accumulators:
        state_mat[:, model.state_names.index(s)] = 0.0


def accumulator_indices(model: ModelSpec):
    return [model.state_names.index(s) for s in model.accumulators]


# ---------------------------------------------------------------------------
# Simulation


def simulate_paths(model: ModelSpec, params, seed, nsim, times=None, t0=None,
                   with_obs=True):
    """Simulate ``nsim`` realizations, vectorized over the batch axis.

    Returns ``(states, observations)`` with shapes (nsim, N+1, q) and
    (nsim, N, r); ``observations`` is None when ``with_obs`` is false.
    Accumulator columns in ``states`` report pre-reset values.

    The latent process and the measurements draw from separate child streams,
    so the state paths for a given seed do not depend on whether (or what)
    measurements are drawn.
    """
    model.require("simulate", "rprocess")
    if with_obs:
        model.require("simulate", "rmeasure")
    p = params_to_dict(model.default_params(params))
    times = model.data.times if times is None else np.asarray(times, dtype=float)
    t0 = model.data.t0 if t0 is None else float(t0)
    n_steps = times.size
    rng_proc = stream(seed, "simulate-process")
    rng_meas = stream(seed, "simulate-measure") if with_obs else None

    x = _init_states(model, p, t0, rng_proc, nsim)
    states = np.empty((nsim, n_steps + 1, model.n_states))
    states[:, 0, :] = x
    obs = np.empty((nsim, n_steps, len(model.obs_names))) if with_obs else None

    def diverged(step_index):
        bad = ~np.isfinite(states[:, : step_index + 2, :]).all(axis=0)
        steps, cols = np.where(bad)
        first = steps.min()
        names = sorted({model.state_names[i]
                        for s, i in zip(steps, cols) if s == first})
        return SimulationDivergedError(times[first - 1] if first > 0 else t0, names)

    t_prev = t0
    for n in range(n_steps):
        x = advance(model, x, p, t_prev, times[n], rng_proc)
        states[:, n + 1, :] = x
        if with_obs:
            try:
                obs[:, n, :] = measure(model, x, p, times[n], rng_meas)
            except (ValueError, FloatingPointError):
                # a non-finite state often crashes the measurement sampler;
                # report the divergence rather than the downstream symptom
                if not np.all(np.isfinite(x)):
                    raise diverged(n) from None
                raise
        _reset_accumulators(model, x)
        t_prev = times[n]
    # one vectorized divergence scan instead of a per-step check
    if not np.all(np.isfinite(states)):
        raise diverged(n_steps - 1)
    return states, obs


def simulate(model: ModelSpec, params=None, seed=0, nsim=1):
    """Simulate the full model; returns a list of :class:`SimulationRecord`.

    Deterministic given ``(seed, nsim)``.
    """
    if nsim < 1:
        raise DomainError("nsim must be at least 1")
    pv = model.default_params(params)
    states, obs = simulate_paths(model, pv, seed, nsim)
    times_full = np.concatenate(([model.data.t0], model.data.times))
    return [
        SimulationRecord(
            times=times_full,
            states=states[j],
            observations=obs[j],
            state_names=model.state_names,
            obs_names=model.obs_names,
            params=pv,
        )
        for j in range(nsim)
    ]


def attach_data(model: ModelSpec, record: SimulationRecord) -> ModelSpec:
    """Return the model with its dataset replaced by a simulated realization."""
    return model.with_data(record.as_dataset(model.data.t0)).with_params(record.params)
