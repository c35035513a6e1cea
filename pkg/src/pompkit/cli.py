"""Command-line front end.

Subcommands run one algorithm each (simulate, pfilter, mif, pmcmc, probe,
abc, nlf, kalman) plus ``validate`` for configuration checking.  Simple runs
are driven by flags; anything nested (random-walk scales, probe lists,
priors) comes from a JSON config document, with flags overriding config
values.  Every run requires an explicit seed: results are byte-reproducible
given (config, seed, threads).

Exit status: 0 success, 2 validation error, 3 algorithm failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import jsonschema

from . import core, dataio, models, nlf, oracle, probes, smc
from .abc import AbcSettings, abc as run_abc, compute_probe_scales
from .exceptions import ConfigError, PompKitError
from .mif import MifSettings, mif as run_mif
from .pmcmc import (
    effective_sample_size,
    mvn_diag_rw,
    pmcmc as run_pmcmc,
    uniform_box_prior,
)
from .rng import child_seeds, stream

logger = logging.getLogger("pompkit")

ALGORITHMS = ("simulate", "pfilter", "mif", "pmcmc", "probe", "abc", "nlf", "kalman")

_PROBE_SPEC = {
    "type": "object",
    "properties": {
        "type": {"enum": ["mean", "acf", "nlar", "marginal"]},
        "var": {"type": "string"},
        "transform": {"enum": ["sqrt", "log", "identity", None]},
        "lags": {"type": "array", "items": {"type": "integer"}},
        "powers": {"type": "array", "items": {"type": "integer"}},
        "npoly": {"type": "integer", "minimum": 1},
        "ref": {"enum": ["data"]},
    },
    "required": ["type", "var"],
    "additionalProperties": False,
}

_SD_MAP = {"type": "object", "additionalProperties": {"type": "number", "minimum": 0}}
_PRIOR = {
    "type": "object",
    "additionalProperties": {
        "type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2,
    },
}

SETTINGS_SCHEMAS = {
    "simulate": {
        "type": "object",
        "properties": {
            "nsim": {"type": "integer", "minimum": 1},
            "include_states": {"type": "boolean"},
        },
        "additionalProperties": False,
    },
    "pfilter": {
        "type": "object",
        "properties": {
            "np": {"type": "integer", "minimum": 1},
            "max_fail": {"type": "integer", "minimum": 0},
            "replicates": {"type": "integer", "minimum": 1},
        },
        "additionalProperties": False,
    },
    "kalman": {
        "type": "object",
        "properties": {"mle": {"type": "boolean"}},
        "additionalProperties": False,
    },
    "mif": {
        "type": "object",
        "properties": {
            "iterations": {"type": "integer", "minimum": 0},
            "np": {"type": "integer", "minimum": 1},
            "rw_sd": _SD_MAP,
            "ivp_names": {"type": "array", "items": {"type": "string"}},
            "ic_lag": {"type": "integer", "minimum": 1},
            "var_factor": {"type": "number", "exclusiveMinimum": 0},
            "cooling_factor": {"type": "number"},
            "cooling_fraction": {"type": "number"},
            "transform": {"type": "boolean"},
            "max_fail": {"type": "integer", "minimum": 0},
            "starts": {"type": "integer", "minimum": 1},
            "start_jitter_sdlog": {"type": "number", "minimum": 0},
            "eval_replicates": {"type": "integer", "minimum": 1},
            "eval_np": {"type": "integer", "minimum": 1},
        },
        "required": ["rw_sd"],
        "additionalProperties": False,
    },
    "pmcmc": {
        "type": "object",
        "properties": {
            "steps": {"type": "integer", "minimum": 1},
            "np": {"type": "integer", "minimum": 1},
            "proposal_sd": _SD_MAP,
            "prior": _PRIOR,
            "max_fail": {"type": "integer", "minimum": 0},
        },
        "required": ["proposal_sd", "prior"],
        "additionalProperties": False,
    },
    "abc": {
        "type": "object",
        "properties": {
            "steps": {"type": "integer", "minimum": 1},
            "probes": {"type": "array", "items": _PROBE_SPEC, "minItems": 1},
            "epsilon": {"type": "number", "exclusiveMinimum": 0},
            "scale": {
                "anyOf": [
                    {"enum": ["auto"]},
                    {"type": "array", "items": {"type": "number"}},
                ]
            },
            "scale_nsim": {"type": "integer", "minimum": 2},
            "proposal_sd": _SD_MAP,
            "prior": _PRIOR,
        },
        "required": ["probes", "proposal_sd", "prior"],
        "additionalProperties": False,
    },
    "probe": {
        "type": "object",
        "properties": {
            "probes": {"type": "array", "items": _PROBE_SPEC, "minItems": 1},
            "nsim": {"type": "integer", "minimum": 2},
        },
        "required": ["probes"],
        "additionalProperties": False,
    },
    "nlf": {
        "type": "object",
        "properties": {
            "lags": {"type": "array", "items": {"type": "integer", "minimum": 1},
                     "minItems": 1},
            "nrbf": {"type": "integer", "minimum": 2},
            "transient": {"type": "integer", "minimum": 1},
            "sim_length": {"type": "integer", "minimum": 1},
            "est": {"type": "array", "items": {"type": "string"}},
            "transform": {"type": "boolean"},
            "maxit": {"type": "integer", "minimum": 1},
        },
        "required": ["lags"],
        "additionalProperties": False,
    },
}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "schema": {"const": 1},
        "algorithm": {"enum": list(ALGORITHMS)},
        "model": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "threads": {"type": "integer", "minimum": 1},
        "output": {"type": "string"},
        "data": {"type": "string"},
        "t0": {"type": "number"},
        "covariates": {"type": "string"},
        "params": {"type": "object", "additionalProperties": {"type": "number"}},
        "settings": {"type": "object"},
    },
    "required": ["schema", "algorithm", "model", "seed"],
    "additionalProperties": False,
}


def validate_config(config: dict) -> dict:
    """Schema-validate a run configuration; raises ConfigError with the
    offending field path."""
    try:
        jsonschema.validate(config, CONFIG_SCHEMA)
    except jsonschema.ValidationError as err:
        raise ConfigError(f"config{err.json_path[1:]}: {err.message}") from None
    if config["model"] not in models.BUILTIN_MODELS:
        raise ConfigError(
            f"config.model: unknown model {config['model']!r}; "
            f"valid names: {sorted(models.BUILTIN_MODELS)}"
        )
    algorithm = config["algorithm"]
    settings = config.get("settings", {})
    schema = SETTINGS_SCHEMAS[algorithm]
    errors = sorted(jsonschema.Draft202012Validator(schema).iter_errors(settings),
                    key=lambda e: e.json_path)
    if errors:
        detail = "; ".join(f"settings{e.json_path[1:]}: {e.message}"
                           for e in errors[:3])
        raise ConfigError(
            f"config.{detail} (settings block must match algorithm {algorithm!r})"
        )
    return config


def load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}:{err.lineno}:{err.colno}: {err.msg}") from None
    except OSError as err:
        raise ConfigError(f"{path}: {err.strerror}") from None


# ---------------------------------------------------------------------------
# Run machinery


def _parallel_map(fn, n_tasks, threads):
    """Deterministic ordered map; thread count never changes results because
    every task's seed is derived before dispatch."""
    if threads <= 1 or n_tasks <= 1:
        return [fn(i) for i in range(n_tasks)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n_tasks)))


_TRANSFORMS = {"sqrt": np.sqrt, "log": np.log, "identity": None, None: None}


def _build_probe(spec: dict, model: core.ModelSpec):
    transform = _TRANSFORMS[spec.get("transform")]
    kind = spec["type"]
    var = spec["var"]
    if var not in model.obs_names:
        raise ConfigError(f"probe variable {var!r} is not an observable of "
                          f"{model.name!r} (observables: {list(model.obs_names)})")
    if kind == "mean":
        return probes.probe_mean(var, transform=transform)
    if kind == "acf":
        if "lags" not in spec:
            raise ConfigError("acf probe needs 'lags'")
        return probes.probe_acf(var, spec["lags"], transform=transform)
    if kind == "nlar":
        if "lags" not in spec or "powers" not in spec:
            raise ConfigError("nlar probe needs 'lags' and 'powers'")
        return probes.probe_nlar(var, spec["lags"], spec["powers"], transform=transform)
    ref = model.data.column(var)
    if np.isnan(ref).any():
        raise ConfigError("marginal probe needs complete observed data as reference")
    return probes.probe_marginal(var, ref, npoly=spec.get("npoly", 3),
                                 transform=transform)


def _build_model(config: dict):
    model = models.build_model(config["model"])
    if config.get("params"):
        merged = model.params.as_dict()
        unknown = set(config["params"]) - set(merged)
        if unknown:
            raise ConfigError(f"config.params: unknown parameters {sorted(unknown)} "
                              f"for model {config['model']!r}")
        merged.update(config["params"])
        model = model.with_params(core.ParamVector(merged))
    if config.get("covariates"):
        model = dataclasses.replace(
            model, covariates=dataio.load_covariates(config["covariates"]))
    data = config.get("data", "simulate")
    if data == "simulate":
        rec = core.simulate(model, seed=child_seeds(config["seed"], "dataset", 1)[0])[0]
        model = core.attach_data(model, rec)
    else:
        t0 = config.get("t0", model.data.t0)
        tsd = dataio.load_time_series(data, t0=t0, observables=list(model.obs_names))
        model = model.with_data(tsd)
    return model


def _prior_callbacks(prior_spec: dict):
    bounds = {name: (float(lo), float(hi)) for name, (lo, hi) in prior_spec.items()}
    return uniform_box_prior(bounds)


def _with_prior(model, prior_spec):
    rprior, dprior = _prior_callbacks(prior_spec)
    return dataclasses.replace(model, rprior=rprior, dprior=dprior)


def _chain_summary(chain, burn_in=0):
    ess = {}
    for name in chain.param_names:
        col = chain.column(name)[burn_in:]
        ess[name] = (effective_sample_size(col)
                     if col.size >= 10 else float("nan"))
    return {
        "acceptance_rate": chain.acceptance_rate,
        "posterior_mean": chain.posterior_mean(burn_in),
        "posterior_sd": chain.posterior_sd(burn_in),
        "ess": ess,
        "n_steps": chain.n_steps,
    }


def _run_simulate(model, config, settings, outdir):
    nsim = settings.get("nsim", 1)
    records = core.simulate(model, seed=config["seed"], nsim=nsim)
    path = os.path.join(outdir, "simulations.csv")
    dataio.write_simulations_csv(path, records,
                                 include_states=settings.get("include_states", True))
    return {"n_sim": nsim, "n_obs": model.data.n_obs}, {"simulations": path}


def _run_pfilter(model, config, settings, outdir):
    np_particles = settings.get("np", 1000)
    reps = settings.get("replicates", 1)
    seeds = child_seeds(config["seed"], "pfilter-reps", reps)
    results = _parallel_map(
        lambda i: smc.pfilter(model, num_particles=np_particles, seed=seeds[i],
                              max_fail=settings.get("max_fail", 0)),
        reps, config.get("threads", 1),
    )
    primary = results[0]
    out = {
        "loglik": primary.loglik,
        "cond_logliks": primary.cond_logliks.tolist(),
        "ess": primary.ess.tolist(),
        "np": np_particles,
    }
    if reps > 1:
        lme, se = smc.logmeanexp(np.array([r.loglik for r in results]), with_se=True)
        out["replicates"] = {"logliks": [r.loglik for r in results],
                             "logmeanexp": lme, "se": se}
    return out, {}


def _run_kalman(model, config, settings, outdir):
    if model.name != "gompertz":
        raise ConfigError("the kalman subcommand applies to the gompertz model only")
    y = model.data.observations[:, 0]
    if np.isnan(y).any():
        raise ConfigError("kalman needs complete data (no missing values)")
    params = model.params.as_dict()
    ssm = oracle.gompertz_ssm(params, delta_t=float(np.diff(
        np.concatenate(([model.data.t0], model.data.times)))[0]))
    with np.errstate(divide="ignore"):
        y_log = np.log(y)
    out = {"loglik": oracle.kalman_loglik(ssm, y_log), "params": params}
    if settings.get("mle"):
        theta, loglik, res = oracle.kalman_exact_mle(model.data, model.params)
        out["mle"] = {"params": theta.as_dict(), "loglik": loglik,
                      "status": res.status}
    return out, {}


def _run_mif(model, config, settings, outdir):
    start = model.params
    starts = settings.get("starts", 1)
    jitter = settings.get("start_jitter_sdlog", 1.0)
    rw_sd = settings["rw_sd"]
    est_names = [n for n, v in rw_sd.items() if v > 0]
    seeds = child_seeds(config["seed"], "mif-starts", starts)
    jitter_seeds = child_seeds(config["seed"], "mif-jitter", starts)

    def one_start(i):
        theta0 = start.as_dict()
        if starts > 1 and jitter > 0:
            g = np.random.default_rng(jitter_seeds[i])
            for n in est_names:
                theta0[n] = float(np.exp(np.log(theta0[n]) + jitter * g.standard_normal()))
        mset = MifSettings(
            start=core.ParamVector(theta0),
            n_iterations=settings.get("iterations", 50),
            num_particles=settings.get("np", 1000),
            rw_sd=rw_sd,
            ivp_names=tuple(settings.get("ivp_names", ())),
            ic_lag=settings.get("ic_lag"),
            var_factor=settings.get("var_factor", 2.0),
            cooling_factor=settings.get("cooling_factor"),
            cooling_fraction=settings.get("cooling_fraction"),
            transform=settings.get("transform", True),
            max_fail=settings.get("max_fail", 0),
        )
        result = run_mif(model, mset, seed=seeds[i], run_final_filter=False)
        eval_seeds = child_seeds(seeds[i], "mif-eval", settings.get("eval_replicates", 10))
        lls = np.array([
            smc.pfilter(model, result.theta_hat,
                        num_particles=settings.get("eval_np", settings.get("np", 1000)),
                        seed=s, max_fail=settings.get("max_fail", 0)).loglik
            for s in eval_seeds
        ])
        lme, se = smc.logmeanexp(lls, with_se=True)
        return result, lme, se

    runs = _parallel_map(one_start, starts, config.get("threads", 1))
    best_idx = int(np.argmax([lme for _, lme, _ in runs]))
    best, best_lme, best_se = runs[best_idx]
    trace_path = os.path.join(outdir, "trace.csv")
    dataio.write_trace_csv(trace_path, best)
    out = {
        "theta_hat": best.theta_hat.as_dict(),
        "loglik": best_lme,
        "loglik_se": best_se,
        "best_start": best_idx,
        "starts": [
            {"theta_hat": r.theta_hat.as_dict(), "loglik": lme, "loglik_se": se}
            for r, lme, se in runs
        ],
    }
    return out, {"trace": trace_path}


def _run_pmcmc(model, config, settings, outdir):
    model = _with_prior(model, settings["prior"])
    chain = run_pmcmc(
        model, model.params,
        n_steps=settings.get("steps", 2000),
        num_particles=settings.get("np", 100),
        proposal=mvn_diag_rw(settings["proposal_sd"]),
        seed=config["seed"],
        max_fail=settings.get("max_fail", 0),
    )
    path = os.path.join(outdir, "chain.csv")
    dataio.write_chain_csv(path, chain)
    return _chain_summary(chain), {"chain": path}


def _run_abc(model, config, settings, outdir):
    model = _with_prior(model, settings["prior"])
    probe_list = [_build_probe(s, model) for s in settings["probes"]]
    scale = settings.get("scale", "auto")
    if scale == "auto":
        scale = compute_probe_scales(
            model, model.params, probe_list,
            nsim=settings.get("scale_nsim", 500),
            seed=child_seeds(config["seed"], "abc-scale", 1)[0],
        )
    aset = AbcSettings(
        probes=probe_list,
        scale=np.asarray(scale, dtype=float),
        proposal=mvn_diag_rw(settings["proposal_sd"]),
        n_steps=settings.get("steps", 5000),
        epsilon=settings.get("epsilon", 2.0),
    )
    chain = run_abc(model, model.params, aset, seed=config["seed"])
    path = os.path.join(outdir, "chain.csv")
    dataio.write_chain_csv(path, chain)
    out = _chain_summary(chain)
    out["scale"] = np.asarray(aset.scale).tolist()
    out["epsilon"] = aset.epsilon
    return out, {"chain": path}


def _run_probe(model, config, settings, outdir):
    probe_list = [_build_probe(s, model) for s in settings["probes"]]
    nsim = settings.get("nsim", 1000)
    result = probes.probe(model, model.params, probe_list,
                          nsim=nsim, seed=config["seed"])
    path = os.path.join(outdir, "probes.csv")
    dataio.write_probes_csv(path, result)
    # the probe values derive from these datasets; regenerate them (same
    # child stream as probe() used) so they can be plotted or re-ingested
    records = _probe_simulations(model, nsim, config["seed"])
    sim_path = os.path.join(outdir, "simulations.csv")
    dataio.write_simulations_csv(sim_path, records, include_states=False)
    out = {
        "synth_loglik": result.synth_loglik,
        "labels": list(result.labels),
        "observed": result.observed.tolist(),
        "p_values": result.p_values.tolist(),
    }
    return out, {"probes": path, "simulations": sim_path}


def _probe_simulations(model, nsim, seed):
    _, obs = core.simulate_paths(model, model.params, stream(seed, "probe"), nsim)
    times_full = np.concatenate(([model.data.t0], model.data.times))
    return [
        core.SimulationRecord(
            times=times_full, states=np.empty((model.data.n_obs + 1, 0)),
            observations=obs[j], state_names=(), obs_names=model.obs_names,
            params=model.params)
        for j in range(nsim)
    ]


def _run_nlf(model, config, settings, outdir):
    nset = nlf.NlfSettings(
        lags=settings["lags"],
        sim_length=settings.get("sim_length", 1000),
        transient=settings.get("transient", 1000),
        n_rbf=settings.get("nrbf", 4),
        est=tuple(settings.get("est", ())),
        transform=settings.get("transform", True),
    )
    result = nlf.nlf_fit(model, model.params, nset, seed=config["seed"],
                         maxit=settings.get("maxit", 400))
    return {
        "theta": result.theta.as_dict(),
        "quasi_loglik": result.value,
        "status": result.status,
    }, {}


_RUNNERS = {
    "simulate": _run_simulate,
    "pfilter": _run_pfilter,
    "kalman": _run_kalman,
    "mif": _run_mif,
    "pmcmc": _run_pmcmc,
    "abc": _run_abc,
    "probe": _run_probe,
    "nlf": _run_nlf,
}


class _JsonEncoder(json.JSONEncoder):
    def default(self, o):
        if isinstance(o, (np.floating, np.integer)):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
        return super().default(o)


def run(config: dict) -> int:
    """Validate and execute one run; returns the process exit status."""
    try:
        config = validate_config(config)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    outdir = config.get("output", ".")
    os.makedirs(outdir, exist_ok=True)
    try:
        model = _build_model(config)
        results, files = _RUNNERS[config["algorithm"]](
            model, config, config.get("settings", {}), outdir)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except PompKitError as err:
        print(f"algorithm failure: {err}", file=sys.stderr)
        return 3
    payload = {
        "schema": 1,
        "algorithm": config["algorithm"],
        "model": config["model"],
        "seed": config["seed"],
        "threads": config.get("threads", 1),
        "generated_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "results": results,
        "files": {k: os.path.basename(v) for k, v in files.items()},
    }
    result_path = os.path.join(outdir, "result.json")
    with open(result_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, cls=_JsonEncoder)
        fh.write("\n")
    print(result_path)
    return 0


# ---------------------------------------------------------------------------
# Argument parsing


def _add_common(sub):
    sub.add_argument("--config", help="JSON run configuration")
    sub.add_argument("--model", help="built-in model name")
    sub.add_argument("--data", help="dataset CSV path, or 'simulate'")
    sub.add_argument("--seed", type=int, help="master seed (required)")
    sub.add_argument("--threads", type=int, help="worker threads for outer loops")
    sub.add_argument("--t0", type=float, help="initial time for loaded data")
    sub.add_argument("-o", "--output", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pomp-kit",
        description="Simulation-based inference for partially observed Markov processes",
    )
    subs = parser.add_subparsers(dest="command", required=True)
    for name in ALGORITHMS:
        sub = subs.add_parser(name, help=f"run {name}")
        _add_common(sub)
        if name == "simulate":
            sub.add_argument("--nsim", type=int, help="number of realizations")
        if name == "pfilter":
            sub.add_argument("--np", type=int, dest="np_particles",
                             help="number of particles")
            sub.add_argument("--replicates", type=int, help="replicate filter runs")
        if name == "probe":
            sub.add_argument("--nsim", type=int, help="number of simulations")
    val = subs.add_parser("validate", help="check a config file")
    val.add_argument("--config", required=True)
    return parser


def _merge_flags(args) -> dict:
    config = load_config(args.config) if args.config else {}
    config.setdefault("schema", 1)
    config.setdefault("algorithm", args.command)
    if config["algorithm"] != args.command:
        raise ConfigError(
            f"config.algorithm {config['algorithm']!r} does not match "
            f"subcommand {args.command!r}"
        )
    for key in ("model", "data", "seed", "threads", "output", "t0"):
        value = getattr(args, key, None)
        if value is not None:
            config[key] = value
    settings = config.setdefault("settings", {})
    if getattr(args, "nsim", None) is not None:
        settings["nsim"] = args.nsim
    if getattr(args, "np_particles", None) is not None:
        settings["np"] = args.np_particles
    if getattr(args, "replicates", None) is not None:
        settings["replicates"] = args.replicates
    return config


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("PK_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "validate":
            validate_config(load_config(args.config))
            print("valid")
            return 0
        config = _merge_flags(args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
