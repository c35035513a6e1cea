import numpy as np
import pytest
from scipy import stats

import pompkit as pk
from pompkit import models
from pompkit.core import simulate_paths
from pompkit.distributions import euler_multinomial_probs
from pompkit.rng import stream


# ---------------------------------------------------------------------------
# Gompertz


def test_gompertz_fixed_point_without_noise():
    model = pk.gompertz_model()
    theta = model.params.replace(sigma=0.0)
    rec = pk.simulate(model, theta, seed=0)[0]
    assert np.all(rec.state_column("X") == 1.0)  # X0 = K = 1


def test_gompertz_zero_growth_is_random_walk_in_log():
    model = pk.gompertz_model(n_obs=10)
    theta = model.params.replace(r=0.0, sigma=0.0, **{"X.0": 0.37})
    rec = pk.simulate(model, theta, seed=1)[0]
    # r = 0 makes the map X' = X * eps; with sigma 0, X never moves off 0.37.
    assert np.all(rec.state_column("X") == 0.37)


def test_gompertz_dmeasure_at_median():
    model = pk.gompertz_model()
    x = {"X": np.array([1.0])}
    value = model.dmeasure({"Y": 1.0}, x, {"tau": 0.1}, 1.0, True, None)
    assert value[0] == pytest.approx(-np.log(0.1 * np.sqrt(2 * np.pi)), abs=1e-10)
    assert value[0] == pytest.approx(1.3836466, abs=1e-6)


def test_gompertz_one_step_distribution_matches_log_normal_form():
    # One step of the process on the log scale is N((1-S) log K + S log X, sigma^2).
    theta = {"r": 0.3, "K": 2.0, "sigma": 0.2, "tau": 0.1, "X.0": 0.7}
    model = pk.gompertz_model(n_obs=1)
    states, _ = simulate_paths(model, pk.ParamVector(theta), seed=21, nsim=10_000,
                               with_obs=False)
    logx1 = np.log(states[:, 1, 0])
    s = np.exp(-theta["r"])
    mean = (1 - s) * np.log(theta["K"]) + s * np.log(theta["X.0"])
    result = stats.kstest(logx1, "norm", args=(mean, theta["sigma"]))
    assert result.pvalue > 0.001


# ---------------------------------------------------------------------------
# Ricker


def test_ricker_deterministic_fixed_point():
    r = float(np.exp(3.8))
    n_star = np.log(r)
    model = pk.ricker_model(n_obs=5)
    theta = model.params.replace(sigma=0.0, **{"N.0": n_star})
    rec = pk.simulate(model, theta, seed=2)[0]
    assert rec.state_column("N") == pytest.approx(np.full(6, n_star), rel=1e-12)


def test_ricker_noise_free_orbit_matches_iterated_map():
    model = pk.ricker_model(n_obs=20)
    theta = model.params.replace(sigma=0.0)
    rec = pk.simulate(model, theta, seed=3)[0]
    # first observation time equals t0, so the map is applied n-1 times
    n = 7.0
    expected = [n, n]
    for _ in range(19):
        n = theta["r"] * n * np.exp(-n)
        expected.append(n)
    assert rec.state_column("N") == pytest.approx(expected, rel=1e-12)


def test_ricker_truth_parameters():
    theta = models.RICKER_DEFAULTS
    assert theta["r"] == pytest.approx(44.7, abs=0.05)
    assert theta["sigma"] == 0.3
    assert theta["phi"] == 10.0


def test_ricker_dmeasure_poisson_at_zero():
    model = pk.ricker_model()
    value = model.dmeasure({"y": 0.0}, {"N": np.array([0.2])}, {"phi": 10.0},
                           0.0, False, None)
    assert value[0] == pytest.approx(np.exp(-2.0), rel=1e-12)


# ---------------------------------------------------------------------------
# SIR


def test_force_of_infection():
    assert models.sir_force_of_infection(400.0, 1000.0, 500000.0) == pytest.approx(0.8)


def test_basic_reproduction_number_near_15():
    p = models.SIR_DEFAULTS
    r0 = p["beta"] / (p["gamma"] + p["mu"])
    assert 15.0 <= r0 <= 15.5


def test_sir_population_balances_births_minus_deaths():
    # Instrumented twin: replay the same flows while tracking cumulative
    # births and deaths, and check S+I+R = initial + B - D at all times.
    model = pk.sir_model(years=2.0)
    params = model.params.as_dict()
    rng = stream(123, "flows")
    x = {"S": np.array([32500.0]), "I": np.array([1000.0]), "R": np.array([466500.0])}
    births_total = deaths_total = 0.0
    pop0 = sum(v[0] for v in x.values())
    dt = models.SIR_EULER_DT
    for _ in range(2000):
        pop = x["S"] + x["I"] + x["R"]
        lam = models.sir_force_of_infection(params["beta"], x["I"], pop)
        flows = models.sir_step_flows(x, params, dt, rng, lam, params["mu"] * pop)
        x = {
            "S": x["S"] + flows["births"] - flows["SI"] - flows["SD"],
            "I": x["I"] + flows["SI"] - flows["IR"] - flows["ID"],
            "R": x["R"] + flows["IR"] - flows["RD"],
        }
        births_total += flows["births"][0]
        deaths_total += flows["SD"][0] + flows["ID"][0] + flows["RD"][0]
        assert (x["S"] + x["I"] + x["R"])[0] == pop0 + births_total - deaths_total


def test_sir_states_are_non_negative_integers():
    model = pk.sir_model(years=3.0)
    states, obs = simulate_paths(model, None, seed=4, nsim=5)
    assert np.all(states >= 0)
    assert np.all(states == np.floor(states))
    assert np.all(obs >= 0)


def test_sir_incidence_is_within_interval_cumulative():
    model = pk.sir_model(years=1.0)
    rec = pk.simulate(model, seed=5)[0]
    h = rec.state_column("H")[1:]
    assert np.all(h >= 0)


def test_sir_expected_new_infections_over_one_substep():
    # One tau-leap sub-step from a fixed state: E[new infections] equals
    # S * p with p the first Euler-multinomial exit probability.
    params = models.SIR_DEFAULTS.as_dict()
    s, i_, r_ = 30000.0, 2000.0, 468000.0
    pop = s + i_ + r_
    lam = params["beta"] * i_ / pop
    dt = models.SIR_EULER_DT
    p = euler_multinomial_probs(np.array([lam, params["mu"]]), dt)[0]
    n = 10_000
    rng = stream(6, "substep")
    x = {"S": np.full(n, s), "I": np.full(n, i_), "R": np.full(n, r_)}
    flows = models.sir_step_flows(x, params, dt, rng, lam * np.ones(n),
                                  params["mu"] * pop * np.ones(n))
    expected = s * p
    assert expected == pytest.approx(lam * s * dt, rel=0.01)  # ~ lambda*S*dt
    se = np.sqrt(s * p * (1 - p) / n)
    assert abs(flows["SI"].mean() - expected) < 3 * se


# ---------------------------------------------------------------------------
# seasonal SIR


def test_seasonal_beta_constant_when_unforced():
    params = models.SIR_SEASONAL_DEFAULTS.replace(sigma=0.0, b2=0.0, b3=0.0)
    p = params.as_dict()
    phis = np.linspace(0.0, 3.0, 13)
    betas = models.seasonal_transmission_rate(p, phis)
    assert betas == pytest.approx(np.full(13, np.exp(p["b1"])), rel=1e-12)


def test_seasonal_sigma_zero_keeps_phase_on_clock_time():
    model = pk.sir_seasonal_model(years=0.5)
    params = model.params.replace(sigma=0.0)
    rec = pk.simulate(model, params, seed=7)[0]
    phi = rec.state_column("Phi")
    elapsed = rec.times - rec.times[0]
    assert phi == pytest.approx(elapsed, abs=1e-9)
    assert np.all(rec.state_column("noise")[1:] == 0.0)  # guarded 0/0


def test_seasonal_population_state_tracks_compartments():
    model = pk.sir_seasonal_model(years=0.5)
    rec = pk.simulate(model, seed=8)[0]
    total = rec.state_column("S") + rec.state_column("I") + rec.state_column("R")
    assert np.array_equal(rec.state_column("P"), total)


def test_seasonal_model_uses_birth_covariate():
    lo = models.synthetic_birth_covariate()
    hi_values = lo.values * 10
    hi = pk.CovariateTable(times=lo.times, values=hi_values, names=lo.names)
    m_lo = pk.sir_seasonal_model(years=1.0, covariates=lo)
    m_hi = pk.sir_seasonal_model(years=1.0, covariates=hi)
    rec_lo = pk.simulate(m_lo, seed=9)[0]
    rec_hi = pk.simulate(m_hi, seed=9)[0]
    assert rec_hi.state_column("P")[-1] > rec_lo.state_column("P")[-1]


def test_registry_knows_all_builtins():
    assert set(models.BUILTIN_MODELS) == {"gompertz", "ricker", "sir", "sir-seasonal"}
    with pytest.raises(KeyError, match="unknown model"):
        models.build_model("lorenz")
