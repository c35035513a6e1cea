"""Stochastic epidemics in continuous time: the SIR models.

The SIR process moves whole individuals between susceptible, infected, and
recovered compartments via tau-leap steps: exits from each compartment over a
sub-step are Euler-multinomial across the competing routes.  An accumulator
variable H counts new infections within each weekly reporting interval and
resets after every observation; reported cases are negative binomial around
rho * H.  The seasonal variant adds a Fourier transmission rate with a noisy
phase, imported infections, and a birth covariate.
"""

import numpy as np

import pompkit as pk
from pompkit import dataio
from pompkit.models import SIR_DEFAULTS

model = pk.sir_model()
params = SIR_DEFAULTS
r0 = params["beta"] / (params["gamma"] + params["mu"])
print(f"basic reproduction number beta/(gamma+mu) = {r0:.1f}")

record = pk.simulate(model, seed=1914)[0]
cases = record.obs_column("cases")
print(f"ten years of weekly case reports: {len(cases)} observations")
print(f"annual case totals: {np.add.reduceat(cases, np.arange(0, len(cases), 52))[:10].astype(int)}")

s = record.state_column("S")
i = record.state_column("I")
r = record.state_column("R")
print(f"population drifts {s[0]+i[0]+r[0]:.0f} -> {s[-1]+i[-1]+r[-1]:.0f} "
      "(births and deaths are stochastic)")
assert np.all(record.states[:, :3] == np.floor(record.states[:, :3]))
print("compartments stay non-negative integers throughout.")

dataio.write_simulations_csv("sir_simulation.csv", [record])
print("wrote sir_simulation.csv (time, S, I, R, H, cases)")

# --- seasonal variant -------------------------------------------------------
seasonal = pk.sir_seasonal_model()
rec2 = pk.simulate(seasonal, seed=619552910)[0]
beta_range = pk.models.seasonal_transmission_rate(
    seasonal.params.as_dict(), np.linspace(0, 1, 53))
print(f"\nseasonal transmission rate swings {beta_range.min():.0f}..{beta_range.max():.0f}"
      " over the year")
print(f"seasonal cases, first year: {rec2.obs_column('cases')[:8].astype(int)} ...")
dataio.write_simulations_csv("sir_seasonal_simulation.csv", [rec2])
print("wrote sir_seasonal_simulation.csv")
