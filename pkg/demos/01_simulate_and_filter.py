"""Simulate a Gompertz population and estimate its likelihood two ways.

The Gompertz model is the package's workhorse example because its log scale
is linear-Gaussian: a Kalman filter gives the exact likelihood, so we can see
how close the particle filter gets.
"""

import numpy as np

import pompkit as pk

# A model object bundles the process simulator, the measurement model, the
# observation times, and default parameters.  The fresh model carries
# placeholder data; simulating fills it in.
model = pk.gompertz_model()
print("parameters:", model.params)

record = pk.simulate(model, seed=42)[0]
model = pk.attach_data(model, record)
y = record.obs_column("Y")
print(f"simulated {len(y)} observations; first five: {np.round(y[:5], 3)}")

# Exact log likelihood via the Kalman filter on the log scale.
exact = pk.kalman_loglik(pk.gompertz_ssm(model.params.as_dict()), np.log(y))
print(f"exact log likelihood at the truth: {exact:.3f}")

# Particle filter estimate with 1000 particles.
result = pk.pfilter(model, num_particles=1000, seed=7)
print(f"one particle-filter estimate:     {result.loglik:.3f}")
print(f"smallest effective sample size along the way: {result.ess.min():.0f}")

# The filter estimates the likelihood without bias, so replicates are
# averaged on the likelihood scale (logmeanexp), not the log scale.
replicates = np.array([
    pk.pfilter(model, num_particles=1000, seed=s).loglik
    for s in pk.child_seeds(7, "replicates", 10)
])
estimate, se = pk.logmeanexp(replicates, with_se=True)
print(f"combined over 10 replicates:      {estimate:.3f} +- {se:.3f}")
print(f"difference from exact:            {estimate - exact:+.3f}")
