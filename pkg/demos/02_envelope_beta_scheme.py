"""
Envelopes from the beta-scheme
==============================

When the reference form is not positive everywhere, the envelope of
nonpositive psh functions is no longer zero.  Solving
det(ghat_t + i dd-bar u) = exp(beta u) for growing beta approximates it.
"""

# %%
from math import log

import numpy as np

from neflab.envelope import compute_envelope, sandwich_margins
from neflab.torus import Grid, NefClassSpec, PeriodicField, ProblemSpec, eigen_values, fourier_field

grid = Grid(1, 128)
rho = fourier_field(grid, [{"k": [1, 0], "cos": 0.04}])
spec = ProblemSpec(grid, np.eye(1), NefClassSpec(np.zeros((1, 1)), rho), PeriodicField.zeros(grid), 3.0)
t = 0.3
print("min eigenvalue of ghat_t:", eigen_values(spec.ghat(t), spec.g).min())

# %%
env = compute_envelope(spec, t, beta_schedule=(50, 100, 200, 400, 800))
print(" beta   gap to next   fitted C log(beta)/beta")
for b, gap in zip(env.beta_schedule, env.sup_gaps):
    print(f"{b:5.0f}   {gap:.3e}     {env.fitted_C * log(b) / b:.3e}")
print("relative fit residual:", round(env.fit_residual, 4))

# %%
# Two-sided bounds hold at every beta; V is admissible and touches zero.
for b, (lo, hi) in zip(env.beta_schedule, sandwich_margins(env)):
    print(f"beta={b:5.0f}  lower margin {lo:.2e}  upper margin {hi:.2e}")
print("sup V =", env.V.max(), " inf V =", env.V.min(), " error bar =", env.error_bar)
