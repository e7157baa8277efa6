"""
A manufactured Monge-Ampere solution
====================================

Pick a potential, compute the density that it solves for, then ask the
Newton solver to find it again.
"""

# %%
import numpy as np

from neflab.torus import (Grid, HermitianField, NefClassSpec, PeriodicField, ProblemSpec,
                          det_ratio, hessian_values)
from neflab.ma_solver import newton_tail_ok, solve_ma

grid = Grid(1, 128)
x, y = grid.coords()
raw = 0.01 * np.cos(2 * np.pi * x) + 0.006 * np.sin(2 * np.pi * (x + 2 * y))
star = PeriodicField(grid, raw - raw.max())

# %%
# chi0 = 0.3, t = 0.7, so the reference form is the identity.
g = np.eye(1)
nef = NefClassSpec(0.3 * np.eye(1), PeriodicField.zeros(grid))
t = 0.7
a = nef.chi0 + t * g + hessian_values(grid, star.values)
F = PeriodicField(grid, np.log(det_ratio(HermitianField(grid, a), g).values))
spec = ProblemSpec(grid, g, nef, F, p=3.0)

# %%
res = solve_ma(spec, t)
print("Newton residuals:", ", ".join(f"{r:.1e}" for r in res.history))
print("quadratic tail:", newton_tail_ok(res.history))
print("sup error:", np.abs(res.phi.values - star.values).max())

# %%
# Without a known answer, refine the grid instead.
for N in (16, 32, 64, 128):
    gN = Grid(1, N)
    xN, yN = gN.coords()
    FN = PeriodicField(gN, np.broadcast_to(np.cos(2 * np.pi * (xN + yN)), gN.shape).copy())
    sp = ProblemSpec(gN, g, NefClassSpec(0.3 * np.eye(1), PeriodicField.zeros(gN)), FN, p=3.0)
    phi = solve_ma(sp, t).phi
    print(f"N={N:4d}  min phi = {phi.min():.12f}")
