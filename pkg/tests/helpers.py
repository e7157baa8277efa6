import numpy as np

from neflab.torus import (
    HermitianField,
    NefClassSpec,
    PeriodicField,
    ProblemSpec,
    det_ratio,
    fourier_field,
    hessian_values,
)


def spec_for(grid, chi0=0.0, rho=None, F=None, g=None, p=3.0):
    n = grid.n
    rho = PeriodicField.zeros(grid) if rho is None else rho
    F = PeriodicField.zeros(grid) if F is None else F
    g = np.eye(n) if g is None else g
    if np.ndim(chi0) == 0:
        chi0 = chi0 * np.eye(n)
    return ProblemSpec(grid, g, NefClassSpec(chi0, rho), F, p)


def random_field(grid, rng, modes=5, kmax=3, amp=0.3):
    ms = []
    for _ in range(modes):
        k = rng.integers(-kmax, kmax + 1, size=grid.dim).tolist()
        ms.append({"k": k, "cos": rng.uniform(-amp, amp), "sin": rng.uniform(-amp, amp)})
    return fourier_field(grid, ms)


def manufactured(grid, phi_star, t=1.0, chi0=0.0, rho=None, g=None):
    """Spec whose Monge-Ampere solution at ``t`` is phi_star (sup-normalized)."""
    base = spec_for(grid, chi0=chi0, rho=rho, g=g)
    a = base.ghat(t) + hessian_values(grid, phi_star.values)
    F = PeriodicField(grid, np.log(det_ratio(HermitianField(grid, a), base.g).values))
    return spec_for(grid, chi0=chi0, rho=rho, F=F, g=g)
