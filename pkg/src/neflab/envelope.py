"""Envelopes V_t = sup{v <= 0 : ghat_t + i dd-bar v in the closed Gamma_k cone} via the beta-scheme.

For each beta in an increasing schedule the beta-equation is solved
(warm-started from the previous beta).  Two measured constants bracket
the envelope at every beta::

    u_beta - C_low / beta  <=  V  <=  (u_beta + K(beta)) / (1 - 1/beta)

with C_low from the maximum principle (sup of log of the right-side
ratio of ghat_t) and K(beta) = (C'(beta) log beta + osc(rho)) / beta
from the barrier built on the Kahler potential -rho.  The returned V is
u_{beta_max} shifted by a constant inside the admissible range, chosen so
that sup V = 0 (a property of the exact envelope) whenever the sandwich
allows it.  V stays exactly admissible and nonpositive.
"""

from dataclasses import dataclass, field
from math import comb, log

import numpy as np

from .errors import ScheduleTooShort
from .hessian_solver import solve_beta_sigma_k
from .ma_solver import solve_beta_ma
from .torus import PeriodicField, cohomology_constants, eigen_values, normalized_sigmas, sigma_values

__all__ = [
    "EnvelopeResult",
    "compute_envelope",
    "sandwich_margins",
    "sandwich_from_parts",
    "envelope_monotonicity_check",
    "DEFAULT_SCHEDULE",
]

DEFAULT_SCHEDULE = (50.0, 100.0, 200.0, 400.0, 800.0)


@dataclass
class EnvelopeResult:
    V: PeriodicField
    beta_schedule: list
    sup_gaps: list
    fitted_C: float
    fit_residual: float = float("nan")
    C_low: float = 0.0
    C_prime: list = field(default_factory=list)
    upper_offsets: list = field(default_factory=list)
    shift: float = 0.0
    shift_interval: tuple = (0.0, 0.0)
    solutions: list = field(default_factory=list)
    t: float = None
    k: int = None
    band: float = 0.0

    @property
    def u_max(self):
        return self.solutions[-1].phi

    @property
    def error_bar(self):
        """sup over the grid of (upper - lower) envelope bound at beta_max; |V - true V| <= error_bar."""
        return self.band

    def summary(self):
        return {
            "t": self.t,
            "k": self.k,
            "beta_schedule": list(self.beta_schedule),
            "sup_gaps": list(self.sup_gaps),
            "fitted_C": self.fitted_C,
            "fit_residual": self.fit_residual,
            "C_low": self.C_low,
            "C_prime": list(self.C_prime),
            "shift": self.shift,
            "shift_interval": list(self.shift_interval),
            "error_bar": self.error_bar,
            "sup_V": self.V.max(),
            "inf_V": self.V.min(),
        }


def _rhs_scale(spec, t, k):
    # the MA beta-equation carries no c_t; the sigma_k one does
    return 1.0 if k == spec.n else cohomology_constants(spec, t, k)


def compute_envelope(spec, t, k=None, beta_schedule=DEFAULT_SCHEDULE, tol=None, u0=None):
    k = spec.n if k is None else k
    betas = [float(b) for b in beta_schedule]
    if len(betas) < 3:
        raise ScheduleTooShort(f"beta schedule needs at least 3 entries, got {len(betas)}")
    if any(b2 <= b1 for b1, b2 in zip(betas, betas[1:])):
        raise ValueError("beta schedule must be strictly increasing")
    n = spec.n
    scale = _rhs_scale(spec, t, k)

    sols = []
    prev = u0
    for beta in betas:
        if k == n:
            res = solve_beta_ma(spec, t, beta, tol=tol, u0=prev)
        else:
            res = solve_beta_sigma_k(spec, t, k, beta, tol=tol, u0=prev)
        sols.append(res)
        prev = res.phi

    ghat = spec.ghat(t)
    ratio = sigma_values(ghat, spec.g, k) / comb(n, k) / scale
    inside = normalized_sigmas(eigen_values(ghat, spec.g), k).min(axis=-1) > 0
    c_low = max(0.0, float(np.log(ratio[inside]).max())) if inside.any() else 0.0

    base = np.broadcast_to(spec.nef.chi0 + t * spec.g, (1, n, n))
    ratio_k = float(sigma_values(base, spec.g, k)[0]) / comb(n, k) / scale
    osc_rho = float(spec.nef.rho.values.max() - spec.nef.rho.values.min())
    c_prime, offsets = [], []
    for beta in betas:
        cp = max(0.0, n - log(ratio_k) / log(beta))
        c_prime.append(cp)
        offsets.append((cp * log(beta) + osc_rho) / beta)

    gaps = [float(np.abs(b.phi.values - a.phi.values).max()) for a, b in zip(sols, sols[1:])]
    x = np.array([log(b) / b for b in betas[:-1]])
    gy = np.array(gaps)
    fitted = float(x @ gy / (x @ x))
    norm = float(np.linalg.norm(gy))
    fit_res = float(np.linalg.norm(gy - fitted * x) / norm) if norm > 0 else 0.0

    u = sols[-1].phi.values
    bmax = betas[-1]
    lo = -c_low / bmax
    hi = min(-float(u.max()), float(((u / bmax + offsets[-1]) / (1 - 1 / bmax)).min()))
    # the true envelope has sup V = 0, so prefer the shift that reproduces it
    shift = min(max(-float(u.max()), lo), hi) if hi >= lo else lo
    shift = min(shift, -float(u.max()))
    V = PeriodicField(spec.grid, u + shift)
    upper = np.minimum((u + offsets[-1]) / (1 - 1 / bmax), 0.0)
    band = float((upper - (u - c_low / bmax)).max())
    return EnvelopeResult(
        V=V,
        beta_schedule=betas,
        sup_gaps=gaps,
        fitted_C=fitted,
        fit_residual=fit_res,
        C_low=c_low,
        C_prime=c_prime,
        upper_offsets=offsets,
        shift=shift,
        shift_interval=(lo, hi),
        solutions=sols,
        t=t,
        k=k,
        band=max(band, 0.0),
    )


def sandwich_margins(env, V=None):
    """Per-beta (lower, upper) margins of the two-sided envelope bound.

    lower = min(V - u_beta + C_low/beta), upper = min(u_beta + K(beta) - (1 - 1/beta) V);
    both are >= 0 when the bound holds.
    """
    V = env.V if V is None else V
    return sandwich_from_parts(V, env.beta_schedule, [s.phi for s in env.solutions],
                               env.C_low, env.upper_offsets)


def sandwich_from_parts(V, beta_schedule, u_betas, C_low, upper_offsets):
    """Same as :func:`sandwich_margins` but from raw pieces (e.g. reloaded dumps)."""
    v = V.values
    out = []
    for beta, u, off in zip(beta_schedule, u_betas, upper_offsets):
        u = u.values
        lower = float((v - (u - C_low / beta)).min())
        upper = float((u + off - (1 - 1 / beta) * v).min())
        out.append((lower, upper))
    return out


def envelope_monotonicity_check(spec, t_list, k=None, beta_schedule=DEFAULT_SCHEDULE, tol=1e-6,
                                envelopes=None):
    """Check that envelopes grow with t.

    Two comparisons are made for every pair t_i < t_j: the beta_max
    solutions (which obey an exact comparison principle, tolerance ``tol``)
    and the reported envelopes (tolerance ``tol`` plus both error bars).
    """
    ts = [float(t) for t in t_list]
    if any(b <= a for a, b in zip(ts, ts[1:])):
        raise ValueError("t_list must be increasing")
    if envelopes is None:
        envelopes = [compute_envelope(spec, t, k, beta_schedule) for t in ts]
    pairs = []
    ok = True
    for i in range(len(ts)):
        for j in range(i + 1, len(ts)):
            ei, ej = envelopes[i], envelopes[j]
            mu = float((ej.u_max.values - ei.u_max.values).min())
            mv = float((ej.V.values - ei.V.values).min())
            allow = tol + ei.error_bar + ej.error_bar
            good = mu >= -tol and mv >= -allow
            ok = ok and good
            pairs.append({"t_i": ts[i], "t_j": ts[j], "u_margin": mu, "V_margin": mv,
                          "V_allowance": allow, "ok": good})
    return {"ok": ok, "pairs": pairs}
