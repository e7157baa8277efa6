"""Monge-Ampere solvers: the t-family, the beta-approximation and the auxiliary equation.

All three are posed for A = ghat_t + i dd-bar u with ghat_t = chi0 + i dd-bar rho + t g:

    det(g^{-1} A) = c_t e^{F_hat}                                  (t-family)
    det(g^{-1} A) = e^{beta u}                                     (beta-equation)
    det(g^{-1} A) = c_t Vol tau_k(-phi_t + u_beta - s) / A_skb e^{F_hat}   (auxiliary)
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._newton import SigmaEquation, damped_newton
from .torus import (
    HermitianField,
    PeriodicField,
    cohomology_constants,
    eigen_values,
    hessian_values,
    integrate,
    sigma_k_ratio,
)

__all__ = [
    "SolveResult",
    "default_tolerance",
    "tau",
    "solve_ma",
    "solve_beta_ma",
    "solve_auxiliary",
    "newton_tail_ok",
    "mass_balance",
]


@dataclass
class SolveResult:
    phi: PeriodicField
    residual_sup: float
    iterations: int
    positivity_margin: float
    beta: Optional[float] = None
    history: list = field(default_factory=list)
    c_t: Optional[float] = None
    k: Optional[int] = None

    def summary(self):
        return {
            "residual_sup": self.residual_sup,
            "iterations": self.iterations,
            "positivity_margin": self.positivity_margin,
            "beta": self.beta,
            "c_t": self.c_t,
            "k": self.k,
            "sup_phi": self.phi.max(),
            "inf_phi": self.phi.min(),
        }


def default_tolerance(n):
    return 1e-9 if n == 1 else 1e-7


def tau(x, k_smooth):
    """Smooth positive approximation of max(x, 0), decreasing in ``k_smooth``."""
    x = np.asarray(x, dtype=float)
    return 0.5 * (x + np.sqrt(x * x + float(k_smooth) ** -2))


def newton_tail_ok(history, factor=0.5):
    """True when the last three residuals shrink by at least ``factor`` per step."""
    tail = history[-3:]
    if len(tail) < 3:
        return True
    return all(b <= factor * a or b == 0.0 for a, b in zip(tail, tail[1:]))


def mass_balance(spec, t, phi, rhs_values, k=None):
    """Integral of (LHS - RHS) against omega^n for a potential ``phi``."""
    k = spec.n if k is None else k
    a = HermitianField(spec.grid, spec.ghat(t) + hessian_values(spec.grid, phi.values))
    lhs = sigma_k_ratio(a, spec.g, k).values
    return integrate(PeriodicField(spec.grid, lhs - rhs_values), spec.g)


def _start(spec, u0):
    if u0 is None:
        return spec.kahler_potential().values
    return u0.values if isinstance(u0, PeriodicField) else np.asarray(u0, dtype=float)


def _finish(spec, u, info, normalize, **extra):
    if normalize:
        u = u - u.max()
    return SolveResult(
        phi=PeriodicField(spec.grid, u),
        residual_sup=info.report_sup,
        iterations=info.iterations,
        positivity_margin=info.margin,
        history=info.history,
        **extra,
    )


def solve_ma(spec, t, tol=None, u0=None, max_iter=60):
    """Solve det(g^{-1}(ghat_t + i dd-bar phi)) = c_t e^{F_hat} with sup phi = 0."""
    if not 0 < t <= 1:
        raise ValueError(f"t must lie in (0, 1], got {t}")
    tol = default_tolerance(spec.n) if tol is None else tol
    c_t = cohomology_constants(spec, t, spec.n)
    eq = SigmaEquation(spec.grid, spec.g, spec.ghat(t), spec.n,
                       log_rhs=np.log(c_t) + spec.F_hat.values)
    u, info = damped_newton(eq, _start(spec, u0), tol, max_iter=max_iter)
    return _finish(spec, u, info, True, c_t=c_t, k=spec.n)


def solve_beta_ma(spec, t, beta, tol=None, u0=None, max_iter=80):
    """Solve det(g^{-1}(ghat_t + i dd-bar u)) = e^{beta u}; no sup normalization."""
    if beta < 1:
        raise ValueError(f"beta must be >= 1, got {beta}")
    tol = default_tolerance(spec.n) if tol is None else tol
    if u0 is None:
        lam = np.linalg.eigvalsh(np.linalg.solve(spec.g, spec.nef.chi0 + t * spec.g))
        u0 = spec.kahler_potential().values + np.log(np.prod(lam.real)) / beta
    eq = SigmaEquation(spec.grid, spec.g, spec.ghat(t), spec.n, beta=beta)
    u, info = damped_newton(eq, _start(spec, u0), tol, max_iter=max_iter)
    return _finish(spec, u, info, False, beta=float(beta), k=spec.n)


def solve_auxiliary(spec, t, s, k_smooth, phi_t, u_beta, tol=None, u0=None, max_iter=60,
                    weight_exponent=1.0):
    """Solve the auxiliary equation driven by tau_k(-phi_t + u_beta - s).

    Warm-starts from ``phi_t`` when it is psh, else from the Kahler potential.
    Returns ``(result, A_skb)`` with A_skb = int tau_k(-phi_t + u_beta - s) w omega^n,
    w = exp(weight_exponent * F_hat).  For sigma_k pipelines pass n/k.
    """
    if s < 0:
        raise ValueError("s must be nonnegative")
    if k_smooth < 1:
        raise ValueError("k_smooth must be >= 1")
    tol = default_tolerance(spec.n) if tol is None else tol
    c_t = cohomology_constants(spec, t, spec.n)
    tk = tau(-phi_t.values + u_beta.values - s, k_smooth)
    wf = weight_exponent * spec.F_hat.values
    a_skb = integrate(PeriodicField(spec.grid, tk * np.exp(wf)), spec.g)
    log_rhs = np.log(c_t * spec.volume / a_skb) + np.log(tk) + wf
    eq = SigmaEquation(spec.grid, spec.g, spec.ghat(t), spec.n, log_rhs=log_rhs)
    if u0 is not None:
        start = _start(spec, u0)
    elif eigen_values(spec.ghat(t) + hessian_values(spec.grid, phi_t.values), spec.g)[..., 0].min() > 0:
        start = phi_t.values
    else:
        # sigma_k solutions with k < n need not be psh
        start = spec.kahler_potential().values
    u, info = damped_newton(eq, start, tol, max_iter=max_iter)
    return _finish(spec, u, info, True, c_t=c_t, k=spec.n), a_skb
