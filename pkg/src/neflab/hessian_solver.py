"""sigma_k (complex Hessian) equations and Gamma_k cone bookkeeping."""

from dataclasses import dataclass
from math import comb, log

import numpy as np

from ._newton import SigmaEquation, damped_newton
from .errors import AdmissibilityFailure
from .ma_solver import _finish, _start, default_tolerance
from .torus import (
    HermitianField,
    PeriodicField,
    as_hermitian,
    cohomology_constants,
    eigen_values,
    hessian_values,
    normalized_sigmas,
    sigma_values,
)

__all__ = [
    "ConeMembership",
    "gamma_k_check",
    "solve_sigma_k",
    "solve_beta_sigma_k",
    "barrier_verify",
    "BarrierReport",
]


@dataclass
class ConeMembership:
    k: int
    margin: float

    @property
    def admissible(self):
        return self.margin > 0


def gamma_k_check(a, g, k):
    """Min over points and j <= k of sigma_j(lambda)/C(n, j), lambda the eigenvalues of g^{-1} a."""
    n = a.grid.n
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in 1..{n}, got {k}")
    lam = eigen_values(a.matrices, as_hermitian(g, n))
    return ConeMembership(k, float(normalized_sigmas(lam, k).min()))


def _check_k(spec, k):
    if not 1 <= k <= spec.n:
        raise ValueError(f"k must lie in 1..{spec.n}, got {k}")


def solve_sigma_k(spec, t, k, tol=None, u0=None, max_iter=60):
    """Solve (ghat_t + i dd-bar phi)^k wedge omega^{n-k} = c_t e^{F_hat} omega^n, sup phi = 0.

    ``positivity_margin`` of the result holds the Gamma_k margin.
    """
    _check_k(spec, k)
    if not 0 < t <= 1:
        raise ValueError(f"t must lie in (0, 1], got {t}")
    tol = default_tolerance(spec.n) if tol is None else tol
    c_t = cohomology_constants(spec, t, k)
    eq = SigmaEquation(spec.grid, spec.g, spec.ghat(t), k, log_rhs=np.log(c_t) + spec.F_hat.values)
    u, info = damped_newton(eq, _start(spec, u0), tol, max_iter=max_iter)
    res = _finish(spec, u, info, True, c_t=c_t, k=k)
    res.positivity_margin = gamma_k_check(
        HermitianField(spec.grid, spec.ghat(t) + hessian_values(spec.grid, res.phi.values)), spec.g, k
    ).margin
    return res


def solve_beta_sigma_k(spec, t, k, beta, tol=None, u0=None, max_iter=80):
    """Solve (ghat_t + i dd-bar u)^k wedge omega^{n-k} = c_t e^{beta u} omega^n."""
    _check_k(spec, k)
    if beta < 1:
        raise ValueError(f"beta must be >= 1, got {beta}")
    tol = default_tolerance(spec.n) if tol is None else tol
    c_t = cohomology_constants(spec, t, k)
    if u0 is None:
        base = np.broadcast_to(spec.nef.chi0 + t * spec.g, (1, spec.n, spec.n))
        ratio = float(sigma_values(base, spec.g, k)[0]) / comb(spec.n, k)
        u0 = spec.kahler_potential().values + log(ratio / c_t) / beta
    eq = SigmaEquation(spec.grid, spec.g, spec.ghat(t), k, beta=beta, scale=c_t)
    u, info = damped_newton(eq, _start(spec, u0), tol, max_iter=max_iter)
    res = _finish(spec, u, info, False, beta=float(beta), c_t=c_t, k=k)
    res.positivity_margin = gamma_k_check(
        HermitianField(spec.grid, spec.ghat(t) + hessian_values(spec.grid, u)), spec.g, k
    ).margin
    return res


@dataclass
class BarrierReport:
    beta: float
    C_prime: float
    convexity_margin: float
    convexity_margin_k: float
    comparison_margin: float
    ok: bool


def barrier_verify(spec, t, k, beta, u_kahler, v, u_beta=None, tol=1e-8):
    """Check the barrier u_tilde = u/beta + (1 - 1/beta) v - C' log(beta)/beta.

    ``convexity_margin`` is min over the grid of
    sigma_k-ratio(u_tilde) - beta^{-n} sigma_k-ratio(u_kahler); the
    ``_k`` variant uses the sharper factor beta^{-k}.  When ``u_beta``
    (a solution of the beta sigma_k-equation) is given,
    ``comparison_margin`` is min(u_beta - u_tilde).
    """
    n = spec.n
    g = spec.g
    ghat = spec.ghat(t)
    a_u = ghat + hessian_values(spec.grid, u_kahler.values)
    a_v = ghat + hessian_values(spec.grid, v.values)
    if eigen_values(a_u, g)[..., 0].min() <= 0 or u_kahler.max() > tol:
        raise AdmissibilityFailure("u_kahler must satisfy ghat_t + i dd-bar u > 0 and u <= 0")
    lam_v = eigen_values(a_v, g)
    if normalized_sigmas(lam_v, k).min() <= 0 or v.max() > tol:
        raise AdmissibilityFailure("v must be Gamma_k admissible and nonpositive")

    c_t = cohomology_constants(spec, t, k)
    ratio_u = sigma_values(a_u, g, k) / comb(n, k)
    # e^{-C' log beta} <= beta^{-n} min ratio_u / c_t
    if beta > 1:
        c_prime = max(0.0, n - log(ratio_u.min() / c_t) / log(beta))
        shift = c_prime * log(beta) / beta
    else:
        c_prime = 0.0
        shift = 0.0
    u_tilde = u_kahler.values / beta + (1 - 1 / beta) * v.values - shift
    ratio_t = sigma_values(ghat + hessian_values(spec.grid, u_tilde), g, k) / comb(n, k)
    conv = float((ratio_t - beta ** (-n) * ratio_u).min())
    conv_k = float((ratio_t - beta ** (-k) * ratio_u).min())
    comp = float("nan") if u_beta is None else float((u_beta.values - u_tilde).min())
    scale = max(1.0, float(np.abs(ratio_u).max()))
    ok = conv >= -tol * scale and (u_beta is None or comp >= -tol)
    return BarrierReport(float(beta), c_prime, conv, conv_k, comp, ok)


def barrier_field(spec, t, k, beta, u_kahler, v):
    """The barrier function itself (same constants as :func:`barrier_verify`)."""
    rep = barrier_verify(spec, t, k, beta, u_kahler, v)
    shift = rep.C_prime * log(beta) / beta if beta > 1 else 0.0
    vals = u_kahler.values / beta + (1 - 1 / beta) * v.values - shift
    return PeriodicField(spec.grid, vals)
