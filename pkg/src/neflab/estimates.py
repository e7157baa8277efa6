"""Sublevel-set statistics and the inequality chain leading to the uniform bound.

Notation: D = -phi + V is the deficit, Omega_s = {D >= s}, and the
weight is w = exp(weight_exponent * F_hat) (1 for Monge-Ampere, n/k for
sigma_k equations).
"""

from dataclasses import asdict, dataclass, field
from math import e

import numpy as np
from scipy.special import lambertw

from .errors import BetaTooSmall, EmptyCandidates, NoValidS0
from .torus import PeriodicField, as_hermitian

__all__ = [
    "LevelStats",
    "EstimateReport",
    "default_s_grid",
    "sublevel_stats",
    "tail_function",
    "entropy",
    "orlicz_norm",
    "young_constant",
    "young_check",
    "trudinger_lhs",
    "trudinger_check",
    "calibrate_trudinger_C",
    "comparison_constants",
    "phi_comparison_check",
    "delta0",
    "holder_q",
    "holder_chain_check",
    "degiorgi_iterate",
    "degiorgi_relation_margins",
    "alpha0_estimate",
]


def _vol(grid, g):
    return 1.0 if g is None else float(np.linalg.det(as_hermitian(g, grid.n)).real)


def _mean_integral(values, vol):
    return float(np.mean(values)) * vol


@dataclass
class LevelStats:
    s_values: np.ndarray
    A_s: np.ndarray
    tail: np.ndarray
    omega_measure: np.ndarray
    moments: np.ndarray = None
    moment_exponent: float = None

    def rows(self):
        return list(zip(self.s_values.tolist(), self.A_s.tolist(), self.tail.tolist(),
                        self.omega_measure.tolist()))


def default_s_grid(sup_deficit, count=64, factor=1.5):
    top = factor * max(float(sup_deficit), 0.0)
    if top <= 0:
        top = 1.0
    return np.linspace(0.0, top, count)


def _deficit_and_weight(phi, V, F_hat, weight_exponent):
    D = -phi.values + V.values
    w = np.exp(weight_exponent * F_hat.values)
    return D, w


def sublevel_stats(phi, V, F_hat, s_grid, weight_exponent=1.0, g=None, moment_exponent=None):
    """A_s, tail(s) and |Omega_s| on a grid of levels by direct quadrature."""
    s_grid = np.asarray(s_grid, dtype=float)
    if np.any(np.diff(s_grid) <= 0):
        raise ValueError("s_grid must be increasing")
    D, w = _deficit_and_weight(phi, V, F_hat, weight_exponent)
    vol = _vol(phi.grid, g)
    A, tail, meas, mom = [], [], [], []
    for s in s_grid:
        ind = D >= s
        excess = np.where(ind, D - s, 0.0)
        A.append(_mean_integral(excess * w, vol))
        tail.append(_mean_integral(ind * w, vol))
        meas.append(_mean_integral(ind, vol))
        if moment_exponent is not None:
            mom.append(_mean_integral(excess**moment_exponent * w, vol))
    return LevelStats(
        s_values=s_grid,
        A_s=np.array(A),
        tail=np.array(tail),
        omega_measure=np.array(meas),
        moments=np.array(mom) if moment_exponent is not None else None,
        moment_exponent=moment_exponent,
    )


def tail_function(phi, V, F_hat, weight_exponent=1.0, g=None):
    """Callable s -> int_{Omega_s} w omega^n evaluated exactly on the grid."""
    D, w = _deficit_and_weight(phi, V, F_hat, weight_exponent)
    vol = _vol(phi.grid, g)
    return lambda s: _mean_integral((D >= s) * w, vol)


def entropy(phi, V, F_hat, weight_exponent=1.0, g=None):
    D, w = _deficit_and_weight(phi, V, F_hat, weight_exponent)
    return _mean_integral(D * w, _vol(phi.grid, g))


def orlicz_norm(F_hat, p, g=None):
    """int e^F (1 + |F|)^p omega^n."""
    f = F_hat.values
    return _mean_integral(np.exp(f) * (1 + np.abs(f)) ** p, _vol(F_hat.grid, g))


def young_constant(p):
    """sup_{v >= 0} v^p e^{-v} = (p/e)^p."""
    return (p / e) ** p


@dataclass
class YoungReport:
    max_violation: float
    C_p: float
    ok: bool


def young_check(v_field, F_hat, p, tol=1e-12):
    """Pointwise v^p e^F <= e^F (1 + |F|)^p + C(p) e^{2v}."""
    v = v_field.values if isinstance(v_field, PeriodicField) else np.asarray(v_field, dtype=float)
    f = F_hat.values if isinstance(F_hat, PeriodicField) else np.asarray(F_hat, dtype=float)
    if np.any(v < 0):
        raise ValueError("v must be nonnegative")
    cp = young_constant(p)
    # violation relative to max(rhs, 1) so huge exponentials stay comparable
    lhs = v**p * np.exp(f)
    rhs = np.exp(f) * (1 + np.abs(f)) ** p + cp * np.exp(2 * v)
    scale = np.maximum(rhs, 1.0)
    viol = float(((lhs - rhs) / scale).max())
    return YoungReport(viol, cp, viol <= tol)


def trudinger_lhs(phi, V, s, A_s, alpha0, n, g=None):
    """int_{Omega_s} exp(alpha0 ((D - s) / A_s^{1/(n+1)})^{(n+1)/n}) omega^n."""
    D = -phi.values + V.values
    ind = D >= s
    vol = _vol(phi.grid, g)
    if not ind.any():
        return 0.0
    if A_s <= 0:
        return _mean_integral(ind, vol)
    z = np.where(ind, (D - s) / A_s ** (1.0 / (n + 1)), 0.0)
    return _mean_integral(np.where(ind, np.exp(alpha0 * z ** ((n + 1) / n)), 0.0), vol)


def calibrate_trudinger_C(lhs_values, E_t):
    """Smallest C >= 0 with lhs <= C exp(C E_t) for every entry of ``lhs_values``."""
    L = float(np.max(lhs_values)) if len(lhs_values) else 0.0
    if L <= 0:
        return 0.0
    if E_t <= 0:
        return L
    return float(lambertw(L * E_t).real / E_t)


def trudinger_check(stats, phi, V, F_hat, alpha0, s, C=None, E_t=None, g=None, weight_exponent=1.0):
    """Return (lhs, bound_ok) at level ``s``; bound_ok is None without a calibrated C."""
    n = phi.grid.n
    hit = np.nonzero(np.isclose(stats.s_values, s, rtol=0, atol=1e-15))[0]
    if hit.size:
        A = float(stats.A_s[hit[0]])
    else:
        D = -phi.values + V.values
        w = np.exp(weight_exponent * F_hat.values)
        A = _mean_integral(np.where(D >= s, D - s, 0.0) * w, _vol(phi.grid, g))
    lhs = trudinger_lhs(phi, V, s, A, alpha0, n, g)
    if C is None or E_t is None:
        return lhs, None
    return lhs, bool(lhs <= C * np.exp(C * E_t) * (1 + 1e-12))


def comparison_constants(A, n):
    """(epsilon, Lambda) with eps^{n+1} = A n^{-n} (n+1)^n, Lambda = n^{n+1} (n+1)^{-n-1} eps^{n+1}."""
    eps_pow = A * n ** (-n) * (n + 1) ** n
    lam = n ** (n + 1) * (n + 1) ** (-n - 1) * eps_pow
    return eps_pow ** (1.0 / (n + 1)), lam


@dataclass
class PhiReport:
    sup_Phi: float
    eps_beta: float
    epsilon: float
    Lambda: float
    ok: bool
    argmax_inside: bool


def phi_comparison_check(phi_t, u_beta, psi, s, A_skb, n, V=None, eps_beta=None, tol=1e-6, volume=1.0):
    """Evaluate Phi = -eps (-psi + u_beta + 1 + Lambda)^{n/(n+1)} - (phi_t - u_beta + s).

    ``eps_beta`` defaults to sup(u_beta - V)^+ when the envelope ``V`` is given.
    ``A_skb`` is divided by ``volume`` so the constants refer to the
    normalized measure omega^n / Vol.
    """
    gap = -psi.values + u_beta.values + 1.0
    if gap.min() <= 0:
        raise BetaTooSmall(f"psi >= u_beta + 1 somewhere (min gap {gap.min():.3e})")
    if eps_beta is None:
        if V is None:
            raise ValueError("give V or eps_beta")
        eps_beta = max(0.0, float((u_beta.values - V.values).max()))
    eps, lam = comparison_constants(A_skb / volume, n)
    Phi = -eps * (gap + lam) ** (n / (n + 1)) - (phi_t.values - u_beta.values + s)
    i = np.argmax(Phi)
    inside = bool((-phi_t.values + u_beta.values - s).flat[i] > 0)
    sup_phi = float(Phi.flat[i])
    return PhiReport(sup_phi, eps_beta, eps, lam, sup_phi <= eps_beta + tol, inside)


def delta0(p, n):
    return (p - n) / (p * n)


def holder_q(p, n):
    return p * (n + 1) / (p * (n + 1) - n)


@dataclass
class HolderReport:
    B0: float
    delta0: float
    q: float
    bracket: float
    chain_margins: list
    moment_margins: list
    ok: bool


def holder_chain_check(stats, orlicz, E_t, alpha0, p, n, C, tol=1e-12):
    """B0 and the two inequalities it controls.

    The bracket is orlicz + C + max(1, C(p)) C exp(C E_t): the Orlicz term
    plus the frozen Trudinger bound, weighted by the Young constant when
    that exceeds 1, so it dominates both ways of writing it.  Checks
    A_s <= B0 tail(s)^{1+delta0} for every level and, when moments of
    order (n+1)p/n are present in ``stats``, the moment bound
    int (D-s)^{(n+1)p/n} w <= 2^p alpha0^{-p} A_s^{p/n} * bracket.
    """
    d0 = delta0(p, n)
    q = holder_q(p, n)
    bracket = orlicz + C + max(1.0, young_constant(p)) * C * np.exp(C * E_t)
    pref = 2.0**p * alpha0 ** (-p)
    B0 = float((pref * bracket) ** (1.0 / p))
    chain = (B0 * stats.tail ** (1 + d0) - stats.A_s).tolist()
    moments = []
    if stats.moments is not None:
        if abs(stats.moment_exponent - (n + 1) * p / n) > 1e-12:
            raise ValueError("stats moments must have exponent (n+1)p/n")
        rhs = pref * stats.A_s ** (p / n) * bracket
        moments = (rhs - stats.moments).tolist()
    scale_a = max(1.0, float(np.max(stats.A_s)))
    ok = min(chain) >= -tol * scale_a and (not moments or min(moments) >= -tol * max(1.0, max(stats.moments)))
    return B0, HolderReport(B0, d0, q, float(bracket), chain, moments, bool(ok))


def degiorgi_iterate(stats, B0, delta0):
    """S_inf = s0 + 2 B0 tail(s0)^delta0 / (1 - 2^{-delta0}).

    s0 is the smallest tabulated level with 2 B0 tail(s0)^delta0 <= 1.
    """
    if B0 <= 0 or delta0 <= 0:
        raise ValueError("B0 and delta0 must be positive")
    r0 = 2.0 * B0 * np.asarray(stats.tail) ** delta0
    ok = np.nonzero(r0 <= 1.0)[0]
    if ok.size == 0:
        raise NoValidS0("2 B0 tail(s)^delta0 exceeds 1 on the whole s grid")
    i = ok[0]
    return float(stats.s_values[i] + r0[i] / (1.0 - 2.0 ** (-delta0)))


def degiorgi_relation_margins(tail_fn, s_values, r_values, B0, delta0):
    """min over (s, r) of B0 tail(s)^{1+delta0} - r tail(s + r)."""
    worst = np.inf
    for s in s_values:
        rhs = B0 * tail_fn(s) ** (1 + delta0)
        for r in r_values:
            worst = min(worst, rhs - r * tail_fn(s + r))
    return float(worst)


def alpha0_estimate(spec, t, candidate_fields, cap=100.0, threshold=2.0, iters=60):
    """Largest alpha (by bisection on [0, cap]) with int exp(-alpha psi) <= threshold * Vol for all candidates."""
    if not candidate_fields:
        raise EmptyCandidates("no candidate potentials supplied")
    negs = [-c.values for c in candidate_fields]

    def worst(alpha):
        return max(float(np.mean(np.exp(alpha * v))) for v in negs)

    if worst(cap) <= threshold:
        return float(cap)
    lo, hi = 0.0, float(cap)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if worst(mid) <= threshold:
            lo = mid
        else:
            hi = mid
    return lo


@dataclass
class EstimateReport:
    E_t: float
    orlicz_p: float
    alpha0: float
    B0: float
    delta0: float
    S_infinity: float
    sup_deficit: float
    trudinger_values: list = field(default_factory=list)
    fitted_C_key: float = float("nan")
    C_frozen: float = float("nan")
    q: float = float("nan")

    def to_dict(self):
        return asdict(self)
