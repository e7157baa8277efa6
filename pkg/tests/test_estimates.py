from math import log

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import qmc

from helpers import random_field, spec_for
from neflab.envelope import compute_envelope
from neflab.errors import BetaTooSmall, EmptyCandidates, NoValidS0
from neflab.estimates import (
    LevelStats,
    alpha0_estimate,
    calibrate_trudinger_C,
    comparison_constants,
    degiorgi_iterate,
    degiorgi_relation_margins,
    delta0,
    entropy,
    holder_chain_check,
    holder_q,
    orlicz_norm,
    phi_comparison_check,
    sublevel_stats,
    tail_function,
    trudinger_check,
    trudinger_lhs,
    young_check,
    young_constant,
)
from neflab.ma_solver import solve_auxiliary, solve_ma
from neflab.torus import Grid, PeriodicField, fourier_field


def _const(grid, c):
    return PeriodicField(grid, np.full(grid.shape, float(c)))


# -- sublevel statistics

def test_stats_trivial_cases():
    grid = Grid(1, 16)
    z = PeriodicField.zeros(grid)
    st0 = sublevel_stats(z, z, z, [0.0, 0.5, 1.0])
    assert np.all(st0.A_s == 0)
    assert np.all(st0.tail[1:] == 0)
    st1 = sublevel_stats(_const(grid, -2.0), z, z, [0.0, 1.0, 3.0], g=np.array([[1.5]]))
    assert st1.A_s[1] == pytest.approx(1.5)
    assert st1.tail[1] == pytest.approx(1.5)
    assert st1.omega_measure[1] == pytest.approx(1.5)
    assert st1.A_s[2] == 0 and st1.tail[2] == 0
    with pytest.raises(ValueError):
        sublevel_stats(z, z, z, [0.0, 0.0])


def _trig(modes, pts):
    """Evaluate the fourier_field trigonometric polynomial at arbitrary points."""
    out = np.zeros(len(pts))
    for m in modes:
        arg = 2 * np.pi * pts @ np.asarray(m["k"], dtype=float)
        out += m.get("cos", 0.0) * np.cos(arg) + m.get("sin", 0.0) * np.sin(arg)
    return out


def test_stats_against_quasi_monte_carlo():
    grid = Grid(1, 256)
    phi_m = [{"k": [1, 0], "cos": 0.3}, {"k": [1, 1], "sin": 0.2}, {"k": [0, 2], "cos": 0.1}]
    F_m = [{"k": [0, 1], "cos": 0.5}, {"k": [2, 1], "sin": 0.2}]
    phi = fourier_field(grid, phi_m)
    V = PeriodicField.zeros(grid)
    F = fourier_field(grid, F_m)
    levels = [0.0, 0.1, 0.25]
    stats = sublevel_stats(phi, V, F, levels)
    pts = qmc.Sobol(2, scramble=True, seed=7).random_base2(20)
    D = -_trig(phi_m, pts)
    w = np.exp(_trig(F_m, pts))
    for i, s in enumerate(levels):
        ind = D >= s
        A = np.mean(np.where(ind, D - s, 0.0) * w)
        tail = np.mean(ind * w)
        assert stats.A_s[i] == pytest.approx(A, rel=1e-3)
        assert stats.tail[i] == pytest.approx(tail, rel=1e-3)
        assert stats.omega_measure[i] == pytest.approx(np.mean(ind), rel=1e-3)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.5, 2.0))
def test_stats_monotone_and_below_entropy(seed, w):
    grid = Grid(1, 32)
    rng = np.random.default_rng(seed)
    phi = random_field(grid, rng)
    phi = PeriodicField(grid, phi.values - phi.max())
    F = random_field(grid, rng)
    V = PeriodicField.zeros(grid)
    s = np.linspace(0, 2, 20)
    stats = sublevel_stats(phi, V, F, s, weight_exponent=w)
    E = entropy(phi, V, F, weight_exponent=w)
    assert np.all(np.diff(stats.A_s) <= 1e-15)
    assert np.all(np.diff(stats.tail) <= 1e-15)
    assert np.all(stats.A_s >= 0) and np.all(stats.tail >= 0)
    assert np.all(stats.A_s <= E + 1e-12)
    assert stats.A_s[0] == pytest.approx(E)
    tf = tail_function(phi, V, F, weight_exponent=w)
    assert tf(s[3]) == pytest.approx(stats.tail[3])


def test_entropy_examples():
    grid = Grid(2, 8)
    z = PeriodicField.zeros(grid)
    assert entropy(z, z, z) == 0.0
    g = np.diag([2.0, 1.5])
    assert entropy(_const(grid, -1.0), z, z, g=g) == pytest.approx(3.0)


# -- Orlicz and Young

def test_orlicz_examples():
    grid = Grid(1, 16)
    z = PeriodicField.zeros(grid)
    assert orlicz_norm(z, 3.0) == pytest.approx(1.0)
    assert orlicz_norm(z, 3.0, g=np.array([[2.0]])) == pytest.approx(2.0)
    # constant F normalizes to zero
    spec = spec_for(grid, F=_const(grid, 5.0))
    assert orlicz_norm(spec.F_hat, 2.0) == pytest.approx(1.0, abs=1e-13)


def test_orlicz_two_level():
    grid = Grid(1, 16)
    x = grid.coords()[0]
    a = 0.5
    b = log(2 - np.exp(a))  # (e^a + e^b)/2 = 1
    F = PeriodicField(grid, np.broadcast_to(np.where(x < 0.5, a, b), grid.shape).copy())
    p = 3.0
    hand = 0.5 * (np.exp(a) * (1 + a) ** p + np.exp(b) * (1 + abs(b)) ** p)
    assert orlicz_norm(F, p) == pytest.approx(hand, rel=1e-14)
    assert orlicz_norm(F, p) >= 1.0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_orlicz_at_least_volume(seed):
    grid = Grid(1, 16)
    spec = spec_for(grid, F=random_field(grid, np.random.default_rng(seed), amp=1.0))
    assert orlicz_norm(spec.F_hat, 2.5) >= 1.0 - 1e-12


def test_young_examples():
    grid = Grid(1, 8)
    z = PeriodicField.zeros(grid)
    assert young_check(z, z, 3.0).ok
    rep = young_check(_const(grid, 1.0), z, 3.0)
    assert rep.ok and rep.C_p == pytest.approx((3 / np.e) ** 3)
    with pytest.raises(ValueError):
        young_check(_const(grid, -1.0), z, 3.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(1.5, 6.0))
def test_young_no_violation_on_random_fields(seed, p):
    grid = Grid(1, 32)
    rng = np.random.default_rng(seed)
    v = np.abs(random_field(grid, rng, amp=3.0).values) * rng.uniform(0, 10)
    F = random_field(grid, rng, amp=2.0)
    assert young_check(PeriodicField(grid, v), F, p).max_violation <= 1e-12


def test_young_constant_is_sup():
    v = np.linspace(0, 30, 300001)
    for p in (1.5, 3.0, 5.0):
        assert young_constant(p) == pytest.approx(np.max(v**p * np.exp(-v)), rel=1e-8)


# -- Trudinger

def test_trudinger_examples():
    grid = Grid(1, 16)
    z = PeriodicField.zeros(grid)
    phi = fourier_field(grid, [{"k": [1, 0], "cos": 0.3}])
    phi = PeriodicField(grid, phi.values - phi.max())
    sup_def = float((-phi.values).max())
    assert trudinger_lhs(phi, z, sup_def + 0.1, 0.0, 1.0, 1) == 0.0
    assert trudinger_lhs(z, z, 0.0, 0.0, 1.0, 1) == pytest.approx(1.0)
    stats = sublevel_stats(phi, z, z, [0.0, 0.1])
    lhs, ok = trudinger_check(stats, phi, z, z, 1.0, 0.1)
    assert ok is None and lhs > 0
    E = entropy(phi, z, z)
    C = calibrate_trudinger_C([lhs], E)
    assert C * np.exp(C * E) == pytest.approx(lhs, rel=1e-12)
    assert trudinger_check(stats, phi, z, z, 1.0, 0.1, C=C, E_t=E)[1]
    assert not trudinger_check(stats, phi, z, z, 1.0, 0.1, C=0.5 * C, E_t=E)[1]
    # off-grid level falls back to direct quadrature
    lhs2, _ = trudinger_check(stats, phi, z, z, 1.0, 0.05)
    st2 = sublevel_stats(phi, z, z, [0.05])
    assert lhs2 == pytest.approx(trudinger_lhs(phi, z, 0.05, st2.A_s[0], 1.0, 1))


def test_calibrate_degenerate():
    assert calibrate_trudinger_C([], 1.0) == 0.0
    assert calibrate_trudinger_C([2.0], 0.0) == 2.0


# -- comparison constants and Phi

def test_comparison_constants():
    eps, lam = comparison_constants(2.0, 1)
    assert eps == 2.0 and lam == 1.0
    eps, lam = comparison_constants(1.0, 2)
    assert eps**3 == pytest.approx(9 / 4, rel=1e-15)
    assert lam == pytest.approx(2 / 3, rel=1e-15)


def test_phi_check_trivial_and_beta_too_small():
    grid = Grid(1, 8)
    z = PeriodicField.zeros(grid)
    rep = phi_comparison_check(z, z, z, 0.1, 2.0, 1, V=z)
    assert rep.sup_Phi == pytest.approx(-2 * 2**0.5 - 0.1)
    assert rep.ok and rep.eps_beta == 0.0
    with pytest.raises(BetaTooSmall):
        phi_comparison_check(z, z, _const(grid, 1.0), 0.1, 2.0, 1, V=z)
    with pytest.raises(ValueError):
        phi_comparison_check(z, z, z, 0.1, 2.0, 1)


# -- Hoelder chain and De Giorgi

def test_exponents():
    assert delta0(3, 1) == pytest.approx(2 / 3)
    assert holder_q(3, 1) == pytest.approx(6 / 5)
    assert delta0(4, 2) == pytest.approx(1 / 4)


def test_holder_chain_empty_and_formula():
    stats = LevelStats(np.array([0.0, 1.0]), np.zeros(2), np.zeros(2), np.zeros(2),
                       moments=np.zeros(2), moment_exponent=6.0)
    B0, rep = holder_chain_check(stats, 1.2, 0.3, 2.0, 3.0, 1, 0.8)
    bracket = 1.2 + 0.8 + max(1.0, (3 / np.e) ** 3) * 0.8 * np.exp(0.8 * 0.3)
    assert B0 == pytest.approx((2**3 * 2.0**-3 * bracket) ** (1 / 3))
    assert rep.ok and min(rep.chain_margins) == 0.0
    bad = LevelStats(np.array([0.0]), np.array([1.0]), np.array([1.0]), np.array([1.0]),
                     moments=np.zeros(1), moment_exponent=2.0)
    with pytest.raises(ValueError):
        holder_chain_check(bad, 1.0, 0.0, 1.0, 3.0, 1, 1.0)


def _stats_from_tail(s, tail):
    tail = np.asarray(tail, dtype=float)
    return LevelStats(np.asarray(s, dtype=float), np.zeros_like(tail), tail, np.zeros_like(tail))


def test_degiorgi_examples():
    assert degiorgi_iterate(_stats_from_tail([0.0, 1.0], [1.0, 0.0]), 0.25, 1.0) == pytest.approx(1.0)
    assert degiorgi_iterate(_stats_from_tail([0.0, 0.5], [50.0, 0.0]), 0.25, 1.0) == pytest.approx(0.5)
    with pytest.raises(NoValidS0):
        degiorgi_iterate(_stats_from_tail([0.0, 1.0], [1.0, 0.5]), 10.0, 1.0)
    with pytest.raises(ValueError):
        degiorgi_iterate(_stats_from_tail([0.0], [1.0]), 0.0, 1.0)


def test_degiorgi_synthetic_cubic_tail():
    # tail(s) = (1-s)_+^3 satisfies r tail(s+r) <= B0 tail(s)^{4/3} with B0 = 27/256 exactly
    def tail(s):
        return max(0.0, 1.0 - s) ** 3

    d0, B0 = 1.0 / 3.0, 27.0 / 256.0
    s = np.linspace(0, 1.5, 301)
    r = np.linspace(0.01, 1.0, 100)
    # brute force: no smaller constant works
    ratio = max(rr * tail(a + rr) / tail(a) ** (1 + d0) for a in s[:-120] for rr in r)
    assert ratio <= B0 + 1e-12 and ratio > 0.99 * B0
    assert degiorgi_relation_margins(tail, s, r, B0, d0) >= -1e-15
    S = degiorgi_iterate(_stats_from_tail(s, [tail(x) for x in s]), B0, d0)
    assert 1.0 <= S <= 4.0


# -- alpha0

def test_alpha0_examples():
    grid = Grid(1, 16)
    spec = spec_for(grid)
    z = PeriodicField.zeros(grid)
    assert alpha0_estimate(spec, 0.5, [z], cap=50.0) == 50.0
    assert alpha0_estimate(spec, 0.5, [_const(grid, -1.0)]) == pytest.approx(log(2), abs=1e-12)
    # the worst candidate decides
    assert alpha0_estimate(spec, 0.5, [z, _const(grid, -2.0)]) == pytest.approx(log(2) / 2, abs=1e-12)
    with pytest.raises(EmptyCandidates):
        alpha0_estimate(spec, 0.5, [])


def _aux_corpus(N):
    grid = Grid(1, N)
    rho = fourier_field(grid, [{"k": [1, 0], "cos": 0.04}])
    F = fourier_field(grid, [{"k": [1, 1], "cos": 1.0}, {"k": [0, 1], "sin": 0.8}])
    spec = spec_for(grid, rho=rho, F=F)
    t = 0.3
    phi = solve_ma(spec, t).phi
    u = compute_envelope(spec, t, beta_schedule=(50, 100, 200)).u_max
    out = []
    for s in (0.0, 0.02, 0.05):
        out.append(solve_auxiliary(spec, t, s, 20, phi, u)[0].phi)
    return spec, out


def test_alpha0_stable_under_refinement():
    vals = []
    for N in (64, 128, 256):
        spec, corpus = _aux_corpus(N)
        vals.append(alpha0_estimate(spec, 0.3, corpus))
    ref = vals[-1]
    assert all(abs(v - ref) <= 0.2 * ref for v in vals)
