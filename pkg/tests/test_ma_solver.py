import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import manufactured, spec_for
from neflab.envelope import compute_envelope
from neflab.errors import NonConvergence, PositivityLoss
from neflab.ma_solver import (
    mass_balance,
    newton_tail_ok,
    solve_auxiliary,
    solve_beta_ma,
    solve_ma,
    tau,
)
from neflab.torus import Grid, PeriodicField, cohomology_constants, fourier_field, sigma_values


def test_constant_case_is_zero():
    for n, N in [(1, 16), (2, 8)]:
        spec = spec_for(Grid(n, N))
        res = solve_ma(spec, 0.5)
        assert np.abs(res.phi.values).max() < 1e-12
        assert res.c_t == pytest.approx(0.5**n)
        assert res.positivity_margin == pytest.approx(0.5)


def test_manufactured_n1():
    grid = Grid(1, 64)
    x, y = grid.coords()
    raw = 0.03 * np.cos(2 * np.pi * x) + 0.02 * np.sin(2 * np.pi * (x + y)) + 0 * y
    star = PeriodicField(grid, raw - raw.max())
    spec = manufactured(grid, star, t=0.7, chi0=0.3)
    res = solve_ma(spec, 0.7)
    assert res.phi.max() == 0.0
    assert np.abs(res.phi.values - star.values).max() < 1e-8
    assert res.residual_sup <= 1e-9
    assert newton_tail_ok(res.history)


def test_n2_rank_one_class_with_bump():
    # N=32 resolves the bump; at N=16 its Nyquist content breaks the discrete balance at 1e-8
    grid = Grid(2, 32)
    x1 = grid.coords()[0]
    rho = fourier_field(grid, [{"k": [1, 0, 0, 0], "cos": 0.05}])
    d2 = sum(np.sin(np.pi * (c - 0.5)) ** 2 for c in grid.coords())
    F = PeriodicField(grid, np.broadcast_to(np.exp(-d2 / 0.1), grid.shape).copy())
    spec = spec_for(grid, chi0=np.diag([1.0, 0.0]), rho=rho, F=F)
    res = solve_ma(spec, 0.5)
    assert res.positivity_margin > 0
    assert res.residual_sup <= 1e-7
    rhs = res.c_t * np.exp(spec.F_hat.values)
    assert abs(mass_balance(spec, 0.5, res.phi, rhs)) <= 1e-10 * spec.volume
    assert x1.shape[0] == 32


def test_solve_ma_errors():
    spec = spec_for(Grid(1, 16))
    with pytest.raises(ValueError):
        solve_ma(spec, 0.0)
    with pytest.raises(ValueError):
        solve_ma(spec, 1.5)
    bad = -10 * fourier_field(spec.grid, [{"k": [1, 0], "cos": 1.0}])
    with pytest.raises(PositivityLoss):
        solve_ma(spec, 0.1, u0=bad)


def test_nonconvergence_carries_residual():
    grid = Grid(1, 32)
    F = fourier_field(grid, [{"k": [1, 0], "cos": 1.0}])
    spec = spec_for(grid, F=F)
    with pytest.raises(NonConvergence) as info:
        solve_ma(spec, 0.5, max_iter=1)
    assert info.value.last_residual > 0
    assert info.value.iterations == 1


def test_beta_constant_solutions():
    spec = spec_for(Grid(1, 16))
    assert np.abs(solve_beta_ma(spec, 1.0, 50).phi.values).max() < 1e-12
    res = solve_beta_ma(spec, 0.5, 40)
    assert np.allclose(res.phi.values, np.log(0.5) / 40, atol=1e-12)
    with pytest.raises(ValueError):
        solve_beta_ma(spec, 0.5, 0.5)


def test_beta_max_principle():
    grid = Grid(1, 64)
    rho = fourier_field(grid, [{"k": [1, 0], "cos": 0.04}, {"k": [0, 1], "sin": 0.02}])
    spec = spec_for(grid, rho=rho)
    t, beta = 0.3, 100.0
    res = solve_beta_ma(spec, t, beta)
    # at the max of u, the Hessian is nonpositive, so e^{beta u} <= det(ghat_t) there
    i = np.argmax(res.phi.values)
    ratio = sigma_values(spec.ghat(t), spec.g, 1)
    assert beta * res.phi.values.flat[i] <= np.log(ratio.flat[i]) + 1e-9
    assert beta * res.phi.max() <= np.log(ratio.max()) + 1e-9


def test_tau_properties():
    x = np.linspace(-2, 2, 41)
    assert np.all(tau(x, 10) > 0)
    assert np.all(tau(x, 20) <= tau(x, 10))
    assert np.allclose(tau(x, 1e6), np.maximum(x, 0), atol=1e-6)
    # closed form at x = -1, k = 10
    assert tau(-1.0, 10) == pytest.approx((-1 + np.sqrt(1.01)) / 2)


@settings(max_examples=25, deadline=None)
@given(st.floats(-5, 5), st.floats(1, 100), st.floats(1, 100))
def test_tau_monotone_in_k(x, k1, k2):
    lo, hi = sorted([k1, k2])
    assert tau(x, hi) <= tau(x, lo) + 1e-15


def test_auxiliary_reduces_to_ma():
    grid = Grid(1, 32)
    F = fourier_field(grid, [{"k": [1, 1], "cos": 0.4}])
    spec = spec_for(grid, chi0=0.2, F=F)
    zero = PeriodicField.zeros(grid)
    res, A = solve_auxiliary(spec, 0.5, 0.0, 10, zero, zero)
    ref = solve_ma(spec, 0.5)
    assert np.abs(res.phi.values - ref.phi.values).max() < 1e-8
    assert A == pytest.approx(tau(0.0, 10) * spec.volume)


def test_auxiliary_A_closed_form():
    grid = Grid(1, 16)
    F = fourier_field(grid, [{"k": [0, 1], "sin": 0.5}])
    spec = spec_for(grid, F=F, g=np.array([[2.0]]))
    zero = PeriodicField.zeros(grid)
    # -phi + u - s = -1 everywhere
    _, A = solve_auxiliary(spec, 0.5, 1.0, 10, zero, zero)
    assert A == pytest.approx(2.0 * (-1 + np.sqrt(1.01)) / 2, rel=1e-12)
    with pytest.raises(ValueError):
        solve_auxiliary(spec, 0.5, -1.0, 10, zero, zero)
    with pytest.raises(ValueError):
        solve_auxiliary(spec, 0.5, 1.0, 0.5, zero, zero)


def test_auxiliary_pipeline_quadrature_and_psi_below_envelope():
    grid = Grid(1, 128)
    rho = fourier_field(grid, [{"k": [1, 0], "cos": 0.04}])
    F = fourier_field(grid, [{"k": [1, 1], "cos": 1.0}, {"k": [0, 1], "sin": 0.8}])
    spec = spec_for(grid, rho=rho, F=F)
    t = 0.3
    phi = solve_ma(spec, t).phi
    env = compute_envelope(spec, t, beta_schedule=(50, 100, 200, 400))
    u = env.solutions[-1].phi
    s = 0.05
    res, A = solve_auxiliary(spec, t, s, 20, phi, u)
    # independent quadrature, tau in its rationalized form eps^2 / (2 (sqrt(x^2 + eps^2) - x))
    x = -phi.values + u.values - s
    k = 20.0
    tk = k**-2 / (2 * (np.sqrt(x * x + k**-2) - x))
    assert A == pytest.approx(np.mean(tk * np.exp(spec.F_hat.values)), rel=1e-10)
    assert res.positivity_margin > 0
    rhs = res.c_t * spec.volume * tau(x, k) / A * np.exp(spec.F_hat.values)
    assert abs(mass_balance(spec, t, res.phi, rhs)) <= 1e-10
    # psi is a sup-normalized psh function, so it sits below the envelope
    assert (res.phi.values - env.V.values).max() <= env.error_bar + 1e-9


def test_beta_solutions_below_envelope_plus_c_over_beta():
    grid = Grid(1, 64)
    rho = fourier_field(grid, [{"k": [1, 0], "cos": 0.04}])
    spec = spec_for(grid, rho=rho)
    env = compute_envelope(spec, 0.3, beta_schedule=(50, 100, 200))
    for beta, sol in zip(env.beta_schedule, env.solutions):
        assert (sol.phi.values - env.C_low / beta - env.V.values).max() <= 1e-9
