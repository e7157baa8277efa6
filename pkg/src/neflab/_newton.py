"""Damped Newton iteration for sigma_k-type equations on the torus.

Two equation forms are supported, both with A = base + i dd-bar u:

* ``log``:  log(sigma_k(A)/C(n,k)) = log_rhs.  Invariant under u -> u + c,
  so each linear step is solved on mean-zero updates with an extra
  scalar unknown that absorbs the constant-mode mismatch.
* ``beta``: sigma_k(A)/C(n,k) = scale * exp(beta u).

Linear steps use GMRES preconditioned by the inverse of the
constant-coefficient operator obtained by averaging the coefficients.
"""

from dataclasses import dataclass, field
from math import comb

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .errors import ConeLoss, NonConvergence, PositivityLoss
from .torus import eigen_values, hessian_values, newton_tensor, normalized_sigmas, sigma_values, trace_against


@dataclass
class _State:
    u: np.ndarray
    a: np.ndarray
    sig: np.ndarray
    margin: float
    newton_res: np.ndarray
    report_res: np.ndarray
    merit: float


@dataclass
class NewtonInfo:
    iterations: int
    history: list = field(default_factory=list)
    margin: float = 0.0
    report_sup: float = np.inf
    lin_iterations: int = 0


class SigmaEquation:
    def __init__(self, grid, g, base, k, *, log_rhs=None, beta=None, scale=1.0):
        if (log_rhs is None) == (beta is None):
            raise ValueError("give exactly one of log_rhs or beta")
        self.grid = grid
        self.g = g
        self.base = base
        self.k = k
        self.n = grid.n
        self.binom = comb(self.n, k)
        self.log_rhs = log_rhs
        self.beta = beta
        self.scale = scale

    @property
    def additive(self):
        return self.beta is None

    def cone_margin(self, a):
        lam = eigen_values(a, self.g)
        if self.k == self.n:
            return float(lam[..., 0].min())
        return float(normalized_sigmas(lam, self.k).min())

    def evaluate(self, u):
        a = self.base + hessian_values(self.grid, u)
        sig = sigma_values(a, self.g, self.k) / self.binom
        margin = self.cone_margin(a)
        if self.additive:
            rhs = np.exp(self.log_rhs)
            if margin > 0:
                newton_res = np.log(sig) - self.log_rhs
            else:
                newton_res = np.full(sig.shape, np.inf)
        else:
            rhs = self.scale * np.exp(np.minimum(self.beta * u, 700.0))
            newton_res = sig - rhs
        report_res = sig - rhs
        merit = float(np.sqrt(np.mean(newton_res**2)))
        return _State(u, a, sig, margin, newton_res, report_res, merit)

    def coefficients(self, state):
        """Pointwise (matrix B, scalar c) with J v = tr(B Hv) + c v."""
        t = newton_tensor(state.a, self.g, self.k)
        if self.additive:
            b = t / (self.binom * state.sig)[..., None, None]
            c = None
        else:
            b = t / self.binom
            c = -self.beta * self.scale * np.exp(np.minimum(self.beta * state.u, 700.0))
        return b, c


def _symbol(grid, bbar):
    sym = grid.symbols
    n = grid.n
    out = 0
    for j in range(n):
        for l in range(n):
            out = out + bbar[j, l] * sym[l][j]
    return np.real(out)


def _linear_solve(eq, state, rtol):
    grid = eq.grid
    shape = grid.shape
    b, c = eq.coefficients(state)
    bbar = b.reshape(-1, eq.n, eq.n).mean(axis=0)
    bbar = 0.5 * (bbar + bbar.conj().T)
    psym = _symbol(grid, bbar)
    if c is not None:
        psym = psym + float(c.mean())
    zero = (0,) * grid.dim
    if eq.additive or abs(psym[zero]) < 1e-300:
        psym[zero] = 1.0
    with np.errstate(divide="ignore"):
        pinv = np.where(psym == 0, 0.0, 1.0 / psym)

    def matvec(x):
        x = x.reshape(shape)
        y = trace_against(b, hessian_values(grid, x))
        if c is not None:
            y = y + c * x
        if eq.additive:
            y = y + x.mean()
        return y.ravel()

    def precond(r):
        r = r.reshape(shape)
        y = grid.ifft(grid.fft(r) * pinv).real
        return y.ravel()

    size = grid.size
    op = LinearOperator((size, size), matvec=matvec, dtype=float)
    pre = LinearOperator((size, size), matvec=precond, dtype=float)
    count = [0]

    def cb(_):
        count[0] += 1

    rhs = -state.newton_res.ravel()
    x, _ = gmres(op, rhs, M=pre, rtol=rtol, atol=0.0, restart=60, maxiter=8,
                 callback=cb, callback_type="pr_norm")
    x = x.reshape(shape)
    if eq.additive:
        x = x - x.mean()
    return x, count[0]


def damped_newton(eq, u0, tol, max_iter=60, min_step=2.0**-30):
    """Solve ``eq`` from the admissible start ``u0``.

    Each step is halved until the iterate stays inside the cone and the
    residual merit decreases.  Returns (u, NewtonInfo).
    """
    lossy = PositivityLoss if eq.k == eq.n else ConeLoss
    state = eq.evaluate(np.asarray(u0, dtype=float))
    if state.margin <= 0:
        raise lossy(f"initial guess is outside the cone (margin {state.margin:.3e})",
                    last_residual=np.inf, iterations=0)
    info = NewtonInfo(iterations=0)
    info.history.append(float(np.abs(state.report_res).max()))
    for it in range(max_iter):
        report_sup = float(np.abs(state.report_res).max())
        if report_sup <= tol:
            break
        rtol = float(min(1e-2, max(1e-11, 0.1 * np.abs(state.newton_res).max())))
        step, nlin = _linear_solve(eq, state, rtol)
        info.lin_iterations += nlin
        lam = 1.0
        while True:
            trial = eq.evaluate(state.u + lam * step)
            if trial.margin > 0 and trial.merit < state.merit:
                break
            lam *= 0.5
            if lam < min_step:
                err = lossy if trial.margin <= 0 else NonConvergence
                raise err(f"line search failed after {it} Newton steps (residual {report_sup:.3e})",
                          last_residual=report_sup, iterations=it,
                          advice="warm-start from a nearby solution or reduce the continuation step")
        state = trial
        info.iterations = it + 1
        info.history.append(float(np.abs(state.report_res).max()))
    info.report_sup = float(np.abs(state.report_res).max())
    info.margin = state.margin
    if info.report_sup > tol:
        raise NonConvergence(f"no convergence in {max_iter} Newton steps (residual {info.report_sup:.3e})",
                             last_residual=info.report_sup, iterations=info.iterations,
                             advice="warm-start from a nearby solution or reduce the continuation step")
    return state.u, info
