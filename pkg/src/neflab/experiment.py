"""Batch pipelines: config parsing, per-t runs, calibration, invariant checks and reports.

A run for one value of t consists of

1. the t-equation (Monge-Ampere for k = n, sigma_k otherwise),
2. the envelope via the beta-scheme,
3. auxiliary solves psi for a few levels s (candidates for alpha0 and
   inputs of the comparison function Phi),
4. sublevel statistics and the whole inequality chain.

alpha0 and the Trudinger constant C are either read from the config
(frozen) or estimated once from all runs of the config and then used for
every assertion.  Reports are JSON documents with schema
``nef-lab-report/1``; everything except the ``timings`` block is a
deterministic function of the config.
"""

import csv
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from copy import deepcopy
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import estimates as est
from .envelope import compute_envelope, sandwich_from_parts
from .errors import ConfigError, FieldFormatError, MissingArtifacts, NeflabError, NonConvergence
from .fieldio import read_field, write_field
from .hessian_solver import solve_sigma_k
from .ma_solver import default_tolerance, newton_tail_ok, solve_auxiliary, solve_ma
from .torus import (
    Grid,
    NefClassSpec,
    PeriodicField,
    ProblemSpec,
    cohomology_constants,
    eigen_values,
    fourier_field,
)

SCHEMA = "nef-lab-report/1"

__all__ = [
    "SCHEMA",
    "ExperimentConfig",
    "RunReport",
    "build_problem",
    "build_field",
    "run_solve",
    "run_envelope",
    "run_verify",
    "run_sweep",
    "ct_table",
    "fit_exponent",
    "strip_timings",
]


# ---------------------------------------------------------------- config


def _matrix(obj, n, name):
    if isinstance(obj, dict):
        m = np.asarray(obj.get("re", 0.0), dtype=float) + 1j * np.asarray(obj.get("im", 0.0), dtype=float)
    else:
        m = np.asarray(obj, dtype=complex)
    if m.ndim == 0:
        m = m * np.eye(n)
    if m.shape != (n, n):
        raise ConfigError(f"{name} must be a {n}x{n} matrix, got shape {m.shape}")
    if not np.allclose(m, m.conj().T, atol=1e-12):
        raise ConfigError(f"{name} must be Hermitian")
    return m


def _periodic_distance(grid, center):
    xs = grid.coords()
    if len(center) != grid.dim:
        raise ConfigError(f"center needs {grid.dim} coordinates")
    sq = sum(np.sin(np.pi * (x - c)) ** 2 for x, c in zip(xs, center)) / np.pi**2
    return np.sqrt(np.broadcast_to(sq, grid.shape))


def build_field(grid, desc, seed=0):
    """Real field from a config description.

    Families: ``zero``, ``fourier`` (explicit modes), ``random`` (seeded
    modes), ``bump`` (periodic Gaussian-like bump), and two families that
    describe e^F directly and return its log: ``density`` (base plus
    modes, must stay positive) and ``two_level`` (smoothed indicator of a
    ball with a sharpness parameter).
    """
    if desc is None:
        return PeriodicField.zeros(grid)
    fam = desc.get("family", "fourier")
    if fam == "zero":
        return PeriodicField.zeros(grid)
    if fam == "fourier":
        return fourier_field(grid, desc.get("modes", []))
    if fam == "random":
        rng = np.random.default_rng(desc.get("seed", seed))
        count = int(desc.get("count", 4))
        kmax = int(desc.get("max_k", 2))
        amp = float(desc.get("amplitude", 0.1))
        modes = []
        for _ in range(count):
            kvec = rng.integers(-kmax, kmax + 1, size=grid.dim).tolist()
            a, b = rng.uniform(-amp, amp, size=2)
            modes.append({"k": kvec, "cos": float(a), "sin": float(b)})
        return fourier_field(grid, modes)
    if fam == "bump":
        width = float(desc.get("width", 0.1))
        d = _periodic_distance(grid, desc.get("center", [0.5] * grid.dim))
        return PeriodicField(grid, float(desc.get("height", 1.0)) * np.exp(-0.5 * (d / width) ** 2))
    if fam == "density":
        dens = float(desc.get("base", 1.0)) + fourier_field(grid, desc.get("modes", [])).values
        if dens.min() <= 0:
            raise ConfigError("density family must stay positive on the grid")
        return PeriodicField(grid, np.log(dens))
    if fam == "two_level":
        low = float(desc.get("low", 0.5))
        high = float(desc.get("high", 2.0))
        if low <= 0 or high <= 0:
            raise ConfigError("two_level levels must be positive")
        d = _periodic_distance(grid, desc.get("center", [0.5] * grid.dim))
        sharp = float(desc.get("sharpness", 20.0))
        ind = expit(sharp * (float(desc.get("radius", 0.25)) - d))
        return PeriodicField(grid, np.log(low + (high - low) * ind))
    raise ConfigError(f"unknown field family {fam!r}")


def build_problem(problem, seed=0, grid_override=None):
    """ProblemSpec from the ``problem`` block of a config."""
    try:
        n = int(problem["n"])
        N = int(grid_override or problem["N"])
    except KeyError as exc:
        raise ConfigError(f"problem block is missing {exc}") from None
    if n not in (1, 2):
        raise ConfigError(f"n must be 1 or 2, got {n}")
    try:
        grid = Grid(n, N)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    g = _matrix(problem.get("g", 1.0), n, "g")
    chi0 = _matrix(problem.get("chi0", 0.0), n, "chi0")
    p = float(problem.get("p", n + 2))
    if not p > n:
        raise ConfigError(f"p > n violated: p={p}, n={n}")
    if np.linalg.eigvalsh(g).min() <= 0:
        raise ConfigError("g must be positive definite")
    if np.linalg.eigvalsh(chi0).min() < -1e-12:
        raise ConfigError("chi0 must be positive semidefinite")
    rho = build_field(grid, problem.get("rho"), seed)
    F = build_field(grid, problem.get("F"), seed)
    return ProblemSpec(grid, g, NefClassSpec(chi0, rho), F, p)


_DEFAULTS = {
    "name": "experiment",
    "t_list": [1.0, 0.3, 0.1, 0.03],
    "asymptotic_t_list": None,
    "beta_schedule": [50.0, 100.0, 200.0, 400.0, 800.0],
    "k": None,
    "s_grid": {"count": 64, "factor": 1.5},
    "aux": {"enabled": True, "s_fractions": [0.25, 0.5], "s_values": [], "k_smooth": 20.0, "beta": None},
    "tolerances": {"newton": None, "margin": 1e-6, "young": 1e-12, "chain": 1e-12},
    "degiorgi_r": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
    "alpha0": None,
    "trudinger_C": None,
    "alpha0_cap": 100.0,
    "output_dir": None,
    "seed": 0,
    "workers": 1,
    "sweep_pipeline": True,
}


@dataclass
class ExperimentConfig:
    problem: dict
    name: str = "experiment"
    t_list: list = field(default_factory=lambda: list(_DEFAULTS["t_list"]))
    asymptotic_t_list: list = None
    beta_schedule: list = field(default_factory=lambda: list(_DEFAULTS["beta_schedule"]))
    k: int = None
    s_grid: dict = field(default_factory=lambda: dict(_DEFAULTS["s_grid"]))
    aux: dict = field(default_factory=lambda: dict(_DEFAULTS["aux"]))
    tolerances: dict = field(default_factory=lambda: dict(_DEFAULTS["tolerances"]))
    degiorgi_r: list = field(default_factory=lambda: list(_DEFAULTS["degiorgi_r"]))
    alpha0: float = None
    trudinger_C: float = None
    alpha0_cap: float = 100.0
    output_dir: str = None
    seed: int = 0
    workers: int = 1
    sweep_pipeline: bool = True
    grid_override: int = None

    def __post_init__(self):
        self.aux = {**_DEFAULTS["aux"], **(self.aux or {})}
        self.tolerances = {**_DEFAULTS["tolerances"], **(self.tolerances or {})}
        self.s_grid = {**_DEFAULTS["s_grid"], **(self.s_grid or {})}
        if not isinstance(self.problem, dict):
            raise ConfigError("problem must be an object")
        n = int(self.problem.get("n", 0))
        p = float(self.problem.get("p", n + 2))
        if not p > n:
            raise ConfigError(f"p > n violated: p={p}, n={n}")
        self.k = n if self.k is None else int(self.k)
        if not 1 <= self.k <= n:
            raise ConfigError(f"k in 1..n violated: k={self.k}, n={n}")
        ts = [float(t) for t in self.t_list]
        if not ts or any(not 0 < t <= 1 for t in ts):
            raise ConfigError("t_list must be a nonempty subset of (0, 1]")
        if any(b >= a for a, b in zip(ts, ts[1:])):
            raise ConfigError("t_list must be strictly decreasing")
        self.t_list = ts
        if self.asymptotic_t_list is not None:
            self.asymptotic_t_list = [float(t) for t in self.asymptotic_t_list]
        self.beta_schedule = [float(b) for b in self.beta_schedule]
        if len(self.beta_schedule) < 3:
            raise ConfigError("beta_schedule needs at least 3 entries")
        if any(b2 <= b1 for b1, b2 in zip(self.beta_schedule, self.beta_schedule[1:])):
            raise ConfigError("beta_schedule must be strictly increasing")
        ab = self.aux.get("beta")
        if ab is not None and float(ab) not in self.beta_schedule:
            raise ConfigError("aux.beta must be one of the beta_schedule entries")

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        if "problem" not in data:
            raise ConfigError("config has no problem block")
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**deepcopy(data))

    @classmethod
    def from_json(cls, path):
        try:
            with open(path) as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls.from_dict(data)

    def to_dict(self):
        return {name: deepcopy(getattr(self, name)) for name in self.__dataclass_fields__}

    def with_overrides(self, grid=None, tol=None):
        data = self.to_dict()
        if grid is not None:
            data["grid_override"] = int(grid)
        if tol is not None:
            data["tolerances"] = {**data["tolerances"], "newton": float(tol)}
        return ExperimentConfig.from_dict(data)

    def spec(self):
        return build_problem(self.problem, self.seed, self.grid_override)

    @property
    def newton_tol(self):
        return self.tolerances.get("newton")

    @property
    def aux_beta(self):
        b = self.aux.get("beta")
        return float(b) if b is not None else self.beta_schedule[-2]


# ---------------------------------------------------------------- report


def _clean(obj):
    """JSON-ready copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if np.isfinite(x) else str(x)
    return obj


@dataclass
class RunReport:
    kind: str
    config: dict
    runs: list = field(default_factory=list)
    calibration: dict = field(default_factory=dict)
    suites: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    error: dict = None

    @property
    def ok(self):
        return self.error is None and all(s.get("ok", True) for s in self.suites.values())

    def to_dict(self):
        return _clean({
            "schema": SCHEMA,
            "kind": self.kind,
            "ok": self.ok,
            "config": self.config,
            "runs": self.runs,
            "calibration": self.calibration,
            "suites": self.suites,
            "sweep": self.sweep,
            "artifacts": self.artifacts,
            "error": self.error,
            "timings": self.timings,
        })

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def failures(self):
        return {k: v for k, v in self.suites.items() if not v.get("ok", True)}


def strip_timings(report_dict):
    d = deepcopy(report_dict)
    d.pop("timings", None)
    return d


# ---------------------------------------------------------------- one run


@dataclass
class _Case:
    t: float
    phi: PeriodicField
    V: PeriodicField
    betas: list
    u_betas: list
    C_low: float
    offsets: list
    error_bar: float
    aux: list
    solve: dict
    envelope: dict


def _solve_case(cfg, t):
    """Solves for one t (no estimates); returns a _Case and timings."""
    spec = cfg.spec()
    k = cfg.k
    tol = cfg.newton_tol
    clock = {}
    t0 = time.perf_counter()
    if k == spec.n:
        sol = solve_ma(spec, t, tol=tol)
    else:
        sol = solve_sigma_k(spec, t, k, tol=tol)
    clock["solve"] = time.perf_counter() - t0
    solve_summary = sol.summary()
    solve_summary["newton_tail_ok"] = newton_tail_ok(sol.history)
    solve_summary["tolerance"] = default_tolerance(spec.n) if tol is None else tol

    t0 = time.perf_counter()
    env = compute_envelope(spec, t, k, cfg.beta_schedule, tol=tol)
    clock["envelope"] = time.perf_counter() - t0

    aux = []
    if cfg.aux.get("enabled", True):
        t0 = time.perf_counter()
        sup_def = max(0.0, float((-sol.phi.values + env.V.values).max()))
        levels = [f * sup_def for f in cfg.aux.get("s_fractions", [])] + list(cfg.aux.get("s_values", []))
        levels = list(dict.fromkeys(float(s) for s in levels))
        bi = env.beta_schedule.index(cfg.aux_beta)
        u_b = env.solutions[bi].phi
        for s in levels:
            res, a_skb = solve_auxiliary(spec, t, float(s), float(cfg.aux["k_smooth"]), sol.phi, u_b,
                                         tol=tol, weight_exponent=spec.n / k)
            aux.append({"s": float(s), "beta": cfg.aux_beta, "beta_index": bi, "A_skb": a_skb,
                        "psi": res.phi, "residual_sup": res.residual_sup,
                        "iterations": res.iterations})
        clock["aux"] = time.perf_counter() - t0

    case = _Case(t=t, phi=sol.phi, V=env.V, betas=list(env.beta_schedule),
                 u_betas=[s.phi for s in env.solutions], C_low=env.C_low,
                 offsets=list(env.upper_offsets), error_bar=env.error_bar, aux=aux,
                 solve=solve_summary, envelope=env.summary())
    case.envelope["fitted_C"] = env.fitted_C
    case.envelope["error_bar"] = env.error_bar
    case.envelope["upper_offsets"] = list(env.upper_offsets)
    return case, clock


def _solve_case_remote(args):
    cfg_dict, t = args
    return _solve_case(ExperimentConfig.from_dict(cfg_dict), t)


def _solve_all(cfg):
    if cfg.workers and cfg.workers > 1 and len(cfg.t_list) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(_solve_case_remote, [(cfg.to_dict(), t) for t in cfg.t_list]))
    return [_solve_case(cfg, t) for t in cfg.t_list]


# ---------------------------------------------------------------- estimates


def _check(ok, margin, where=None, **extra):
    out = {"ok": bool(ok), "margin": float(margin) + 0.0}  # no -0.0 in reports
    if where is not None:
        out["where"] = where
    out.update(extra)
    return out


def _worst_index(values):
    i = int(np.argmin(values))
    return i, float(values[i])


def _levels(case, spec, cfg):
    D = -case.phi.values + case.V.values
    sup_def = float(D.max())
    grid_s = est.default_s_grid(sup_def, int(cfg.s_grid["count"]), float(cfg.s_grid["factor"]))
    w = spec.n / cfg.k
    mexp = (spec.n + 1) * spec.p / spec.n
    stats = est.sublevel_stats(case.phi, case.V, spec.F_hat, grid_s, weight_exponent=w,
                               g=spec.g, moment_exponent=mexp)
    E = est.entropy(case.phi, case.V, spec.F_hat, weight_exponent=w, g=spec.g)
    return D, sup_def, stats, E


def _trudinger_values(case, spec, stats, alpha0):
    return [est.trudinger_lhs(case.phi, case.V, s, A, alpha0, spec.n, spec.g)
            for s, A in zip(stats.s_values, stats.A_s)]


def _calibrate(cases, spec, cfg):
    """alpha0 and C: frozen values from the config or estimates over all runs."""
    cal = {}
    if cfg.alpha0 is not None:
        alpha0 = float(cfg.alpha0)
        cal["alpha0_source"] = "config"
    else:
        cands = [a["psi"] for c in cases for a in c.aux]
        source = "auxiliary solutions"
        if not cands:
            cands = [c.phi for c in cases]
            source = "t-solutions"
        alpha0 = est.alpha0_estimate(spec, cases[0].t, cands, cap=cfg.alpha0_cap)
        cal["alpha0_source"] = f"estimated from {len(cands)} {source}"
    per_run = []
    for c in cases:
        _, _, stats, E = _levels(c, spec, cfg)
        per_run.append(est.calibrate_trudinger_C(_trudinger_values(c, spec, stats, alpha0), E))
    if cfg.trudinger_C is not None:
        C = float(cfg.trudinger_C)
        cal["C_source"] = "config"
    else:
        C = float(max(per_run))
        cal["C_source"] = "calibrated on this configuration"
    cal.update({"alpha0": alpha0, "C": C, "per_run_best_C": per_run})
    return alpha0, C, cal


def _evaluate_case(case, spec, cfg, alpha0, C):
    """Estimates and the full invariant suite for one run."""
    n = spec.n
    tol = cfg.tolerances
    D, sup_def, stats, E = _levels(case, spec, cfg)
    w = n / cfg.k
    Fw = PeriodicField(spec.grid, w * spec.F_hat.values)
    orl = est.orlicz_norm(Fw, spec.p, spec.g)
    checks = {}

    # solver
    s = case.solve
    checks["solve_residual"] = _check(s["residual_sup"] <= s["tolerance"], s["tolerance"] - s["residual_sup"])
    checks["solve_positivity"] = _check(s["positivity_margin"] > 0, s["positivity_margin"])

    # envelope sandwich
    sw = sandwich_from_parts(case.V, case.betas, case.u_betas, case.C_low, case.offsets)
    low = [a for a, _ in sw]
    up = [b for _, b in sw]
    i, m = _worst_index(low)
    checks["sandwich_lower"] = _check(m >= -tol["margin"], m, where={"beta": case.betas[i]})
    i, m = _worst_index(up)
    checks["sandwich_upper"] = _check(m >= -tol["margin"], m, where={"beta": case.betas[i]})
    vmax = case.V.max()
    checks["envelope_nonpositive"] = _check(vmax <= tol["margin"], -vmax)
    j = int(np.argmin(D))
    dm = float(D.flat[j]) + case.error_bar + tol["margin"]
    checks["deficit_nonnegative"] = _check(dm >= 0, dm, where={"index": np.unravel_index(j, D.shape)},
                                           min_deficit=float(D.flat[j]))

    # level statistics
    mono = min(float(np.min(-np.diff(stats.A_s), initial=0.0)), float(np.min(-np.diff(stats.tail), initial=0.0)))
    checks["levels_monotone"] = _check(mono >= -1e-14, mono)
    # negative deficits (within the envelope error bar) can lift A_0 slightly above E
    slack = case.error_bar * float(np.mean(np.exp(Fw.values))) * spec.volume
    checks["A_s_below_entropy"] = _check(float(np.max(stats.A_s)) <= E + slack + tol["margin"],
                                         E + slack - float(np.max(stats.A_s)))

    # Trudinger bound with frozen constants
    lhs = _trudinger_values(case, spec, stats, alpha0)
    bound = C * np.exp(C * E)
    i, m = _worst_index(bound - np.asarray(lhs))
    checks["trudinger"] = _check(m >= -1e-12 * max(1.0, bound), m, where={"s": float(stats.s_values[i])})

    # Young, pointwise for every level
    worst_y, worst_s = -np.inf, None
    for sv, A in zip(stats.s_values, stats.A_s):
        if A <= 0:
            continue
        z = np.where(D >= sv, (D - sv) / A ** (1.0 / (n + 1)), 0.0)
        v = 0.5 * alpha0 * z ** ((n + 1) / n)
        rep = est.young_check(PeriodicField(spec.grid, v), Fw, spec.p, tol=tol["young"])
        if rep.max_violation > worst_y:
            worst_y, worst_s = rep.max_violation, float(sv)
    checks["young"] = _check(worst_y <= tol["young"], -worst_y if np.isfinite(worst_y) else 0.0,
                             where={"s": worst_s})

    # Holder chain and De Giorgi
    B0, hrep = est.holder_chain_check(stats, orl, E, alpha0, spec.p, n, C, tol=tol["chain"])
    i, m = _worst_index(hrep.chain_margins)
    checks["holder_A_s"] = _check(m >= -tol["chain"] * max(1.0, float(np.max(stats.A_s))), m,
                                  where={"s": float(stats.s_values[i])})
    if hrep.moment_margins:
        i, m = _worst_index(hrep.moment_margins)
        checks["holder_moment"] = _check(m >= -tol["chain"] * max(1.0, float(np.max(stats.moments))), m,
                                         where={"s": float(stats.s_values[i])})
    d0 = est.delta0(spec.p, n)
    tail_fn = est.tail_function(case.phi, case.V, spec.F_hat, weight_exponent=w, g=spec.g)
    r_vals = sorted(set(list(cfg.degiorgi_r) + [sup_def * j / 8 for j in range(1, 9)]))
    dg = est.degiorgi_relation_margins(tail_fn, stats.s_values, r_vals, B0, d0)
    checks["degiorgi_relation"] = _check(dg >= -1e-12, dg)
    try:
        s_inf = est.degiorgi_iterate(stats, B0, d0)
        checks["uniform_bound"] = _check(sup_def <= s_inf + 1e-9, s_inf - sup_def)
    except NeflabError as exc:
        s_inf = float("nan")
        checks["uniform_bound"] = {"ok": False, "margin": float("nan"), "error": str(exc)}

    # maximum-principle comparison on every auxiliary run
    aux_rows = []
    for a in case.aux:
        row = {"s": a["s"], "beta": a["beta"], "A_skb": a["A_skb"]}
        if cfg.k != n:
            row["skipped"] = "the comparison function is built for the Monge-Ampere pipeline (k = n)"
        else:
            try:
                u_b = case.u_betas[a["beta_index"]]
                rep = est.phi_comparison_check(case.phi, u_b, a["psi"], a["s"], a["A_skb"], n, V=case.V,
                                               tol=tol["margin"], volume=spec.volume)
                row.update({"sup_Phi": rep.sup_Phi, "eps_beta": rep.eps_beta, "epsilon": rep.epsilon,
                            "Lambda": rep.Lambda, "margin": rep.eps_beta + tol["margin"] - rep.sup_Phi,
                            "ok": rep.ok, "argmax_inside": rep.argmax_inside})
            except NeflabError as exc:
                row.update({"ok": False, "error": f"{type(exc).__name__}: {exc}"})
        aux_rows.append(row)
    graded = [r for r in aux_rows if "ok" in r]
    if graded:
        worst = min(graded, key=lambda r: r.get("margin", -np.inf))
        checks["phi_comparison"] = _check(all(r["ok"] for r in graded), worst.get("margin", float("nan")),
                                          where={"s": worst["s"]})

    best_C = est.calibrate_trudinger_C(lhs, E)
    report = est.EstimateReport(E_t=E, orlicz_p=orl, alpha0=alpha0, B0=B0, delta0=d0, S_infinity=s_inf,
                                sup_deficit=sup_def, trudinger_values=list(lhs), fitted_C_key=best_C,
                                C_frozen=C, q=est.holder_q(spec.p, n))
    extra = {"sup_minus_phi": float(-case.phi.min()), "min_deficit": float(D.min()),
             "omega_measure_0": float(stats.omega_measure[0])}
    return report, checks, aux_rows, stats, lhs, extra


def _merge_suites(runs):
    suites = {}
    for r in runs:
        for name, c in r["checks"].items():
            cur = suites.get(name)
            margin = c.get("margin", float("nan"))
            entry = {"ok": c["ok"], "margin": margin, "t": r["t"]}
            if "where" in c:
                entry["where"] = c["where"]
            if cur is None:
                suites[name] = entry
                continue
            worse = (not c["ok"] and cur["ok"]) or (c["ok"] == cur["ok"] and
                                                    np.nan_to_num(margin, nan=-np.inf) <
                                                    np.nan_to_num(cur["margin"], nan=-np.inf))
            ok = cur["ok"] and c["ok"]
            if worse:
                suites[name] = entry
            suites[name]["ok"] = ok
    return suites


# ---------------------------------------------------------------- artifacts


def _paths(i):
    return {"phi": f"t{i:02d}_phi.neff", "V": f"t{i:02d}_V.neff", "levels": f"t{i:02d}_levels.csv"}


def _write_case(out, i, case, stats, lhs):
    names = _paths(i)
    write_field(os.path.join(out, names["phi"]), case.phi)
    write_field(os.path.join(out, names["V"]), case.V)
    names["u_betas"] = []
    for j, u in enumerate(case.u_betas):
        nm = f"t{i:02d}_u{j}.neff"
        write_field(os.path.join(out, nm), u)
        names["u_betas"].append(nm)
    names["psi"] = []
    for j, a in enumerate(case.aux):
        nm = f"t{i:02d}_psi{j}.neff"
        write_field(os.path.join(out, nm), a["psi"])
        names["psi"].append(nm)
    with open(os.path.join(out, names["levels"]), "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["s", "A_s", "tail", "omega_measure", "trudinger_lhs"])
        for row, v in zip(stats.rows(), lhs):
            wr.writerow([repr(float(x)) for x in row] + [repr(float(v))])
    return names


def _save_report(report, out):
    if out:
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "report.json"), "w") as fh:
            fh.write(report.to_json())


# ---------------------------------------------------------------- pipelines


def _assemble(cfg, spec, cases, clocks, kind):
    alpha0, C, cal = _calibrate(cases, spec, cfg)
    report = RunReport(kind=kind, config=cfg.to_dict(), calibration=cal)
    out = cfg.output_dir
    if out:
        os.makedirs(out, exist_ok=True)
    for i, (case, clock) in enumerate(zip(cases, clocks)):
        rep, checks, aux_rows, stats, lhs, extra = _evaluate_case(case, spec, cfg, alpha0, C)
        run = {"t": case.t, "c_t": case.solve.get("c_t"), "solve": case.solve, "envelope": case.envelope,
               "estimates": rep.to_dict(), "aux": aux_rows, "checks": checks, **extra}
        report.runs.append(run)
        report.timings[f"t={case.t!r}"] = clock
        if out:
            report.artifacts[repr(case.t)] = _write_case(out, i, case, stats, lhs)
    report.suites = _merge_suites(report.runs)
    return report


def run_solve(config):
    """Full pipeline for every t; writes dumps, CSV and JSON when output_dir is set.

    Solver failures propagate; the partial report is attached to the
    exception as ``partial_report`` (and written to disk).
    """
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_dict(config)
    spec = cfg.spec()
    start = time.perf_counter()
    try:
        pairs = _solve_all(cfg)
    except NonConvergence as exc:
        report = RunReport(kind="solve", config=cfg.to_dict())
        report.error = {"type": type(exc).__name__, "message": str(exc),
                        "last_residual": exc.last_residual, "iterations": exc.iterations}
        _save_report(report, cfg.output_dir)
        exc.partial_report = report
        raise
    cases = [c for c, _ in pairs]
    report = _assemble(cfg, spec, cases, [k for _, k in pairs], "solve")
    report.timings["total"] = time.perf_counter() - start
    _save_report(report, cfg.output_dir)
    return report


def run_envelope(config):
    """Envelopes only: beta-scheme summaries, sandwich margins and V dumps."""
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_dict(config)
    spec = cfg.spec()
    report = RunReport(kind="envelope", config=cfg.to_dict())
    out = cfg.output_dir
    if out:
        os.makedirs(out, exist_ok=True)
    for i, t in enumerate(cfg.t_list):
        t0 = time.perf_counter()
        env = compute_envelope(spec, t, cfg.k, cfg.beta_schedule, tol=cfg.newton_tol)
        sw = sandwich_from_parts(env.V, env.beta_schedule, [s.phi for s in env.solutions],
                                 env.C_low, env.upper_offsets)
        m = cfg.tolerances["margin"]
        lo = min(a for a, _ in sw)
        hi = min(b for _, b in sw)
        checks = {"sandwich_lower": _check(lo >= -m, lo), "sandwich_upper": _check(hi >= -m, hi),
                  "rate_fit": _check(env.fit_residual < 0.5, 0.5 - env.fit_residual)}
        summary = env.summary()
        summary["error_bar"] = env.error_bar
        report.runs.append({"t": t, "envelope": summary, "sandwich": sw, "checks": checks})
        report.timings[f"t={t!r}"] = time.perf_counter() - t0
        if out:
            nm = f"t{i:02d}_V.neff"
            write_field(os.path.join(out, nm), env.V)
            report.artifacts[repr(t)] = {"V": nm}
    report.suites = _merge_suites(report.runs)
    _save_report(report, out)
    return report


def _load_cases(cfg, spec):
    out = cfg.output_dir
    if not out:
        raise MissingArtifacts("no output_dir configured")
    path = os.path.join(out, "report.json")
    if not os.path.exists(path):
        raise MissingArtifacts(f"{path} not found")
    with open(path) as fh:
        try:
            prior = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FieldFormatError(f"{path}: {exc}") from None
    if prior.get("schema") != SCHEMA or prior.get("kind") != "solve":
        raise FieldFormatError(f"{path} is not a solve report of schema {SCHEMA}")

    def load(name):
        p = os.path.join(out, name)
        if not os.path.exists(p):
            raise MissingArtifacts(f"{p} not found")
        f = read_field(p)
        if f.grid != spec.grid:
            raise FieldFormatError(f"{p} has grid (n={f.grid.n}, N={f.grid.N}), expected "
                                   f"(n={spec.n}, N={spec.grid.N})")
        return f

    cases = []
    for run in prior["runs"]:
        names = prior["artifacts"].get(repr(float(run["t"])))
        if names is None:
            raise MissingArtifacts(f"no artifacts recorded for t={run['t']}")
        env = run["envelope"]
        aux = []
        for a, nm in zip(run["aux"], names["psi"]):
            aux.append({"s": a["s"], "beta": a["beta"], "A_skb": a["A_skb"], "psi": load(nm),
                        "beta_index": env["beta_schedule"].index(a["beta"])})
        cases.append(_Case(t=float(run["t"]), phi=load(names["phi"]), V=load(names["V"]),
                           betas=env["beta_schedule"], u_betas=[load(nm) for nm in names["u_betas"]],
                           C_low=env["C_low"], offsets=env["upper_offsets"], error_bar=env["error_bar"],
                           aux=aux, solve=run["solve"], envelope=env))
    return cases, prior


def run_verify(config, recompute=False):
    """Invariant suite on the dumps of a prior run_solve (or on a fresh run).

    With artifacts present the checks are re-evaluated from the reloaded
    fields; without them (or with ``recompute``) the pipeline runs first.
    Raises MissingArtifacts when a report lists dumps that are gone and
    FieldFormatError on corrupted dumps.
    """
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_dict(config)
    spec = cfg.spec()
    start = time.perf_counter()
    have = cfg.output_dir and os.path.exists(os.path.join(cfg.output_dir, "report.json"))
    if recompute or not have:
        pairs = _solve_all(cfg)
        cases = [c for c, _ in pairs]
        out_cfg = cfg
    else:
        cases, _ = _load_cases(cfg, spec)
        # keep the dumps as they are
        out_cfg = ExperimentConfig.from_dict({**cfg.to_dict(), "output_dir": None})
    report = _assemble(out_cfg, spec, cases, [{} for _ in cases], "verify")
    report.config = cfg.to_dict()
    report.timings["total"] = time.perf_counter() - start
    if cfg.output_dir:
        os.makedirs(cfg.output_dir, exist_ok=True)
        with open(os.path.join(cfg.output_dir, "verify.json"), "w") as fh:
            fh.write(report.to_json())
    return report


# ---------------------------------------------------------------- sweep


def ct_table(spec, t_values, k=None):
    return [(float(t), cohomology_constants(spec, t, k)) for t in t_values]


def fit_exponent(table):
    """Least-squares slope of log c_t against log t."""
    t = np.log([a for a, _ in table])
    c = np.log([b for _, b in table])
    return float(np.polyfit(t, c, 1)[0])


def run_sweep(config):
    """t-degeneration study: c_t power law, deficit uniformity and raw growth."""
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_dict(config)
    spec = cfg.spec()
    if len(cfg.t_list) < 3:
        raise ConfigError("sweep needs a t_list of length >= 3")
    start = time.perf_counter()
    nu = spec.nef.nu
    expected = max(cfg.k - nu, 0)
    fit_ts = cfg.asymptotic_t_list or cfg.t_list
    table = ct_table(spec, sorted(set(cfg.t_list) | set(fit_ts), reverse=True), cfg.k)
    fit_tab = [(t, c) for t, c in table if t in fit_ts]
    slope = fit_exponent(fit_tab)
    chi_min = float(eigen_values(spec.ghat(0.0), spec.g)[..., 0].min())
    sweep = {"nu": nu, "expected_exponent": expected, "fitted_exponent": slope,
             "exponent_error": abs(slope - expected), "fit_t": fit_ts,
             "c_t": [{"t": t, "c_t": c} for t, c in table],
             "chi_min_eigenvalue": chi_min, "chi_semipositive": chi_min >= 0}
    if cfg.sweep_pipeline:
        report = run_solve(cfg)
        rows = [{"t": r["t"], "sup_deficit": r["estimates"]["sup_deficit"],
                 "sup_minus_phi": r["sup_minus_phi"], "S_infinity": r["estimates"]["S_infinity"]}
                for r in report.runs]
        d = [r["sup_deficit"] for r in rows]
        raw = [r["sup_minus_phi"] for r in rows]
        spread = max(d) / min(d) if min(d) > 0 else float("inf")
        growth = raw[-1] / raw[0] if raw[0] > 0 else float("inf")
        sweep.update({"deficits": rows, "deficit_spread": spread, "raw_growth": growth,
                      "uniform": spread <= 3.0})
        report.kind = "sweep"
        report.suites["uniformity"] = {"ok": spread <= 3.0, "margin": 3.0 - spread}
    else:
        report = RunReport(kind="sweep", config=cfg.to_dict())
        sweep["deficits"] = {"skipped": "sweep_pipeline is false"}
    report.sweep = sweep
    report.timings["total"] = time.perf_counter() - start
    if cfg.output_dir:
        os.makedirs(cfg.output_dir, exist_ok=True)
        with open(os.path.join(cfg.output_dir, "sweep.json"), "w") as fh:
            fh.write(report.to_json())
    return report
