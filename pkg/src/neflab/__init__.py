"""Numerical lab for degenerate complex Monge-Ampere and sigma_k equations on flat tori."""

from .envelope import EnvelopeResult, compute_envelope, envelope_monotonicity_check, sandwich_margins
from .errors import (
    AdmissibilityFailure,
    BetaTooSmall,
    ConeLoss,
    ConfigError,
    EmptyCandidates,
    FieldFormatError,
    MissingArtifacts,
    NeflabError,
    NonConvergence,
    NoValidS0,
    PositivityLoss,
    ScheduleTooShort,
)
from .experiment import ExperimentConfig, RunReport, run_envelope, run_solve, run_sweep, run_verify
from .fieldio import read_field, write_field
from .hessian_solver import barrier_verify, gamma_k_check, solve_beta_sigma_k, solve_sigma_k
from .ma_solver import SolveResult, solve_auxiliary, solve_beta_ma, solve_ma
from .torus import (
    Grid,
    HermitianField,
    NefClassSpec,
    PeriodicField,
    ProblemSpec,
    cohomology_constants,
    complex_hessian,
    det_ratio,
    fourier_field,
    integrate,
    sigma_k_ratio,
)

__version__ = "0.1.0"
