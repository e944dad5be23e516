"""Optimal periodic dividend barriers for jump-diffusion surplus processes."""

from .errors import (
    BracketNotFound,
    ConfigError,
    ModelFileError,
    NearMultipleRoots,
    NoPositiveRealRoot,
    PeridivError,
    PoleError,
    PreconditionViolated,
    SingularSystem,
    SolverError,
)
from .model import (
    ModelSpec,
    RootDecomposition,
    TimePreference,
    laplace_exponent,
    load_model_file,
    parse_model_text,
    phi,
    psi_derivatives,
    psi_prime,
    solve_roots,
)
from .optimizer import (
    G_fn,
    Gamma_fn,
    OptimalSolution,
    Q_fn,
    SweepRecord,
    solve_b_star,
    solve_b_u,
    solve_kappa0,
    solve_optimal,
    sweep,
)
from .scale import ExpSum, ScaleContext
from .simulate import SimConfig, SimEstimate, simulate_value, simulate_value_antithetic
from .valuation import (
    Strategy,
    StrategyValuation,
    ValuationReport,
    build_report,
    generator_residual,
    hjb_argmax,
    hjb_residual,
    smoothness_gap,
    value,
    value_derivative,
    value_many,
    value_periodic_barrier,
)

__version__ = "0.1.0"
