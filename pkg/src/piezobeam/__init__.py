"""Numerical lab for 1-D piezoelectric beams with fractional boundary damping."""

__version__ = "0.1.0"
SCHEMA_VERSION = "1.0"

from .errors import ConfigError, InvariantViolation, SnapshotError
from .fractional import (
    DiffusiveOperator,
    FracParams,
    build_quadrature,
    closed_form_moment,
    closed_form_second_moments,
    evaluate_mu,
    read_output,
    reference_caputo,
    step_modes,
)
from .beam import (
    BeamConfig,
    BeamState,
    Grid,
    initial_condition_library,
    rhs_nonthermal,
    rhs_thermal,
    solve_boundary_gradients,
)
from .integrator import EnergyReport, compute_energy, default_dt, run, step
from .stability import (
    DecayFit,
    LyapunovConfig,
    assemble_generator,
    evaluate_functionals,
    feasible_lyapunov_constants,
    fit_decay,
    lyapunov_check,
    resolvent_sweep,
)
