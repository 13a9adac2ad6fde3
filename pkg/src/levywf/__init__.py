"""Fixation probabilities for Wright-Fisher diffusions with two-sided
selection driven by a compound-Poisson environment.

Three mutually cross-validating routes: deterministic coefficient recursions
with truncated linear ODE systems, Monte Carlo simulation of the enlarged
ancestral selection graph with its subset-weight encoding function, and
Monte Carlo simulation of the jump-diffusion itself.
"""

from .environment import EnvironmentSpec, moment, ode_coeffs, tau, total_mass
from .fixation import (
    DivergenceError,
    SeriesRepresentation,
    TaylorCoefficients,
    build_series,
    closed_form_no_env,
    h_series,
    h_taylor,
    normalize_b,
)
from .odes import (
    CoefficientGrid,
    LimitCoefficients,
    QVector,
    StabilizationError,
    Stabilization,
    StepPolicy,
    b_ratios,
    extract_a,
    extract_b_ode,
    integrate_q,
    integrate_r,
    q_rhs,
    r_rhs,
    relation_residuals,
)
from .sde import (
    FixationEstimate,
    JumpSchedule,
    MomentEstimate,
    PathConfig,
    apply_jump,
    estimate_fixation,
    estimate_moment,
    evolve_between_jumps,
    sample_jump_schedule,
)
from .stationary import (
    CutoffTooSmallError,
    SiegmundEstimate,
    StationaryDistribution,
    compute_pi,
    siegmund_absorption,
    simulate_line_count,
    tail_bound,
    unnormalized_ratios,
)

__version__ = "0.1.0"
