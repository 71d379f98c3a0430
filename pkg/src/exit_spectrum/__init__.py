"""Exit-time moments, Dirichlet eigenvalues and their two-sided bounds for symmetric Markov generators."""

from .bounds import (
    BoundsReport,
    Check,
    blm_stable_bounds,
    build_report,
    delta_plus,
    delta_r,
    estimate_lambda0,
    exp_moment_bounds,
    lower_bound,
    sandwich_check,
    upper_bound_odd,
    upper_bound_ratio,
)
from .config import RunConfig, parse_config
from .errors import *  # noqa: F401,F403
from .expr import Expression, expr_eval
from .generator import (
    Generator,
    GridSpec,
    build_chain,
    build_diffusion_1d,
    build_fractional_1d,
    build_time_changed_1d,
    validate,
)
from .killed import KilledGenerator, dirichlet_energy, green_apply, kill, rayleigh_quotient
from .moments import MomentTable, cross_moment, exit_moments, exp_moment_series, variational_gap, verify_iterate_identity
from .montecarlo import (
    McConfig,
    McEstimate,
    empirical_vs_solver,
    simulate_chain_exit,
    simulate_diffusion_exit,
    simulate_killed_exit,
    simulate_stable_exit,
)
from .quadrature import QuadratureConfig
from .report import RunReport, render_text, run
from .spectral import Spectrum, exp_moment_exact, full_spectrum, principal_pair, spectral_moments

__version__ = "0.1.0"
