"""Minimum relative entropy inference.

Closed-form updates of normal distributions under mean and covariance views,
entropy pooling of weighted scenarios, a Hamiltonian Monte Carlo sampler for
tilted densities, and the iterative algorithm that combines the last two.
"""

from .core import (
    CanonicalNormal,
    ExpectationViews,
    IterationRecord,
    IterationTrace,
    MomentViews,
    NormalParams,
    TiltedDensity,
    WeightedScenarios,
    ens,
    expand_moment_views,
    linear_views,
    normal_numerator,
    relative_entropy_discrete,
    relative_entropy_normal,
    second_moment_views,
    stack_views,
    view_residual,
    weighted_moments,
)
from .errors import (
    ConvergenceError,
    InfeasibleViewsError,
    MREError,
    SamplerTuningError,
    ValidationError,
)
from .hmc import HmcConfig, effective_sample_size, leapfrog, run_chains, sample
from .iterative import IterativeConfig, IterativeResult, run, update_numerator
from .normal import solve_moment_views, solve_uncorrelated, solve_noncentral_fixed_point
from .pooling import PoolingConfig, PoolingResult, entropy_pool

__version__ = "0.1.0"
