"""Annealed-complexity toolkit for the anisotropic pure p-spin model with
a polynomial confinement potential: variational functional evaluation,
complexity maximization, free-convolution numerics, and finite-N Kac-Rice
validation experiments."""

__version__ = "0.1.0"

from .constants import c1, c2, c3, master_seed
from .freeconv import (
    FreeConvError,
    FreeConvResult,
    StieltjesGrid,
    convolve_semicircle,
    log_potential,
    moment_bound_check,
)
from .functional import (
    FunctionalValue,
    complexity_I,
    constraint_value,
    functional_value,
    phi,
)
from .measure import (
    DiscreteMeasure,
    GridMeasure,
    dilate,
    gaussian_grid_measure,
    kl_divergence,
    moment,
    pushforward_gt,
)
from .optimizer import (
    ComplexityReport,
    CriticalLevelReport,
    InfeasibleError,
    SolverConfig,
    find_uc,
    maximize_sigma,
    sigma_curve,
)
from .potential import (
    Potential,
    ValidationReport,
    eval_potential,
    example_paper_potential,
    pure_power_potential,
    validate_assumption1,
)
from .rmt import GoeSample, log_det_experiment, sample_goe, sample_goe_stack, wegner_check
from .kacrice import (
    HessianModel,
    KacRiceEstimate,
    KacRiceIntegrand,
    build_hessian_model,
    count_critical_points,
    covariance_test,
    expected_abs_det,
    expected_crt,
    kac_rice_integrand,
)

__all__ = [name for name in dir() if not name.startswith("_")]
