"""Principal-component estimation of factor models with weak and heterogeneous loadings."""
from .dgp import DgpKind, DgpSpec, SigmaRule, SimulatedPanel, generate, population_limits, rbar2
from .favar import FavarFit, favar_fit, favar_simulate, run_favar
from .inference import (
    VarianceEstimate,
    ZScores,
    residuals,
    standard_errors,
    standardized_errors,
    var_common,
    var_factor,
    var_loading,
)
from .model import (
    FactorFit,
    GroundTruth,
    Panel,
    PopulationLimits,
    RankDeficientError,
    RotationKind,
    RotationMatrix,
    SingularRotationError,
    common_component,
    standardize_panel,
)
from .montecarlo import (
    McConfig,
    McReport,
    avg_errors,
    error_distribution,
    fit_r2,
    log_log_slope,
    multivariate_fit,
    rate_slopes,
    rho_bar,
    run_experiment,
)
from .pce import pc_estimate, rotation, scaled_eigenvalues, sign_align

__version__ = "0.1.0"

__all__ = [
    "DgpKind",
    "DgpSpec",
    "SigmaRule",
    "SimulatedPanel",
    "generate",
    "population_limits",
    "rbar2",
    "FavarFit",
    "favar_fit",
    "favar_simulate",
    "run_favar",
    "VarianceEstimate",
    "ZScores",
    "residuals",
    "standard_errors",
    "standardized_errors",
    "var_common",
    "var_factor",
    "var_loading",
    "FactorFit",
    "GroundTruth",
    "Panel",
    "PopulationLimits",
    "RankDeficientError",
    "RotationKind",
    "RotationMatrix",
    "SingularRotationError",
    "common_component",
    "standardize_panel",
    "McConfig",
    "McReport",
    "avg_errors",
    "error_distribution",
    "fit_r2",
    "log_log_slope",
    "multivariate_fit",
    "rate_slopes",
    "rho_bar",
    "run_experiment",
    "pc_estimate",
    "rotation",
    "scaled_eigenvalues",
    "sign_align",
]
