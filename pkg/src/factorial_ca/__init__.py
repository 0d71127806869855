"""Randomization-based inference with covariate adjustment for 2^K factorial designs."""

from .asymptotics import (
    AsymptoticCovariance,
    PrecisionGain,
    VarianceReport,
    asym_cov,
    asym_var_effects,
    equal_precision,
    exact_obs_moments,
    precision_gain,
)
from .design import ModelMatrix, TreatmentCombination, build_model_matrix, treatment_combinations
from .errors import (
    ConditioningWarning,
    EmptyCovariatesError,
    InvalidArgumentError,
    SingularDesignError,
    SingularMatrixError,
    TooLargeError,
)
from .estimation import (
    EffectEstimates,
    Method,
    ObservedSummary,
    adjusted_means,
    beta_hat,
    observed_summary,
    tau_ca,
    tau_rb,
    true_tau,
)
from .montecarlo import (
    NormalitySettings,
    PopulationRecipe,
    StudyConfig,
    StudyResult,
    run_study,
    synthesize_population,
)
from .population import MomentSummary, Population, center, moments, residuals, solve_spd
from .randomization import Assignment, draw_assignment, enumerate_assignments

__version__ = "0.1.0"
