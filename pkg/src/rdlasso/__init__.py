"""Regression discontinuity estimation with lasso-selected covariates."""

from .data import Dataset
from .errors import (
    ConfigError,
    DegenerateCovariate,
    DegenerateDensity,
    EmptyAfterFiltering,
    EmptyEffectiveSample,
    MissingColumn,
    NonNumericCell,
    NonfiniteQuantile,
    NonpositiveVariance,
    NotConverged,
    NotPositiveDefinite,
    NumericalError,
    RankDeficient,
    RdlassoError,
    TooFewObservations,
    WeakJump,
)
from .inference import (
    BalanceReport,
    BalanceRow,
    PipelineConfig,
    RDEstimate,
    balance_tests,
    benjamini_hochberg,
    confidence_interval,
    estimate_fuzzy,
    estimate_sharp,
    standard_error,
)
from .io import RunConfig, load_csv
from .kernels import (
    KernelSpec,
    bias_constant,
    constants,
    curvature_weight,
    moment,
    variance_constant,
)
from .local_linear import LocalFit, fit_adjusted, fit_baseline, fwl_theta
from .selection import (
    KktReport,
    PenaltyWeights,
    SelectionResult,
    double_selection,
    kkt_residuals,
    local_lasso,
    standardization_weights,
)
from .simulation import (
    DgpConfig,
    EstimatorSpec,
    McRow,
    McSummary,
    fixed_subset_estimator,
    generate,
    lasso_estimator,
    optimal_covariate_estimator,
    run_monte_carlo,
    standard_estimators,
)
from .tuning import (
    BandwidthPlan,
    TuningConfig,
    density_at_cutoff,
    final_bandwidth,
    lambda_bch,
    lambda_cv,
    lambda_grid,
    lambda_lv,
    pilot_bandwidth,
)

__version__ = "0.1.0"
