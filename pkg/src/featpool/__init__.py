"""Feature-based Bayesian forecast combination.

Combination weights are a softmax of time-series features; coefficients are
estimated by MAP, optionally with indicator-based feature selection.
"""

__version__ = "0.1.0"

from .core import (
    FeatureMatrix,
    StandardizationStats,
    TimeSeries,
    WindowSpec,
    history_slices,
    load_collection,
    load_series,
    standardize,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    DataError,
    DegenerateScale,
    EmptySeries,
    FeatpoolError,
    GarchDegenerate,
    InsufficientHistory,
    NonFiniteScore,
    NonNumeric,
    NumericalError,
)
from .features import FEATURE_NAMES, FULL_CATALOG, FeatureCatalog, build_feature_matrix, compute_features
from .forecast import (
    CombinationFit,
    ForecastResult,
    ScreeningConfig,
    forecast_h,
    recursive_oos_evaluate,
    train_pipeline,
)
from .inference import InferenceConfig, gibbs_select, map_estimate, selection_frequencies
from .metrics import average_log_score, dm_test, mase
from .models import DensityMatrix, ModelSpec, PredictiveDensity, build_density_matrix
from .pool import (
    PriorConfig,
    combination_weights,
    grad_log_posterior,
    log_posterior,
    log_prior,
    pooled_log_score,
)
from .relief import label_best_model, relieff_rank, select_top_k
