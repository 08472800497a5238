"""Robust super learning with a cross-validated Huber loss.

The package builds stacked ensembles whose convex weights minimize a
cross-validated Huber risk, selects the robustification parameter by
partial or nested cross-validation, and ships Monte Carlo experiments
for zero-inflated cost prediction and TMLE-based treatment effect
estimation.
"""

from ._version import __version__
from .cross_validation import LevelOneMatrix, build_level_one
from .dgp import (
    REGIMES,
    CostScenario,
    TweedieScenario,
    gen_covariates,
    sample_tweedie,
    true_ate,
)
from .errors import ConfigError, DataError
from .experiments import (
    ATE_ESTIMATORS,
    PREDICTION_ESTIMATORS,
    AteExperimentConfig,
    ExperimentReport,
    PredictionExperimentConfig,
    default_ate_learners,
    default_prediction_learners,
    resolve_workers,
    run_ate_experiment,
    run_prediction_experiment,
)
from .folds import FoldPlan, fold_mean_weights, make_folds
from .lambda_selection import (
    LambdaGrid,
    LambdaSelection,
    NestedCvResult,
    default_lambda_grid,
    nested_cv_select,
    partial_cv_select,
)
from .learners import (
    FittedLearner,
    LearnerSpec,
    fit,
    fit_count,
    predict,
    reset_fit_count,
    validate_spec,
)
from .losses import Huber, Squared, empirical_risk, huber_loss, huber_psi
from .meta import (
    MetaSolveOptions,
    SolveInfo,
    discrete_select,
    grid_minimum,
    project_to_simplex,
    simplex_lattice,
    solve_weights,
    solve_weights_info,
)
from .metrics import icc, outlier_fraction, score, selection_accuracy, skewness
from .superlearner import (
    ENSEMBLE_MODES,
    LOSS_MODES,
    OracleRisk,
    SuperLearnerConfig,
    SuperLearnerModel,
    fit_super_learner,
    load_model,
    model_from_jsonable,
    model_to_jsonable,
    oracle_weights,
    predict_super_learner,
    save_model,
)
from .tmle import (
    AteEstimate,
    PropensityModel,
    fit_propensity,
    tmle_ate,
    tmle_from_predictions,
    unadjusted_ate,
)

__all__ = [
    "__version__",
    "ConfigError",
    "DataError",
    # losses
    "huber_loss",
    "huber_psi",
    "Huber",
    "Squared",
    "empirical_risk",
    # folds and level-one
    "FoldPlan",
    "make_folds",
    "fold_mean_weights",
    "LevelOneMatrix",
    "build_level_one",
    # learners
    "LearnerSpec",
    "FittedLearner",
    "fit",
    "predict",
    "validate_spec",
    "fit_count",
    "reset_fit_count",
    # meta-optimizer
    "MetaSolveOptions",
    "SolveInfo",
    "solve_weights",
    "solve_weights_info",
    "discrete_select",
    "project_to_simplex",
    "simplex_lattice",
    "grid_minimum",
    # lambda selection
    "LambdaGrid",
    "LambdaSelection",
    "NestedCvResult",
    "default_lambda_grid",
    "partial_cv_select",
    "nested_cv_select",
    # super learner
    "LOSS_MODES",
    "ENSEMBLE_MODES",
    "SuperLearnerConfig",
    "SuperLearnerModel",
    "fit_super_learner",
    "predict_super_learner",
    "save_model",
    "load_model",
    "model_to_jsonable",
    "model_from_jsonable",
    "OracleRisk",
    "oracle_weights",
    # data generators
    "REGIMES",
    "gen_covariates",
    "CostScenario",
    "TweedieScenario",
    "sample_tweedie",
    "true_ate",
    # metrics
    "score",
    "outlier_fraction",
    "skewness",
    "icc",
    "selection_accuracy",
    # TMLE
    "AteEstimate",
    "PropensityModel",
    "unadjusted_ate",
    "tmle_ate",
    "tmle_from_predictions",
    "fit_propensity",
    # experiments
    "PREDICTION_ESTIMATORS",
    "ATE_ESTIMATORS",
    "PredictionExperimentConfig",
    "AteExperimentConfig",
    "ExperimentReport",
    "default_prediction_learners",
    "default_ate_learners",
    "run_prediction_experiment",
    "run_ate_experiment",
    "resolve_workers",
]
