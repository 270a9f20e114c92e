"""Penalized integrative analysis of multi-study right-censored data.

Accelerated failure time models fitted by Kaplan-Meier weighted least
squares, with group-level and two-level sparsity penalties coupling the
studies, cross-validated tuning, non-integrative baselines, a
simulation generator and evaluation tooling.
"""

__version__ = "0.1.0"

from .baselines import BaselineResult, meta_fit, pooled_fit
from .data import (
    MultiStudy,
    Study,
    backtransform_coef,
    km_weights,
    load_studies,
    load_study_csv,
    sort_order,
    standardize,
    write_study_csv,
)
from .errors import (
    CalibrationError,
    ContractError,
    DataFormatError,
    DimensionError,
    SolverError,
    ValidationError,
)
from .evaluate import (
    ALL_METHODS,
    BenchmarkResult,
    MethodFit,
    PredictEval,
    SelectionMetrics,
    fit_method,
    logrank_stat,
    predict_eval,
    repeated_split_eval,
    run_benchmark,
    selection_metrics,
)
from .penalty import (
    PenaltySpec,
    group_prox,
    penalty_deriv,
    penalty_value,
    scalar_prox,
    total_penalty,
)
from .sim import (
    Correlation,
    SimConfig,
    TruthSet,
    gen_covariates,
    gen_replicate,
    gen_responses,
    gen_truth,
    parse_correlation,
    rng_stream,
    split_indices,
    write_replicate,
)
from .solver import (
    FitResult,
    IndexSets,
    SolverOptions,
    check_kkt,
    fit,
    fit_path,
    loss,
    loss_gradient,
    objective,
)
from .tuning import (
    METHOD_CODES,
    TuneGrid,
    cross_validate,
    lambda_max,
    make_folds,
    make_lambda_grid,
    make_spec,
)

__all__ = [
    "__version__",
    "ALL_METHODS",
    "BaselineResult",
    "BenchmarkResult",
    "CalibrationError",
    "ContractError",
    "Correlation",
    "DataFormatError",
    "DimensionError",
    "FitResult",
    "IndexSets",
    "METHOD_CODES",
    "MethodFit",
    "MultiStudy",
    "PenaltySpec",
    "PredictEval",
    "SelectionMetrics",
    "SimConfig",
    "SolverError",
    "SolverOptions",
    "Study",
    "TruthSet",
    "TuneGrid",
    "ValidationError",
    "backtransform_coef",
    "check_kkt",
    "cross_validate",
    "fit",
    "fit_method",
    "fit_path",
    "gen_covariates",
    "gen_replicate",
    "gen_responses",
    "gen_truth",
    "group_prox",
    "km_weights",
    "lambda_max",
    "load_studies",
    "load_study_csv",
    "logrank_stat",
    "loss",
    "loss_gradient",
    "make_folds",
    "make_lambda_grid",
    "make_spec",
    "meta_fit",
    "objective",
    "parse_correlation",
    "penalty_deriv",
    "penalty_value",
    "pooled_fit",
    "predict_eval",
    "repeated_split_eval",
    "rng_stream",
    "run_benchmark",
    "scalar_prox",
    "selection_metrics",
    "sort_order",
    "split_indices",
    "standardize",
    "total_penalty",
    "write_replicate",
    "write_study_csv",
]
