"""Gradient boosting for interval-censored survival data.

The event time of interest is never observed exactly: each subject carries a
bracket (L, R] known to contain it, produced by periodic monitoring. This
package turns such brackets into censoring-unbiased pseudo-responses (via a
survival forest and a conditional-moment transform) and fits componentwise
smoothing-spline L2Boost on the result, for both regression on g(Y) and
sign classification of g(Y) against a threshold.
"""

__version__ = "0.1.0"

from .boosting import (
    BoostConfig,
    BoostModel,
    clamp,
    fit_boost,
    load_model,
    predict_boost,
    pure_l2boost_path,
    save_model,
)
from .data import (
    INF,
    Dataset,
    IntervalObservation,
    SurvivorCurve,
    TimeGrid,
    bracket_from_monitoring,
    distinct_endpoint_grid,
    load_dataset,
    save_dataset,
    survivor_eval,
)
from .evalsim import (
    DEFAULT_THRESHOLDS,
    METHODS,
    HeldOutTruth,
    MetricReport,
    SimConfig,
    baseline_responses,
    classification_metrics,
    estimate_noise_variance,
    first_mse_below_noise,
    forest_seed,
    gen_aft,
    naive_surrogate,
    phi_default,
    pseudo_responses,
    replicate_rng,
    report_rows,
    run_replicate_set,
    run_replication,
    skdt,
    smaxae,
    smsqe,
    theoretical_mse,
    verify_improvement_window,
)
from .icrf import IcrfModel, IcrfParams, icrf_fit, predict_survivor, predict_survivor_matrix
from .npmle import TurnbullResult, default_bandwidth, kernel_smooth, turnbull_npmle
from .splines import (
    SmootherMatrix,
    boost_operator,
    build_basis,
    evaluate_spline,
    projection_smoother,
    shrink,
    smoother_matrix,
    solve_lambda_for_df,
)
from .transform import (
    GTransform,
    TransformedResponse,
    cut_loss,
    imp_loss,
    loss_gradient,
    transform_response,
)

__all__ = [
    "INF",
    "BoostConfig",
    "BoostModel",
    "DEFAULT_THRESHOLDS",
    "Dataset",
    "GTransform",
    "HeldOutTruth",
    "IcrfModel",
    "IcrfParams",
    "IntervalObservation",
    "METHODS",
    "MetricReport",
    "SimConfig",
    "SmootherMatrix",
    "SurvivorCurve",
    "TimeGrid",
    "TransformedResponse",
    "TurnbullResult",
    "__version__",
    "baseline_responses",
    "boost_operator",
    "bracket_from_monitoring",
    "build_basis",
    "clamp",
    "classification_metrics",
    "cut_loss",
    "default_bandwidth",
    "distinct_endpoint_grid",
    "estimate_noise_variance",
    "evaluate_spline",
    "first_mse_below_noise",
    "fit_boost",
    "forest_seed",
    "gen_aft",
    "icrf_fit",
    "imp_loss",
    "kernel_smooth",
    "load_dataset",
    "load_model",
    "loss_gradient",
    "naive_surrogate",
    "phi_default",
    "predict_boost",
    "predict_survivor",
    "predict_survivor_matrix",
    "projection_smoother",
    "pseudo_responses",
    "pure_l2boost_path",
    "replicate_rng",
    "report_rows",
    "run_replicate_set",
    "run_replication",
    "save_dataset",
    "save_model",
    "shrink",
    "skdt",
    "smaxae",
    "smoother_matrix",
    "smsqe",
    "solve_lambda_for_df",
    "survivor_eval",
    "theoretical_mse",
    "transform_response",
    "turnbull_npmle",
    "verify_improvement_window",
]
