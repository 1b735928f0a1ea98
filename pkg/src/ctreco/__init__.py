"""Cross-temporal forecast reconciliation toolkit."""

__version__ = "0.1.0"

from ctreco.covariance import (
    CovarianceMatrix,
    CovarianceSpec,
    build_omega,
    parameter_count,
    shrinkage_intensity,
)
from ctreco.exceptions import NumericalError, ValidationError
from ctreco.hierarchy import (
    CrossSectionalStructure,
    CrossTemporalStructure,
    TemporalStructure,
    build_cross_sectional,
    build_cross_temporal,
    build_temporal,
    stack_window,
    temporally_aggregate,
)
from ctreco.models import ARModel, fit_ar, fitted_multistep, forecast, simulate_path
from ctreco.probabilistic import (
    ForecastSample,
    GaussianForecast,
    ctjb_sample,
    gaussian_reconcile,
    reconcile_sample,
    sample_gaussian,
)
from ctreco.reconcile import (
    ReconciliationMap,
    bottom_up,
    build_projection,
    build_projection_structural,
    partly_bottom_up,
    reconcile_point,
    set_negative_to_zero,
)
from ctreco.residuals import (
    ResidualSet,
    aggregate_levels,
    assemble_multistep,
    assemble_onestep,
    assemble_overlapping,
    fit_level_models,
    overlapping_series,
)
from ctreco.scoring import (
    ScoreRaw,
    ScoreReport,
    crps,
    energy_score,
    frobenius_gap,
    mcb_nemenyi,
    relative_indices,
    score_draws,
)
from ctreco.simulation import SimulationConfig, run_study, simulate_dgp, true_covariance

__all__ = [
    "__version__",
    "ARModel",
    "CovarianceMatrix",
    "CovarianceSpec",
    "CrossSectionalStructure",
    "CrossTemporalStructure",
    "ForecastSample",
    "GaussianForecast",
    "NumericalError",
    "ReconciliationMap",
    "ResidualSet",
    "ScoreRaw",
    "ScoreReport",
    "SimulationConfig",
    "TemporalStructure",
    "ValidationError",
    "aggregate_levels",
    "assemble_multistep",
    "assemble_onestep",
    "assemble_overlapping",
    "bottom_up",
    "build_cross_sectional",
    "build_cross_temporal",
    "build_omega",
    "build_projection",
    "build_projection_structural",
    "build_temporal",
    "crps",
    "ctjb_sample",
    "energy_score",
    "fit_ar",
    "fit_level_models",
    "fitted_multistep",
    "forecast",
    "frobenius_gap",
    "gaussian_reconcile",
    "mcb_nemenyi",
    "overlapping_series",
    "parameter_count",
    "partly_bottom_up",
    "reconcile_point",
    "reconcile_sample",
    "relative_indices",
    "run_study",
    "sample_gaussian",
    "score_draws",
    "set_negative_to_zero",
    "shrinkage_intensity",
    "simulate_dgp",
    "simulate_path",
    "stack_window",
    "temporally_aggregate",
    "true_covariance",
]
