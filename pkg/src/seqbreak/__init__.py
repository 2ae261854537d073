"""Sequential detection of parameter changes in nonlinear regression.

Fit a parametric regression on a fixed historical window, then monitor
incoming observations through a weighted cumulative-sum detector whose
critical values come either from a simulated limit law or from a block
bootstrap of the fitted residuals.
"""

from .asymptotic import (
    CalibrationResult,
    WienerGrid,
    critical_value,
    sample_wiener_sup,
    uniform_grid,
    upper_quantile,
    weighted_sup,
)
from .bootstrap import (
    BlockData,
    BootstrapConfig,
    BootstrapCriticalValues,
    bootstrap_variance,
    critical_value_schedule,
    draw_bootstrap_errors,
    linearized_cusum,
    mix_block_quantiles,
    sample_block_sup,
    sample_block_sups,
    window_correction,
)
from .detector import (
    AsymptoticThreshold,
    BootstrapSchedule,
    ClosedEnd,
    DetectorState,
    MonitorConfig,
    OpenEnd,
    boundary,
    drift_ratio_bound,
    initial_state,
    scan_stream,
    step,
    sup_statistic,
)
from .errors import (
    DegenerateBootstrap,
    DegenerateWindow,
    DomainError,
    EmptySample,
    HorizonExceeded,
    NoConvergence,
    SeqbreakError,
    SingularMoments,
)
from .experiments import (
    ExperimentReport,
    Scenario,
    TauSummary,
    run_power_experiment,
    run_size_experiment,
    simulate_stream,
    summarize_tau,
)
from .fitting import FitOptions, HistoricalFit, Observation, fit_nls, residual, sigma2_pooled
from .io import (
    AlarmRecord,
    alarm_to_dict,
    calibration_from_dict,
    calibration_to_dict,
    config_hash,
    read_observations,
    report_to_dict,
    schedule_from_dict,
    schedule_to_dict,
    write_observations,
)
from .models import (
    GaussianRegressorLaw,
    ModelSpec,
    PopulationMoments,
    compartmental_model,
    gaussian_moments,
    get_model,
    growth_model,
    scale_from_moments,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # errors
    "SeqbreakError",
    "DomainError",
    "SingularMoments",
    "NoConvergence",
    "DegenerateWindow",
    "HorizonExceeded",
    "DegenerateBootstrap",
    "EmptySample",
    # models
    "ModelSpec",
    "GaussianRegressorLaw",
    "PopulationMoments",
    "growth_model",
    "compartmental_model",
    "get_model",
    "gaussian_moments",
    "scale_from_moments",
    # fitting
    "Observation",
    "FitOptions",
    "HistoricalFit",
    "fit_nls",
    "residual",
    "sigma2_pooled",
    # detector
    "OpenEnd",
    "ClosedEnd",
    "AsymptoticThreshold",
    "BootstrapSchedule",
    "MonitorConfig",
    "DetectorState",
    "initial_state",
    "boundary",
    "drift_ratio_bound",
    "step",
    "scan_stream",
    "sup_statistic",
    # asymptotic calibration
    "WienerGrid",
    "CalibrationResult",
    "uniform_grid",
    "weighted_sup",
    "sample_wiener_sup",
    "upper_quantile",
    "critical_value",
    # bootstrap calibration
    "BlockData",
    "BootstrapConfig",
    "BootstrapCriticalValues",
    "window_correction",
    "linearized_cusum",
    "draw_bootstrap_errors",
    "bootstrap_variance",
    "sample_block_sup",
    "sample_block_sups",
    "mix_block_quantiles",
    "critical_value_schedule",
    # experiments
    "Scenario",
    "TauSummary",
    "ExperimentReport",
    "simulate_stream",
    "summarize_tau",
    "run_size_experiment",
    "run_power_experiment",
    # io
    "AlarmRecord",
    "read_observations",
    "write_observations",
    "config_hash",
    "calibration_to_dict",
    "calibration_from_dict",
    "schedule_to_dict",
    "schedule_from_dict",
    "alarm_to_dict",
    "report_to_dict",
]
