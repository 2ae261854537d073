"""Monte-Carlo size/power experiments for the monitoring schemes.

Each replication simulates history and stream from a scenario, fits the
historical window, runs the detector on the out-of-sample residuals, and
records whether and when it alarmed. Replications draw from substreams
derived from ``(seed, rep)``, so results are independent of batching.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

import numpy as np

from .asymptotic import CalibrationResult
from .bootstrap import BootstrapConfig, BootstrapCriticalValues, critical_value_schedule
from .detector import (
    AsymptoticThreshold,
    BootstrapSchedule,
    ClosedEnd,
    MonitorConfig,
    scan_stream,
)
from .errors import (
    DegenerateBootstrap,
    DegenerateWindow,
    DomainError,
    EmptySample,
    NoConvergence,
    SingularMoments,
)
from .fitting import FitOptions, fit_nls
from .models import get_model

__all__ = [
    "Scenario",
    "TauSummary",
    "ExperimentReport",
    "simulate_stream",
    "summarize_tau",
    "run_size_experiment",
    "run_power_experiment",
]

Calibration = "float | CalibrationResult | BootstrapCriticalValues | BootstrapConfig"


@dataclass(frozen=True)
class Scenario:
    """A complete simulation configuration.

    ``beta1``/``k0`` describe the alternative: the stream switches from
    ``beta0`` to ``beta1`` after stream index ``k0`` (the first changed
    observation is ``k0 + 1``). Under the null both are None.
    """

    model: str
    beta0: tuple[float, ...]
    m: int
    t_m: int
    gamma: float
    alpha: float
    n_reps: int
    seed: int
    sigma2_eps: float = 0.5
    sigma2_x: float = 1.0
    beta1: tuple[float, ...] | None = None
    k0: int | None = None
    scheme: str = "asymptotic"

    def __post_init__(self) -> None:
        if self.m < 1 or self.t_m < 1 or self.n_reps < 1:
            raise DomainError("m, t_m and n_reps must be at least 1")
        if not 0.0 <= self.gamma < 0.5:
            raise DomainError(f"gamma must lie in [0, 0.5), got {self.gamma}")
        if not 0.0 < self.alpha < 1.0:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.sigma2_eps < 0 or self.sigma2_x <= 0:
            raise DomainError("sigma2_eps must be >= 0 and sigma2_x > 0")
        if self.k0 is not None and not 1 <= self.k0 <= self.t_m:
            raise DomainError(f"k0 must lie in [1, t_m], got {self.k0}")
        if self.scheme not in ("asymptotic", "bootstrap"):
            raise DomainError(f"scheme must be 'asymptotic' or 'bootstrap', got {self.scheme!r}")


@dataclass(frozen=True)
class TauSummary:
    """Five-number summary of detection times (lower-interpolation quartiles)."""

    min: float
    q2: float
    mean: float
    q3: float
    max: float


@dataclass(frozen=True)
class ExperimentReport:
    """Outcome of a size or power experiment.

    ``empirical_rate`` is the alarm fraction among valid replications
    (failed fits are excluded and counted in ``n_failed``). ``taus`` holds
    the detection time of every alarming replication, in replication order.
    ``runtime_s`` is wall-clock and deliberately excluded from equality
    comparisons of reproduced runs.
    """

    kind: str
    scenario: Scenario
    n_reps: int
    n_valid: int
    n_failed: int
    n_alarms: int
    n_no_detect: int
    empirical_rate: float
    tau_summary: TauSummary | None
    taus: tuple[int, ...]
    alarms: tuple[bool, ...]
    failed_reps: tuple[int, ...]
    runtime_s: float


def simulate_stream(scenario: Scenario, rep_index: int):
    """Draw one replication's history and stream.

    Returns ``(x_hist, y_hist, x_stream, y_stream)``. The generator is
    seeded by ``(scenario.seed, rep_index)``, and the four blocks are drawn
    in that fixed order, so every replication is reproducible in isolation.
    """
    if rep_index < 0:
        raise DomainError(f"rep_index must be nonnegative, got {rep_index}")
    model = get_model(scenario.model)
    b0 = np.asarray(scenario.beta0, dtype=float)
    rng = np.random.default_rng((scenario.seed, rep_index))
    sx = math.sqrt(scenario.sigma2_x)
    se = math.sqrt(scenario.sigma2_eps)

    x_hist = rng.normal(0.0, sx, scenario.m)
    eps_hist = rng.normal(0.0, se, scenario.m)
    y_hist = model.f(x_hist, b0) + eps_hist

    x_stream = rng.normal(0.0, sx, scenario.t_m)
    eps_stream = rng.normal(0.0, se, scenario.t_m)
    y_stream = model.f(x_stream, b0) + eps_stream
    if scenario.k0 is not None and scenario.beta1 is not None and scenario.k0 < scenario.t_m:
        b1 = np.asarray(scenario.beta1, dtype=float)
        tail = slice(scenario.k0, None)
        y_stream[tail] = model.f(x_stream[tail], b1) + eps_stream[tail]
    return x_hist, y_hist, x_stream, y_stream


def summarize_tau(taus) -> TauSummary:
    """Five-number summary with lower-interpolation median and quartile."""
    arr = np.asarray(taus, dtype=float)
    if arr.size == 0:
        raise EmptySample("summarize_tau needs at least one detection time")
    return TauSummary(
        min=float(arr.min()),
        q2=float(np.quantile(arr, 0.5, method="lower")),
        mean=float(arr.mean()),
        q3=float(np.quantile(arr, 0.75, method="lower")),
        max=float(arr.max()),
    )


def _scheme_for_rep(scenario, calibration, x_all, y_all, model, rep_index, fit_options):
    """Resolve the calibration argument into a detector scheme for one rep."""
    if isinstance(calibration, BootstrapConfig):
        rep_seed = int(np.random.SeedSequence((scenario.seed, rep_index, 0xB007)).generate_state(1)[0])
        schedule = critical_value_schedule(
            x_all, y_all, scenario.m, model, replace(calibration, seed=rep_seed), fit_options
        )
        return BootstrapSchedule(schedule.c_k)
    if isinstance(calibration, BootstrapCriticalValues):
        return BootstrapSchedule(calibration.c_k)
    if isinstance(calibration, CalibrationResult):
        return AsymptoticThreshold(calibration.c_alpha)
    return AsymptoticThreshold(float(calibration))


def _validate_calibration(scenario: Scenario, calibration) -> None:
    if isinstance(calibration, (BootstrapConfig, BootstrapCriticalValues)):
        if scenario.scheme != "bootstrap":
            raise DomainError("bootstrap calibration requires scenario.scheme == 'bootstrap'")
        if calibration.t_m != scenario.t_m:
            raise DomainError(
                f"calibration horizon {calibration.t_m} != scenario horizon {scenario.t_m}"
            )
        if calibration.gamma != scenario.gamma or calibration.alpha != scenario.alpha:
            raise DomainError("calibration (gamma, alpha) must match the scenario")
        if isinstance(calibration, BootstrapCriticalValues) and calibration.m != scenario.m:
            raise DomainError(f"calibration m {calibration.m} != scenario m {scenario.m}")
    else:
        if scenario.scheme != "asymptotic":
            raise DomainError("scalar calibration requires scenario.scheme == 'asymptotic'")
        if isinstance(calibration, CalibrationResult) and (
            calibration.gamma != scenario.gamma or calibration.alpha != scenario.alpha
        ):
            raise DomainError("calibration (gamma, alpha) must match the scenario")


def _run_experiment(
    scenario: Scenario,
    calibration,
    kind: str,
    fit_options: FitOptions | None,
) -> ExperimentReport:
    t0 = time.perf_counter()
    _validate_calibration(scenario, calibration)
    model = get_model(scenario.model)

    alarms: list[bool] = []
    taus: list[int] = []
    failed: list[int] = []
    for r in range(scenario.n_reps):
        x_h, y_h, x_s, y_s = simulate_stream(scenario, r)
        try:
            fit = fit_nls(x_h, y_h, model, fit_options)
            if fit.sigma2_hat <= 0.0:
                raise DegenerateWindow("historical residual variance is zero")
            scheme = _scheme_for_rep(
                scenario,
                calibration,
                np.concatenate([x_h, x_s]),
                np.concatenate([y_h, y_s]),
                model,
                r,
                fit_options,
            )
        except (NoConvergence, SingularMoments, DegenerateWindow, DegenerateBootstrap):
            failed.append(r)
            continue
        config = MonitorConfig(
            gamma=scenario.gamma,
            alpha=scenario.alpha,
            horizon=ClosedEnd(scenario.t_m),
            scheme=scheme,
        )
        res_stream = y_s - model.f(x_s, fit.beta_hat)
        state = scan_stream(res_stream, scenario.m, math.sqrt(fit.sigma2_hat), config)
        alarms.append(state.alarm)
        if state.alarm:
            taus.append(int(state.tau_hat))

    n_valid = scenario.n_reps - len(failed)
    if n_valid == 0:
        raise EmptySample("every replication failed to fit")
    n_alarms = sum(alarms)
    return ExperimentReport(
        kind=kind,
        scenario=scenario,
        n_reps=scenario.n_reps,
        n_valid=n_valid,
        n_failed=len(failed),
        n_alarms=n_alarms,
        n_no_detect=n_valid - n_alarms,
        empirical_rate=n_alarms / n_valid,
        tau_summary=summarize_tau(taus) if taus else None,
        taus=tuple(taus),
        alarms=tuple(alarms),
        failed_reps=tuple(failed),
        runtime_s=time.perf_counter() - t0,
    )


def run_size_experiment(
    scenario: Scenario,
    calibration,
    fit_options: FitOptions | None = None,
) -> ExperimentReport:
    """Empirical false-alarm rate under the null (``k0`` must be absent)."""
    if scenario.k0 is not None or scenario.beta1 is not None:
        raise DomainError("size experiments need a null scenario (k0=None, beta1=None)")
    return _run_experiment(scenario, calibration, "size", fit_options)


def run_power_experiment(
    scenario: Scenario,
    calibration,
    fit_options: FitOptions | None = None,
) -> ExperimentReport:
    """Alarm rate and detection-time summary under a parameter change.

    Replications that never alarm are excluded from the time summary and
    counted in ``n_no_detect``.
    """
    if scenario.k0 is None or scenario.beta1 is None:
        raise DomainError("power experiments need k0 and beta1")
    return _run_experiment(scenario, calibration, "power", fit_options)
