"""Weighted-CUSUM sequential detector.

The monitor accumulates out-of-sample residuals, normalizes the running sum
by a curved boundary function, and raises a sticky alarm the first time the
normalized statistic crosses its calibrated threshold. Both a streaming API
(:func:`step`) and an exactly-equivalent batch replay (:func:`scan_stream`,
:func:`sup_statistic`) are provided.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from numpy.typing import NDArray

from .errors import DomainError, HorizonExceeded

__all__ = [
    "OpenEnd",
    "ClosedEnd",
    "AsymptoticThreshold",
    "BootstrapSchedule",
    "MonitorConfig",
    "DetectorState",
    "boundary",
    "drift_ratio_bound",
    "initial_state",
    "step",
    "scan_stream",
    "sup_statistic",
]


@dataclass(frozen=True)
class OpenEnd:
    """Monitoring continues indefinitely."""


@dataclass(frozen=True)
class ClosedEnd:
    """Monitoring stops after ``t_m`` stream observations."""

    t_m: int

    def __post_init__(self) -> None:
        if self.t_m < 1:
            raise DomainError(f"closed-end horizon must be at least 1, got {self.t_m}")


@dataclass(frozen=True)
class AsymptoticThreshold:
    """Single threshold ``c``; alarm when the normalized statistic is >= c.

    ``c = 0`` (always alarm) and very large sentinels are legal: the value
    only ever sits on the right of a comparison.
    """

    c: float

    def __post_init__(self) -> None:
        if math.isnan(self.c) or self.c < 0:
            raise DomainError(f"threshold must be nonnegative, got {self.c}")


@dataclass(frozen=True)
class BootstrapSchedule:
    """Per-step thresholds ``c_k``; alarm when statistic / (sigma * c_k) > 1."""

    c_k: NDArray[np.float64]

    def __post_init__(self) -> None:
        arr = np.asarray(self.c_k, dtype=float)
        if arr.ndim != 1 or arr.size < 1:
            raise DomainError("c_k must be a nonempty one-dimensional array")
        if not np.all(arr > 0):
            raise DomainError("bootstrap thresholds must be strictly positive")
        object.__setattr__(self, "c_k", arr)


@dataclass(frozen=True)
class MonitorConfig:
    """Full detector configuration.

    A bootstrap schedule requires a closed-end horizon whose length equals
    the schedule length, since there is one threshold per stream index.
    """

    gamma: float
    alpha: float
    horizon: OpenEnd | ClosedEnd
    scheme: AsymptoticThreshold | BootstrapSchedule

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma < 0.5:
            raise DomainError(f"gamma must lie in [0, 0.5), got {self.gamma}")
        if not 0.0 < self.alpha < 1.0:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")
        if isinstance(self.scheme, BootstrapSchedule):
            if not isinstance(self.horizon, ClosedEnd):
                raise DomainError("a bootstrap schedule requires a closed-end horizon")
            if self.scheme.c_k.size != self.horizon.t_m:
                raise DomainError(
                    f"schedule length {self.scheme.c_k.size} != horizon {self.horizon.t_m}"
                )


@dataclass(frozen=True)
class DetectorState:
    """Immutable monitor state after ``k`` stream observations.

    ``cum_sum`` is always the plain sum of every residual fed so far, and
    ``z_running`` the running supremum of the normalized statistic; both stay
    live after an alarm so a full replay matches the batch computation
    exactly. ``gamma_stat`` and ``tau_hat`` freeze at the alarm.
    """

    k: int
    cum_sum: float
    gamma_stat: float
    z_running: float
    alarm: bool
    tau_hat: int | None


def initial_state() -> DetectorState:
    """State before any stream observation has been consumed."""
    return DetectorState(
        k=0, cum_sum=0.0, gamma_stat=0.0, z_running=0.0, alarm=False, tau_hat=None
    )


def boundary(m: int, k, gamma: float):
    """Curved normalization boundary ``g(m, k, gamma)``.

    Computed in the numerically stable product form
    ``m**-0.5 * (m + k)**(1 - gamma) * k**gamma``, which is algebraically
    identical to ``sqrt(m) * (1 + k/m) * (k / (k + m))**gamma`` but avoids
    the intermediate ratios that underflow for extreme ``k/m``.

    Parameters
    ----------
    m : int
        Historical window length, at least 1.
    k : int or ndarray
        Stream index (1-based); vectorized over arrays.
    gamma : float
        Curvature exponent in ``[0, 0.5)``.
    """
    if m < 1:
        raise DomainError(f"m must be at least 1, got {m}")
    if not 0.0 <= gamma < 0.5:
        raise DomainError(f"gamma must lie in [0, 0.5), got {gamma}")
    k_arr = np.asarray(k, dtype=float)
    if np.any(k_arr < 1):
        raise DomainError("stream index k must be at least 1")
    return m ** -0.5 * (m + k_arr) ** (1.0 - gamma) * k_arr**gamma


def drift_ratio_bound(m: int, gamma: float, k_max: int) -> float:
    """Largest value of ``k * m**-0.5 / g(m, k, gamma)`` for ``k <= k_max``.

    Equals ``(k_max / (m + k_max))**(1 - gamma)``; always in ``(0, 1]`` and
    increasing in ``k_max``, which is what makes open-end monitoring's
    asymptotics uniform in the horizon.
    """
    if k_max < 1:
        raise DomainError(f"k_max must be at least 1, got {k_max}")
    if m < 1:
        raise DomainError(f"m must be at least 1, got {m}")
    if not 0.0 <= gamma < 0.5:
        raise DomainError(f"gamma must lie in [0, 0.5), got {gamma}")
    return float((k_max / (m + k_max)) ** (1.0 - gamma))


def _boundary_per_step(m: int, n: int, gamma: float) -> NDArray[np.float64]:
    """Boundary values for k = 1..n via the scalar code path.

    Vectorized ``**`` can take a SIMD code path whose last bit differs from
    the scalar one, which would break the bit-for-bit batch/streaming
    replay contract; evaluating per index keeps both paths identical.
    """
    return np.array([float(boundary(m, k, gamma)) for k in range(1, n + 1)])


def _crossed(ratio_to_sigma: float, k: int, scheme) -> bool:
    if isinstance(scheme, AsymptoticThreshold):
        return ratio_to_sigma >= scheme.c
    return ratio_to_sigma / scheme.c_k[k - 1] > 1.0


def step(
    state: DetectorState,
    res: float,
    m: int,
    sigma_hat: float,
    config: MonitorConfig,
) -> DetectorState:
    """Consume one stream residual and return the next state.

    Raises
    ------
    HorizonExceeded
        If a closed-end monitor is stepped past its horizon.
    DomainError
        If ``sigma_hat`` is not strictly positive or ``res`` is not finite.
    """
    if not (math.isfinite(sigma_hat) and sigma_hat > 0):
        raise DomainError(f"sigma_hat must be finite and positive, got {sigma_hat}")
    if not math.isfinite(res):
        raise DomainError(f"residual must be finite, got {res}")
    k = state.k + 1
    if isinstance(config.horizon, ClosedEnd) and k > config.horizon.t_m:
        raise HorizonExceeded(f"stepping to k={k} past closed horizon {config.horizon.t_m}")

    cum = state.cum_sum + res
    live = abs(cum) / float(boundary(m, k, config.gamma))
    ratio = live / sigma_hat
    z = ratio if ratio > state.z_running else state.z_running

    if state.alarm:
        return replace(state, k=k, cum_sum=cum, z_running=z)
    if _crossed(ratio, k, config.scheme):
        return DetectorState(
            k=k, cum_sum=cum, gamma_stat=live, z_running=z, alarm=True, tau_hat=k
        )
    return DetectorState(
        k=k, cum_sum=cum, gamma_stat=live, z_running=z, alarm=False, tau_hat=None
    )


def scan_stream(
    residuals,
    m: int,
    sigma_hat: float,
    config: MonitorConfig,
) -> DetectorState:
    """Replay a whole residual stream at once.

    Bit-for-bit equivalent to folding :func:`step` over the stream: the
    cumulative sum, per-step boundary values, and division order match the
    streaming arithmetic exactly.
    """
    res = np.asarray(residuals, dtype=float)
    if res.ndim != 1:
        raise DomainError("residual stream must be one-dimensional")
    if res.size == 0:
        return initial_state()
    if not (math.isfinite(sigma_hat) and sigma_hat > 0):
        raise DomainError(f"sigma_hat must be finite and positive, got {sigma_hat}")
    if not np.all(np.isfinite(res)):
        raise DomainError("residuals must be finite")
    n = res.size
    if isinstance(config.horizon, ClosedEnd) and n > config.horizon.t_m:
        raise HorizonExceeded(f"stream of length {n} exceeds closed horizon {config.horizon.t_m}")

    cum = np.cumsum(res)
    live = np.abs(cum) / _boundary_per_step(m, n, config.gamma)
    ratio = live / sigma_hat
    if isinstance(config.scheme, AsymptoticThreshold):
        hits = ratio >= config.scheme.c
    else:
        hits = ratio / config.scheme.c_k[:n] > 1.0

    z = float(np.max(ratio))
    idx = int(np.argmax(hits)) if bool(np.any(hits)) else None
    if idx is None:
        return DetectorState(
            k=n,
            cum_sum=float(cum[-1]),
            gamma_stat=float(live[-1]),
            z_running=z,
            alarm=False,
            tau_hat=None,
        )
    return DetectorState(
        k=n,
        cum_sum=float(cum[-1]),
        gamma_stat=float(live[idx]),
        z_running=z,
        alarm=True,
        tau_hat=idx + 1,
    )


def sup_statistic(
    residuals,
    m: int,
    sigma_hat: float,
    gamma: float,
    t_m: int | None = None,
) -> float:
    """Batch supremum statistic of a complete residual record.

    Equals ``z_running`` after replaying the same record through
    :func:`step` (bit for bit). ``t_m``, when given, asserts the record
    length.
    """
    res = np.asarray(residuals, dtype=float)
    if t_m is not None and res.size != t_m:
        raise DomainError(f"record length {res.size} != declared horizon {t_m}")
    if res.size == 0:
        raise DomainError("sup_statistic needs a nonempty record")
    if not (math.isfinite(sigma_hat) and sigma_hat > 0):
        raise DomainError(f"sigma_hat must be finite and positive, got {sigma_hat}")
    cum = np.cumsum(res)
    ratio = np.abs(cum) / _boundary_per_step(m, res.size, gamma) / sigma_hat
    return float(np.max(ratio))
