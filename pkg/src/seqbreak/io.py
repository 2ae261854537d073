"""Serialization: observation CSV files and JSON result documents.

Every JSON document embeds the seed it was produced from, a hash of its
configuration, and the engine version, so results can be traced back to
the exact run that produced them.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass

import numpy as np

from .asymptotic import CalibrationResult
from .bootstrap import BootstrapCriticalValues
from .errors import DomainError
from .experiments import ExperimentReport, Scenario, TauSummary

__all__ = [
    "AlarmRecord",
    "read_observations",
    "write_observations",
    "config_hash",
    "calibration_to_dict",
    "calibration_from_dict",
    "schedule_to_dict",
    "schedule_from_dict",
    "alarm_to_dict",
    "report_csv_row",
    "report_to_dict",
]

ENGINE_VERSION = "0.1.0"


@dataclass(frozen=True)
class AlarmRecord:
    """What the monitor knew at the moment it raised an alarm.

    ``order`` is the 1-based ingestion index of the triggering observation
    (identical to ``k`` for a single stream, kept separate so merged
    streams can preserve arrival order).
    """

    k: int
    gamma_stat: float
    threshold: float
    sigma_hat: float
    order: int


def read_observations(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a regression sample from CSV with header ``x1,...,xp,y``.

    Returns ``(x, y)`` where ``x`` has shape ``(n,)`` for one regressor and
    ``(n, p)`` otherwise. Any schema violation raises ``DomainError``.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DomainError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if len(header) < 2 or header[-1] != "y":
        raise DomainError(f"{path}: expected header x1,...,xp,y, got {header}")
    p = len(header) - 1
    if header[:-1] != [f"x{i + 1}" for i in range(p)]:
        raise DomainError(f"{path}: expected header x1,...,xp,y, got {header}")
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != p + 1:
            raise DomainError(f"{path}:{lineno}: expected {p + 1} fields, got {len(row)}")
        try:
            data.append([float(v) for v in row])
        except ValueError as exc:
            raise DomainError(f"{path}:{lineno}: non-numeric value") from exc
    if not data:
        raise DomainError(f"{path}: no data rows")
    arr = np.asarray(data, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{path}: non-finite values")
    x = arr[:, 0] if p == 1 else arr[:, :p]
    return x, arr[:, -1]


def write_observations(path, x, y) -> None:
    """Write a regression sample as CSV (17 significant digits)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    cols = x.reshape(-1, 1) if x.ndim == 1 else x
    if cols.ndim != 2 or y.ndim != 1 or cols.shape[0] != y.shape[0]:
        raise DomainError("x and y must hold the same number of observations")
    p = cols.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i + 1}" for i in range(p)] + ["y"])
        for xi, yi in zip(cols, y):
            writer.writerow([f"{v:.17g}" for v in xi] + [f"{yi:.17g}"])


def config_hash(config: dict) -> str:
    """SHA-256 of the canonical (sorted-key, compact) JSON encoding."""
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def _stamp(doc: dict, config: dict, seed: int) -> dict:
    doc["seed"] = int(seed)
    doc["config_hash"] = config_hash(config)
    doc["engine_version"] = ENGINE_VERSION
    return doc


def calibration_to_dict(result: CalibrationResult) -> dict:
    config = {
        "gamma": result.gamma,
        "alpha": result.alpha,
        "d": result.d,
        "horizon": result.horizon,
        "horizon_ratio": result.horizon_ratio,
        "n_reps": result.n_reps,
        "n_grid": result.n_grid,
        "seed": result.seed,
    }
    doc = {"kind": "asymptotic", **config}
    doc["c_alpha"] = result.c_alpha
    doc["standard_error"] = result.standard_error
    return _stamp(doc, config, result.seed)


def calibration_from_dict(doc: dict) -> CalibrationResult:
    if doc.get("kind") != "asymptotic":
        raise DomainError(f"expected kind 'asymptotic', got {doc.get('kind')!r}")
    try:
        return CalibrationResult(
            gamma=float(doc["gamma"]),
            alpha=float(doc["alpha"]),
            d=float(doc["d"]),
            horizon=str(doc["horizon"]),
            horizon_ratio=None if doc["horizon_ratio"] is None else float(doc["horizon_ratio"]),
            n_reps=int(doc["n_reps"]),
            n_grid=int(doc["n_grid"]),
            seed=int(doc["seed"]),
            c_alpha=float(doc["c_alpha"]),
            standard_error=float(doc["standard_error"]),
        )
    except KeyError as exc:
        raise DomainError(f"calibration document missing field {exc}") from exc


def schedule_to_dict(sched: BootstrapCriticalValues) -> dict:
    config = {
        "m": sched.m,
        "t_m": sched.t_m,
        "block_len": sched.block_len,
        "mixing": sched.mixing,
        "window": sched.window,
        "n_reps": sched.n_reps,
        "alpha": sched.alpha,
        "gamma": sched.gamma,
        "seed": sched.seed,
    }
    doc = {"kind": "bootstrap", **config}
    doc["c_k"] = [float(v) for v in sched.c_k]
    doc["block_means"] = [float(v) for v in sched.block_means]
    return _stamp(doc, config, sched.seed)


def schedule_from_dict(doc: dict) -> BootstrapCriticalValues:
    if doc.get("kind") != "bootstrap":
        raise DomainError(f"expected kind 'bootstrap', got {doc.get('kind')!r}")
    try:
        return BootstrapCriticalValues(
            m=int(doc["m"]),
            t_m=int(doc["t_m"]),
            block_len=int(doc["block_len"]),
            mixing=str(doc["mixing"]),
            window=None if doc["window"] is None else int(doc["window"]),
            n_reps=int(doc["n_reps"]),
            alpha=float(doc["alpha"]),
            gamma=float(doc["gamma"]),
            seed=int(doc["seed"]),
            c_k=np.asarray(doc["c_k"], dtype=float),
            block_means=np.asarray(doc["block_means"], dtype=float),
        )
    except KeyError as exc:
        raise DomainError(f"schedule document missing field {exc}") from exc


def alarm_to_dict(record: AlarmRecord) -> dict:
    return {
        "k": record.k,
        "gamma_stat": record.gamma_stat,
        "threshold": record.threshold,
        "sigma_hat": record.sigma_hat,
        "order": record.order,
    }


def report_csv_row(report: ExperimentReport) -> tuple[list[str], list[str]]:
    """One-row CSV form of a report (header, row), one metric per column."""
    s = report.scenario
    t = report.tau_summary
    header = [
        "model", "m", "t_m", "gamma", "alpha", "scheme", "kind", "seed",
        "n_reps", "n_valid", "n_failed", "n_alarms", "n_no_detect",
        "empirical_rate", "tau_min", "tau_q2", "tau_mean", "tau_q3", "tau_max",
    ]
    row = [
        s.model, str(s.m), str(s.t_m), f"{s.gamma:.17g}", f"{s.alpha:.17g}",
        s.scheme, report.kind, str(s.seed),
        str(report.n_reps), str(report.n_valid), str(report.n_failed),
        str(report.n_alarms), str(report.n_no_detect),
        f"{report.empirical_rate:.17g}",
    ] + (
        ["", "", "", "", ""]
        if t is None
        else [f"{v:.17g}" for v in (t.min, t.q2, t.mean, t.q3, t.max)]
    )
    return header, row


def report_to_dict(report: ExperimentReport) -> dict:
    """Flatten an experiment report (scenario nested, runtime kept separate)."""
    scenario = asdict(report.scenario)
    doc = {
        "kind": report.kind,
        "scenario": scenario,
        "n_reps": report.n_reps,
        "n_valid": report.n_valid,
        "n_failed": report.n_failed,
        "n_alarms": report.n_alarms,
        "n_no_detect": report.n_no_detect,
        "empirical_rate": report.empirical_rate,
        "tau_summary": None if report.tau_summary is None else asdict(report.tau_summary),
        "taus": list(report.taus),
        "failed_reps": list(report.failed_reps),
        "runtime_s": report.runtime_s,
    }
    return _stamp(doc, scenario, report.scenario.seed)
