"""Command-line interface.

Three subcommands: ``calibrate`` produces critical values (asymptotic or
bootstrap) as a JSON document, ``monitor`` runs the detector over a stream
CSV and emits one JSON line per observation, and ``simulate`` runs a
Monte-Carlo size/power experiment and writes its report.

Exit codes: 0 success (monitor: alarm raised), 2 invalid inputs or
configuration, 3 numerical failure (non-convergence, singularity,
degenerate bootstrap), 4 monitor finished without an alarm.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

from .asymptotic import critical_value
from .bootstrap import BootstrapConfig, critical_value_schedule
from .detector import (
    AsymptoticThreshold,
    BootstrapSchedule,
    ClosedEnd,
    MonitorConfig,
    OpenEnd,
    initial_state,
    step,
)
from .errors import (
    DegenerateBootstrap,
    DegenerateWindow,
    DomainError,
    EmptySample,
    HorizonExceeded,
    NoConvergence,
    SingularMoments,
)
from .experiments import Scenario, run_power_experiment, run_size_experiment
from .fitting import fit_nls
from .io import (
    ENGINE_VERSION,
    AlarmRecord,
    alarm_to_dict,
    calibration_from_dict,
    calibration_to_dict,
    config_hash,
    read_observations,
    report_csv_row,
    report_to_dict,
    schedule_from_dict,
    schedule_to_dict,
)
from .models import GaussianRegressorLaw, gaussian_moments, get_model

_VALIDATION_ERRORS = (DomainError, EmptySample, DegenerateWindow, HorizonExceeded)
_NUMERIC_ERRORS = (NoConvergence, SingularMoments, DegenerateBootstrap)


def _parse_floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise DomainError(f"expected comma-separated floats, got {text!r}") from exc


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("SEQBREAK_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise DomainError(f"SEQBREAK_SEED must be an integer, got {env!r}") from exc
    return 0


def _emit(doc: dict, out: str | None) -> None:
    text = json.dumps(doc, indent=2)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _load_json(path: str) -> dict:
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise DomainError(f"{path}: expected a JSON object")
    return doc


def _scale_for(args, beta: tuple[float, ...] | None) -> float:
    if args.d is not None:
        return args.d
    if args.model is None:
        raise DomainError("need either --d or --model (optionally with --beta0)")
    model = get_model(args.model)
    if beta is None:
        beta = model.beta_ref
    law = GaussianRegressorLaw(sigma2_x=args.sigma2_x)
    return gaussian_moments(model, law, beta).D


def _check_regressors(x, model) -> None:
    p = 1 if x.ndim == 1 else x.shape[1]
    if p != model.p:
        raise DomainError(f"model {model.name!r} expects {model.p} regressor(s), file has {p}")


def _cmd_calibrate(args) -> int:
    seed = _resolve_seed(args)
    if args.scheme == "asymptotic":
        d = _scale_for(args, _parse_floats(args.beta0) if args.beta0 else None)
        ratio = None
        if args.horizon == "closed":
            if args.t_ratio is None:
                raise DomainError("--horizon closed requires --t-ratio")
            ratio = args.t_ratio
        result = critical_value(
            gamma=args.gamma,
            alpha=args.alpha,
            d=d,
            horizon_ratio=ratio,
            n_reps=args.M if args.M is not None else 50000,
            n_grid=args.grid,
            seed=seed,
        )
        _emit(calibration_to_dict(result), args.out)
        return 0
    # bootstrap
    for name in ("data", "m", "model", "t_m", "L"):
        if getattr(args, name) is None:
            flag = "--t-m" if name == "t_m" else f"--{name}"
            raise DomainError(f"--scheme bootstrap requires {flag}")
    x, y = read_observations(args.data)
    model = get_model(args.model)
    _check_regressors(x, model)
    config = BootstrapConfig(
        block_len=args.L,
        t_m=args.t_m,
        n_reps=args.M if args.M is not None else 2000,
        alpha=args.alpha,
        gamma=args.gamma,
        seed=seed,
        mixing="window" if args.N is not None else "all_past",
        window=args.N,
    )
    sched = critical_value_schedule(x, y, args.m, model, config)
    _emit(schedule_to_dict(sched), args.out)
    return 0


def _cmd_monitor(args) -> int:
    model = get_model(args.model)
    x_h, y_h = read_observations(args.history)
    x_s, y_s = read_observations(args.stream)
    _check_regressors(x_h, model)
    _check_regressors(x_s, model)
    m = y_h.shape[0]

    doc = _load_json(args.critical_values)
    kind = doc.get("kind")
    if kind == "asymptotic":
        calib = calibration_from_dict(doc)
        gamma, alpha = calib.gamma, calib.alpha
        schedule = None
        scheme = AsymptoticThreshold(calib.c_alpha)
        if calib.horizon == "closed":
            cap = math.floor(calib.horizon_ratio * m)
            if y_s.shape[0] > cap:
                raise DomainError(
                    f"stream has {y_s.shape[0]} rows but the closed horizon allows {cap}"
                )
            horizon = ClosedEnd(cap)
        else:
            horizon = OpenEnd()
    elif kind == "bootstrap":
        sched = schedule_from_dict(doc)
        if sched.m != m:
            raise DomainError(f"critical values were built for m={sched.m}, history has m={m}")
        if y_s.shape[0] > sched.t_m:
            raise DomainError(
                f"stream has {y_s.shape[0]} rows but the schedule covers {sched.t_m}"
            )
        gamma, alpha = sched.gamma, sched.alpha
        schedule = sched.c_k
        scheme = BootstrapSchedule(sched.c_k)
        horizon = ClosedEnd(sched.t_m)
    else:
        raise DomainError(f"{args.critical_values}: unknown critical-value kind {kind!r}")

    fit = fit_nls(x_h, y_h, model)
    if fit.sigma2_hat <= 0.0:
        raise DomainError("historical residual variance is zero; cannot scale the detector")
    sigma_hat = math.sqrt(fit.sigma2_hat)
    config = MonitorConfig(gamma=gamma, alpha=alpha, horizon=horizon, scheme=scheme)

    residuals = y_s - model.f(x_s, fit.beta_hat)
    state = initial_state()
    record = None
    for res in residuals:
        state = step(state, float(res), m, sigma_hat, config)
        print(
            json.dumps(
                {
                    "k": state.k,
                    "gamma_stat": state.gamma_stat,
                    "z_running": state.z_running,
                    "alarm": state.alarm,
                }
            )
        )
        if state.alarm and record is None:
            threshold = (
                scheme.c if schedule is None else float(schedule[state.tau_hat - 1])
            )
            record = AlarmRecord(
                k=state.tau_hat,
                gamma_stat=state.gamma_stat,
                threshold=threshold,
                sigma_hat=sigma_hat,
                order=state.tau_hat,
            )
            print(json.dumps({"alarm_record": alarm_to_dict(record)}))
    if args.out:
        payload = {"alarm": record is not None}
        if record is not None:
            payload["alarm_record"] = alarm_to_dict(record)
        payload["seed"] = int(doc.get("seed", 0))
        payload["config_hash"] = config_hash(
            {
                "model": args.model,
                "m": m,
                "n_stream": int(y_s.shape[0]),
                "gamma": gamma,
                "alpha": alpha,
                "kind": kind,
            }
        )
        payload["engine_version"] = ENGINE_VERSION
        with open(args.out, "w") as fh:
            fh.write(json.dumps(payload, indent=2) + "\n")
    return 0 if record is not None else 4


def _cmd_simulate(args) -> int:
    seed = _resolve_seed(args)
    scenario = Scenario(
        model=args.model,
        beta0=_parse_floats(args.beta0),
        m=args.m,
        t_m=args.t_m,
        gamma=args.gamma,
        alpha=args.alpha,
        n_reps=args.reps,
        seed=seed,
        sigma2_eps=args.sigma2_eps,
        sigma2_x=args.sigma2_x,
        beta1=_parse_floats(args.beta1) if args.beta1 else None,
        k0=args.k0,
        scheme=args.scheme,
    )
    if args.scheme == "asymptotic":
        if args.critical_values:
            calibration = calibration_from_dict(_load_json(args.critical_values))
        else:
            model = get_model(args.model)
            law = GaussianRegressorLaw(sigma2_x=args.sigma2_x)
            d = gaussian_moments(model, law, scenario.beta0).D
            calibration = critical_value(
                gamma=args.gamma,
                alpha=args.alpha,
                d=d,
                n_reps=args.calib_reps,
                n_grid=args.calib_grid,
                seed=seed,
            )
    else:
        if args.critical_values:
            calibration = schedule_from_dict(_load_json(args.critical_values))
        else:
            if args.L is None:
                raise DomainError("--scheme bootstrap requires --L")
            calibration = BootstrapConfig(
                block_len=args.L,
                t_m=args.t_m,
                n_reps=args.boot_reps,
                alpha=args.alpha,
                gamma=args.gamma,
                seed=seed,
                mixing="window" if args.N is not None else "all_past",
                window=args.N,
            )
    if scenario.k0 is None:
        report = run_size_experiment(scenario, calibration)
    else:
        report = run_power_experiment(scenario, calibration)
    _emit(report_to_dict(report), args.out)
    if args.out_csv:
        header, row = report_csv_row(report)
        with open(args.out_csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerow(row)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seqbreak",
        description="Sequential monitoring for parameter changes in nonlinear regression.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    cal = sub.add_parser("calibrate", help="compute critical values")
    cal.add_argument("--scheme", choices=("asymptotic", "bootstrap"), required=True)
    cal.add_argument("--gamma", type=float, required=True)
    cal.add_argument("--alpha", type=float, required=True)
    cal.add_argument("--d", type=float, help="scale ratio (asymptotic; overrides --model)")
    cal.add_argument("--model", help="model name used to derive the scale ratio")
    cal.add_argument("--beta0", help="comma-separated parameters for --model")
    cal.add_argument("--sigma2x", "--sigma2-x", type=float, default=1.0, dest="sigma2_x")
    cal.add_argument("--horizon", choices=("open", "closed"), default="open")
    cal.add_argument("--t-ratio", type=float, help="monitoring-to-history length ratio")
    cal.add_argument("--M", type=int, help="replications (default 50000 asymptotic, 2000 bootstrap)")
    cal.add_argument("--grid", type=int, default=8192)
    cal.add_argument("--data", help="history+stream CSV (bootstrap)")
    cal.add_argument("--m", type=int, help="history length within --data (bootstrap)")
    cal.add_argument("--t-m", type=int, dest="t_m", help="monitoring horizon (bootstrap)")
    cal.add_argument("--L", "--block-len", type=int, dest="L", help="bootstrap block length")
    cal.add_argument("--N", type=int, help="mix only the last N blocks (default: all past blocks)")
    cal.add_argument("--seed", type=int)
    cal.add_argument("--out")

    mon = sub.add_parser("monitor", help="run the detector over a stream")
    mon.add_argument("--history", required=True)
    mon.add_argument("--stream", required=True)
    mon.add_argument("--model", required=True)
    mon.add_argument("--critical-values", required=True)
    mon.add_argument("--out")

    sim = sub.add_parser("simulate", help="Monte-Carlo size/power experiment")
    sim.add_argument("--model", required=True)
    sim.add_argument("--beta0", required=True)
    sim.add_argument("--beta1")
    sim.add_argument("--k0", type=int)
    sim.add_argument("--m", type=int, required=True)
    sim.add_argument("--t-m", type=int, dest="t_m", required=True)
    sim.add_argument("--gamma", type=float, required=True)
    sim.add_argument("--alpha", type=float, required=True)
    sim.add_argument("--reps", type=int, required=True)
    sim.add_argument("--sigma2-eps", type=float, default=0.5)
    sim.add_argument("--sigma2-x", type=float, default=1.0)
    sim.add_argument("--scheme", choices=("asymptotic", "bootstrap"), default="asymptotic")
    sim.add_argument("--critical-values")
    sim.add_argument("--calib-reps", type=int, default=20000)
    sim.add_argument("--calib-grid", type=int, default=4096)
    sim.add_argument("--L", "--block-len", type=int, dest="L")
    sim.add_argument("--boot-reps", type=int, default=2000)
    sim.add_argument("--N", type=int, help="mix only the last N blocks (default: all past blocks)")
    sim.add_argument("--seed", type=int)
    sim.add_argument("--out")
    sim.add_argument("--out-csv", dest="out_csv")

    return parser


_HANDLERS = {
    "calibrate": _cmd_calibrate,
    "monitor": _cmd_monitor,
    "simulate": _cmd_simulate,
}


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _HANDLERS[args.command](args)
    except _VALIDATION_ERRORS as exc:
        print(f"seqbreak: {exc}", file=sys.stderr)
        return 2
    except _NUMERIC_ERRORS as exc:
        print(f"seqbreak: numerical failure: {exc}", file=sys.stderr)
        return 3
    except json.JSONDecodeError as exc:
        print(f"seqbreak: invalid JSON: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"seqbreak: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
