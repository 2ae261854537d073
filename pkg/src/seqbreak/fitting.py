"""Nonlinear least-squares fitting of the historical window.

Implements a damped Gauss-Newton (Levenberg-Marquardt) solver with analytic
Jacobians and projection onto the model's parameter rectangle, plus the
variance estimators used by the monitor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import DegenerateWindow, DomainError, EmptySample, NoConvergence, SingularMoments
from .models import COND_LIMIT, ModelSpec

__all__ = [
    "Observation",
    "FitOptions",
    "HistoricalFit",
    "fit_nls",
    "sigma2_pooled",
    "residual",
]


@dataclass(frozen=True)
class Observation:
    """A single (regressor, response) pair."""

    x: float
    y: float


@dataclass(frozen=True)
class FitOptions:
    """Solver controls for :func:`fit_nls`.

    ``init`` pins a single explicit starting point; when it is None the
    solver runs ``n_starts`` starts placed on a low-discrepancy (Halton)
    grid inside the parameter rectangle and keeps the best converged fit.
    """

    init: tuple[float, ...] | None = None
    n_starts: int = 8
    grad_tol: float = 1e-10
    max_iter: int = 200
    lm_lambda0: float = 1e-3

    def __post_init__(self) -> None:
        if self.n_starts < 1:
            raise DomainError("n_starts must be at least 1")
        if self.grad_tol <= 0 or self.max_iter < 1 or self.lm_lambda0 <= 0:
            raise DomainError("grad_tol, max_iter and lm_lambda0 must be positive")


@dataclass(frozen=True)
class HistoricalFit:
    """Result of fitting the historical window of length ``m``.

    ``sigma2_hat`` is the residual variance with divisor ``m - q``; ``A_m``
    and ``B_m`` are the sample gradient mean and second-moment matrix at the
    fitted parameter, and ``cond_b`` the condition number of ``B_m``.
    ``on_boundary`` flags a fit that ended pinned to the parameter rectangle.
    """

    m: int
    beta_hat: NDArray[np.float64]
    sigma2_hat: float
    A_m: NDArray[np.float64]
    B_m: NDArray[np.float64]
    residuals: NDArray[np.float64]
    cond_b: float
    on_boundary: bool
    n_iter: int


def _halton(index: int, base: int) -> float:
    """Halton radical-inverse of ``index`` in the given base (index >= 1)."""
    result = 0.0
    frac = 1.0 / base
    i = index
    while i > 0:
        result += frac * (i % base)
        i //= base
        frac /= base
    return result


_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19)


def _multistart_points(box: NDArray[np.float64], n_starts: int) -> NDArray[np.float64]:
    """Low-discrepancy starting points strictly inside the rectangle."""
    q = box.shape[0]
    if q > len(_PRIMES):
        raise DomainError(f"multistart supports at most {len(_PRIMES)} parameters")
    pts = np.empty((n_starts, q))
    for i in range(n_starts):
        for j in range(q):
            u = _halton(i + 1, _PRIMES[j])
            # keep starts off the exact boundary
            u = 0.02 + 0.96 * u
            pts[i, j] = box[j, 0] + u * (box[j, 1] - box[j, 0])
    return pts


def _projected_gradient_norm(
    beta: NDArray[np.float64],
    grad_sse: NDArray[np.float64],
    box: NDArray[np.float64],
) -> float:
    """Sup-norm of the SSE gradient with infeasible directions zeroed."""
    pg = grad_sse.copy()
    at_lo = beta <= box[:, 0]
    at_hi = beta >= box[:, 1]
    pg[at_lo & (pg > 0)] = 0.0
    pg[at_hi & (pg < 0)] = 0.0
    return float(np.max(np.abs(pg))) if pg.size else 0.0


def _lm_single_start(
    x: NDArray[np.float64],
    y: NDArray[np.float64],
    model: ModelSpec,
    start: NDArray[np.float64],
    opts: FitOptions,
) -> tuple[NDArray[np.float64], float, int] | None:
    """Run one damped Gauss-Newton descent; None when it fails to converge."""
    box = model.theta_box
    beta = np.clip(np.asarray(start, dtype=float), box[:, 0], box[:, 1])
    r = y - model.f(x, beta)
    sse = float(r @ r)
    lam = opts.lm_lambda0

    for it in range(1, opts.max_iter + 1):
        jac = np.asarray(model.grad_f(x, beta), dtype=float)
        jtr = jac.T @ r
        if _projected_gradient_norm(beta, -2.0 * jtr, box) <= opts.grad_tol:
            return beta, sse, it - 1
        jtj = jac.T @ jac
        diag = np.diag(jtj).copy()
        diag[diag <= 0.0] = 1.0
        stepped = False
        while lam <= 1e12:
            try:
                delta = np.linalg.solve(jtj + lam * np.diag(diag), jtr)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            cand = np.clip(beta + delta, box[:, 0], box[:, 1])
            r_cand = y - model.f(x, cand)
            sse_cand = float(r_cand @ r_cand)
            if sse_cand < sse:
                beta, r, sse = cand, r_cand, sse_cand
                lam = max(lam * 0.3, 1e-12)
                stepped = True
                break
            lam *= 10.0
        if not stepped:
            # Strict descent has hit the floating-point floor of the SSE.
            # Polish with undamped Gauss-Newton steps (allowed to leave the
            # SSE unchanged up to roundoff) to push the gradient the last
            # few orders of magnitude; still bounded by max_iter.
            return _gn_polish(x, y, model, beta, r, sse, opts, it)

    jac = np.asarray(model.grad_f(x, beta), dtype=float)
    pg = _projected_gradient_norm(beta, -2.0 * (jac.T @ r), box)
    return (beta, sse, opts.max_iter) if pg <= opts.grad_tol else None


def _gn_polish(
    x: NDArray[np.float64],
    y: NDArray[np.float64],
    model: ModelSpec,
    beta: NDArray[np.float64],
    r: NDArray[np.float64],
    sse: float,
    opts: FitOptions,
    used_iters: int,
) -> tuple[NDArray[np.float64], float, int] | None:
    box = model.theta_box
    budget = min(20, opts.max_iter - used_iters)
    it = used_iters
    for _ in range(max(budget, 0)):
        jac = np.asarray(model.grad_f(x, beta), dtype=float)
        if _projected_gradient_norm(beta, -2.0 * (jac.T @ r), box) <= opts.grad_tol:
            return beta, sse, it
        jtj = jac.T @ jac
        diag = np.diag(jtj).copy()
        diag[diag <= 0.0] = 1.0
        try:
            delta = np.linalg.solve(jtj + 1e-12 * np.diag(diag), jac.T @ r)
        except np.linalg.LinAlgError:
            break
        cand = np.clip(beta + delta, box[:, 0], box[:, 1])
        if not np.all(np.isfinite(cand)) or np.array_equal(cand, beta):
            break
        r_cand = y - model.f(x, cand)
        sse_cand = float(r_cand @ r_cand)
        if sse_cand > sse * (1.0 + 1e-13):
            break
        beta, r, sse = cand, r_cand, sse_cand
        it += 1
    jac = np.asarray(model.grad_f(x, beta), dtype=float)
    pg = _projected_gradient_norm(beta, -2.0 * (jac.T @ r), box)
    return (beta, sse, it) if pg <= opts.grad_tol else None


def fit_nls(
    x,
    y,
    model: ModelSpec,
    options: FitOptions | None = None,
) -> HistoricalFit:
    """Fit ``model`` to ``(x, y)`` by damped, box-projected Gauss-Newton.

    Parameters
    ----------
    x, y : array_like
        Observation window; ``len(x) == len(y) = n`` with ``n > q``.
    model : ModelSpec
    options : FitOptions, optional

    Returns
    -------
    HistoricalFit

    Raises
    ------
    DegenerateWindow
        If ``n <= q``.
    NoConvergence
        If no start reaches the projected-gradient tolerance.
    SingularMoments
        If ``B_m`` at the solution has condition number above 1e12.
    """
    opts = options or FitOptions()
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 1 or y.ndim != 1 or x.size != y.size:
        raise DomainError("x and y must be one-dimensional arrays of equal length")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise DomainError("observations must be finite")
    n = x.size
    if n <= model.q:
        raise DegenerateWindow(f"need more than q={model.q} observations, got {n}")

    if opts.init is not None:
        starts = np.asarray(opts.init, dtype=float)[None, :]
        if starts.shape[1] != model.q:
            raise DomainError("init has wrong parameter dimension")
    else:
        starts = _multistart_points(model.theta_box, opts.n_starts)

    best: tuple[NDArray[np.float64], float, int] | None = None
    for start in starts:
        got = _lm_single_start(x, y, model, start, opts)
        if got is not None and (best is None or got[1] < best[1]):
            best = got
    if best is None:
        raise NoConvergence(
            f"no start converged within {opts.max_iter} iterations (model {model.name})"
        )
    beta_hat, sse, n_iter = best

    jac = np.asarray(model.grad_f(x, beta_hat), dtype=float)
    res = y - model.f(x, beta_hat)
    b_mat = (jac.T @ jac) / n
    cond_b = float(np.linalg.cond(b_mat))
    if cond_b > COND_LIMIT:
        raise SingularMoments(
            f"sample moment matrix numerically singular (cond={cond_b:.3e})"
        )
    box = model.theta_box
    on_boundary = bool(np.any(beta_hat <= box[:, 0]) or np.any(beta_hat >= box[:, 1]))
    return HistoricalFit(
        m=n,
        beta_hat=beta_hat,
        sigma2_hat=float(sse / (n - model.q)),
        A_m=jac.mean(axis=0),
        B_m=b_mat,
        residuals=res,
        cond_b=cond_b,
        on_boundary=on_boundary,
        n_iter=n_iter,
    )


def sigma2_pooled(errors) -> float:
    """Mean-centered variance with divisor ``n`` (the pooled-window estimator)."""
    e = np.asarray(errors, dtype=float)
    if e.size == 0:
        raise EmptySample("sigma2_pooled needs at least one value")
    d = e - e.mean()
    return float(d @ d / e.size)


def residual(obs: Observation, model: ModelSpec, beta) -> float:
    """Raw residual ``y - f(x; beta)`` for a single observation."""
    return float(obs.y - model.f(obs.x, np.asarray(beta, dtype=float)))
