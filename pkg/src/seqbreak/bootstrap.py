"""Data-driven threshold schedules by residual resampling.

Instead of a single asymptotic threshold, the bootstrap scheme builds a
piecewise-constant schedule ``c_k`` over the monitoring horizon. The stream
is cut into blocks of length ``block_len``; at each block boundary the model
is refit on everything observed so far, residuals are resampled with
replacement, and a linearized version of the monitor statistic is replayed
on the resampled errors. Upper quantiles of mixtures of these block
statistics give the thresholds.

The linearization replaces the refitted-parameter deviation with its
influence expansion: a gradient window term (:func:`window_correction`)
scaled by the historical moment matrices. This keeps each resample draw a
cheap linear pass instead of a nonlinear refit.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from numpy.typing import NDArray

from .detector import boundary
from .errors import DegenerateBootstrap, DomainError, NoConvergence, SingularMoments
from .fitting import FitOptions, HistoricalFit, fit_nls
from .models import ModelSpec
from .asymptotic import upper_quantile

__all__ = [
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
]


@dataclass(frozen=True)
class BlockData:
    """Everything a block's resampling pass needs.

    ``residuals`` and ``grads`` come from the refit on observations
    ``1..m+k`` (gradients evaluated at the refit parameter), while ``b_mat``
    and ``d_a`` stay pinned to the historical fit on ``1..m``.
    """

    m: int
    k: int
    residuals: NDArray[np.float64]
    grads: NDArray[np.float64]
    b_mat: NDArray[np.float64]
    d_a: float

    def __post_init__(self) -> None:
        res = np.asarray(self.residuals, dtype=float)
        grads = np.asarray(self.grads, dtype=float)
        if self.m < 1 or self.k < 0:
            raise DomainError("need m >= 1 and k >= 0")
        if res.shape != (self.m + self.k,):
            raise DomainError(f"residuals must have length m+k={self.m + self.k}")
        if grads.ndim != 2 or grads.shape[0] != self.m + self.k:
            raise DomainError("grads must be an (m+k, q) array")
        if self.d_a <= 0:
            raise DomainError(f"d_a must be positive, got {self.d_a}")
        object.__setattr__(self, "residuals", res)
        object.__setattr__(self, "grads", grads)
        object.__setattr__(self, "b_mat", np.asarray(self.b_mat, dtype=float))


@dataclass(frozen=True)
class BootstrapConfig:
    """Schedule-construction controls.

    ``mixing='all_past'`` follows the literal recipe: the mixture for block
    boundary ``j`` picks uniformly among all strictly earlier block
    statistics. ``mixing='window'`` instead mixes the ``window`` most recent
    blocks (inclusive) with equal weights.
    """

    block_len: int
    t_m: int
    n_reps: int = 2000
    alpha: float = 0.05
    gamma: float = 0.0
    seed: int = 0
    mixing: str = "all_past"
    window: int | None = None

    def __post_init__(self) -> None:
        if self.block_len < 1:
            raise DomainError(f"block_len must be at least 1, got {self.block_len}")
        if self.t_m < 1:
            raise DomainError(f"t_m must be at least 1, got {self.t_m}")
        if self.n_reps < 1:
            raise DomainError(f"n_reps must be at least 1, got {self.n_reps}")
        if not 0.0 < self.alpha < 1.0:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0.0 <= self.gamma < 0.5:
            raise DomainError(f"gamma must lie in [0, 0.5), got {self.gamma}")
        if self.mixing not in ("all_past", "window"):
            raise DomainError(f"mixing must be 'all_past' or 'window', got {self.mixing!r}")
        if self.mixing == "window" and (self.window is None or self.window < 1):
            raise DomainError("window mixing needs window >= 1")


@dataclass(frozen=True)
class BootstrapCriticalValues:
    """Threshold schedule plus the identifying metadata the monitor checks."""

    m: int
    t_m: int
    block_len: int
    mixing: str
    window: int | None
    n_reps: int
    alpha: float
    gamma: float
    seed: int
    c_k: NDArray[np.float64]
    block_means: NDArray[np.float64]

    def __post_init__(self) -> None:
        object.__setattr__(self, "c_k", np.asarray(self.c_k, dtype=float))
        object.__setattr__(self, "block_means", np.asarray(self.block_means, dtype=float))


def window_correction(
    m: int,
    k: int,
    l: int,
    grads: NDArray[np.float64],
    b_mat: NDArray[np.float64],
    d_a: float,
) -> NDArray[np.float64]:
    """Gradient-window vector of the influence correction at lag ``l``.

    Sums gradient rows over a window determined by how the resample lag
    ``l`` compares with the block offset ``k`` and the total sample
    ``m + k``, then scales by ``b_mat / d_a``:

    * ``l <= k`` — the first ``l`` stream rows after the history,
    * ``k < l < m + k`` — the last ``l`` rows up to ``m + k``,
    * ``l >= m + k`` — all rows, inflated by ``l / (m + k)``.

    The three cases partition ``l >= 1``, agree at the seams, and grow
    linearly in ``l`` once the window saturates.
    """
    if l < 1:
        raise DomainError(f"lag l must be at least 1, got {l}")
    if m < 1 or k < 0:
        raise DomainError("need m >= 1 and k >= 0")
    if d_a <= 0:
        raise DomainError(f"d_a must be positive, got {d_a}")
    g = np.asarray(grads, dtype=float)
    if g.ndim != 2 or g.shape[0] < m + k:
        raise DomainError(f"grads must have at least m+k={m + k} rows")
    if l <= k:
        win = g[m : m + l].sum(axis=0)
    elif l < m + k:
        win = g[m + k - l : m + k].sum(axis=0)
    else:
        win = (l / (m + k)) * g[: m + k].sum(axis=0)
    return (np.asarray(b_mat, dtype=float) @ win) / d_a


def linearized_cusum(
    m: int,
    k: int,
    l: int,
    gamma: float,
    errors: NDArray[np.float64],
    grads: NDArray[np.float64],
    b_mat: NDArray[np.float64],
    d_a: float,
) -> float:
    """Boundary-normalized linearized CUSUM of resampled errors at lag ``l``.

    The leading term is the plain sum of errors ``m+1 .. m+l``; the
    subtraction removes the estimation effect through the projected mean
    score of the first ``m`` errors and the gradient window of
    :func:`window_correction`. Linear in ``errors``; identically zero on an
    all-zero error vector.
    """
    e = np.asarray(errors, dtype=float)
    if e.ndim != 1 or e.size < m + l:
        raise DomainError(f"errors must be 1-d with length >= m+l={m + l}")
    lead = float(e[m : m + l].sum())
    score = np.asarray(grads, dtype=float)[:m].T @ e[:m] / m
    c1 = window_correction(m, k, l, grads, b_mat, d_a)
    v = np.linalg.solve(np.asarray(b_mat, dtype=float), score)
    return (lead - float(v @ c1)) / float(boundary(m, l, gamma))


def draw_bootstrap_errors(
    residuals: NDArray[np.float64],
    count: int,
    rng: np.random.Generator,
) -> NDArray[np.float64]:
    """``count`` errors resampled uniformly with replacement from ``residuals``."""
    res = np.asarray(residuals, dtype=float)
    if res.ndim != 1 or res.size < 1:
        raise DomainError("residuals must be a nonempty 1-d array")
    if count < 0:
        raise DomainError(f"count must be nonnegative, got {count}")
    return res[rng.integers(0, res.size, size=count)]


def bootstrap_variance(
    errors: NDArray[np.float64],
    grads_hist: NDArray[np.float64],
    b_mat: NDArray[np.float64],
    n_params: int,
) -> float:
    """Resampled variance estimate over the historical window.

    Subtracts from each of the first ``m`` errors its projection through the
    mean score (the same influence expansion the cusum correction uses) and
    averages the squares with divisor ``m - n_params``.

    Raises
    ------
    DegenerateBootstrap
        If the centered errors vanish identically (zero variance draw).
    """
    gh = np.asarray(grads_hist, dtype=float)
    e = np.asarray(errors, dtype=float)
    m = gh.shape[0]
    if e.ndim != 1 or e.size < m:
        raise DomainError(f"errors must have length >= m={m}")
    if not 0 < n_params < m:
        raise DomainError(f"need 0 < n_params < m, got n_params={n_params}, m={m}")
    score = gh.T @ e[:m] / m
    v = np.linalg.solve(np.asarray(b_mat, dtype=float), score)
    dev = e[:m] - gh @ v
    s2 = float(dev @ dev) / (m - n_params)
    if s2 == 0.0:
        raise DegenerateBootstrap("zero-variance bootstrap draw")
    return s2


def sample_block_sups(
    block: BlockData,
    t_m: int,
    gamma: float,
    n_draws: int,
    rng: np.random.Generator,
) -> NDArray[np.float64]:
    """Vectorized draws of the block's scaled supremum statistic.

    Each draw resamples ``m + t_m`` errors with replacement from the
    block's residuals, evaluates the linearized cusum at every lag
    ``1..t_m``, scales by the draw's own resampled standard deviation, and
    keeps the supremum. Returns ``n_draws`` values; one draw consumes
    ``m + t_m`` uniform indices from ``rng``, so a length-1 batch matches
    :func:`sample_block_sup` exactly.
    """
    m, k = block.m, block.k
    q = block.grads.shape[1]
    if not 0 < q < m:
        raise DomainError(f"need q < m for the variance divisor, got q={q}, m={m}")
    idx = rng.integers(0, m + k, size=(n_draws, m + t_m))
    e = block.residuals[idx]  # (n_draws, m + t_m)
    gh = block.grads[:m]

    score = (e[:, :m] @ gh) / m  # (n_draws, q)
    v = np.linalg.solve(block.b_mat, score.T)  # (q, n_draws)

    dev = e[:, :m].T - gh @ v  # (m, n_draws)
    s2 = np.einsum("ij,ij->j", dev, dev) / (m - q)
    if np.any(s2 == 0.0):
        raise DegenerateBootstrap("zero-variance bootstrap draw")

    c1 = np.stack(
        [window_correction(m, k, l, block.grads, block.b_mat, block.d_a) for l in range(1, t_m + 1)]
    )  # (t_m, q)
    corr = c1 @ v  # (t_m, n_draws)
    lead = np.cumsum(e[:, m:], axis=1).T  # (t_m, n_draws)
    g = np.asarray(boundary(m, np.arange(1, t_m + 1), gamma), dtype=float)
    sups = np.max(np.abs(lead - corr) / g[:, None], axis=0)
    return sups / np.sqrt(s2)


def sample_block_sup(
    block: BlockData,
    t_m: int,
    gamma: float,
    rng: np.random.Generator,
) -> float:
    """One draw of ``sup_l |linearized cusum| / sigma-star`` for a block.

    Draws ``m + t_m`` resampled errors, computes the linearized cusum at
    every lag ``1..t_m``, scales by the resampled standard deviation, and
    returns the supremum. Consumes ``m + t_m`` uniform indices from ``rng``.
    """
    if t_m < 1:
        raise DomainError(f"t_m must be at least 1, got {t_m}")
    if not 0.0 <= gamma < 0.5:
        raise DomainError(f"gamma must lie in [0, 0.5), got {gamma}")
    return float(sample_block_sups(block, t_m, gamma, 1, rng)[0])


def _refit_window(
    x: NDArray[np.float64],
    y: NDArray[np.float64],
    model: ModelSpec,
    beta_prev: NDArray[np.float64],
    fit_options: FitOptions | None,
) -> HistoricalFit:
    """Refit on a grown window, also warm-starting from the last estimate.

    Runs the configured (multi)start and a single warm start at
    ``beta_prev`` and keeps the converged fit with the smaller residual sum
    of squares. The warm start rescues windows where every cold start
    stalls — on near-ridge parameter sets the grown window often converges
    only from the neighbourhood the previous block already found.
    """
    opts = fit_options if fit_options is not None else FitOptions()
    warm_opts = replace(opts, init=tuple(float(b) for b in beta_prev))
    best: HistoricalFit | None = None
    last_err: Exception | None = None
    for candidate in (opts, warm_opts):
        try:
            fit = fit_nls(x, y, model, candidate)
        except (NoConvergence, SingularMoments) as exc:
            last_err = exc
            continue
        if best is None or fit.residuals @ fit.residuals < best.residuals @ best.residuals:
            best = fit
    if best is None:
        assert last_err is not None
        raise last_err
    return best


def _build_blocks(
    x: NDArray[np.float64],
    y: NDArray[np.float64],
    m: int,
    model: ModelSpec,
    n_blocks: int,
    block_len: int,
    fit_options: FitOptions | None,
) -> list[BlockData]:
    hist = fit_nls(x[:m], y[:m], model, fit_options)
    d_a = float(hist.A_m @ hist.A_m)
    if d_a == 0.0:
        raise SingularMoments("historical mean gradient is exactly zero")
    blocks: list[BlockData] = []
    prev = hist
    for j in range(n_blocks):
        k = j * block_len
        refit = hist if j == 0 else _refit_window(
            x[: m + k], y[: m + k], model, prev.beta_hat, fit_options
        )
        prev = refit
        grads = np.asarray(model.grad_f(x[: m + k], refit.beta_hat), dtype=float)
        blocks.append(
            BlockData(
                m=m,
                k=k,
                residuals=refit.residuals,
                grads=grads,
                b_mat=hist.B_m,
                d_a=d_a,
            )
        )
    return blocks


def mix_block_quantiles(
    stats,
    config: BootstrapConfig,
    rng: np.random.Generator,
) -> NDArray[np.float64]:
    """Threshold schedule from per-block supremum samples.

    ``stats`` holds one row of ``config.n_reps`` supremum draws per
    completed block. Mixture ``j`` draws, per replication column, a block
    uniformly among blocks ``0..j-1`` (``all_past`` mixing; mixture 0 is
    block 0 itself) or among the ``config.window`` most recent blocks
    (``window`` mixing, clipped at the available rows). The threshold for
    stream index ``k`` is the upper ``config.alpha`` quantile of mixture
    ``k // config.block_len``, so thresholds are piecewise constant on
    blocks.

    Raises
    ------
    DegenerateBootstrap
        If any mixture quantile fails to be strictly positive.
    """
    stats = np.asarray(stats, dtype=float)
    if stats.ndim != 2 or stats.shape[1] != config.n_reps:
        raise DomainError(
            f"stats must be (n_blocks, n_reps={config.n_reps}), got {stats.shape}"
        )
    n_blocks = stats.shape[0]
    n_mix_max = config.t_m // config.block_len
    if config.mixing == "all_past" and n_blocks < max(n_mix_max, 1):
        raise DomainError(
            f"all_past mixing over {n_mix_max} blocks needs as many stat rows, got {n_blocks}"
        )
    if n_blocks < 1:
        raise DomainError("stats must contain at least one block row")

    cols = np.arange(config.n_reps)
    c_mix = np.empty(n_mix_max + 1)
    for jt in range(n_mix_max + 1):
        if config.mixing == "all_past":
            if jt == 0:
                sample = stats[0]
            else:
                sel = rng.integers(0, jt, size=config.n_reps)
                sample = stats[sel, cols]
        else:
            off = rng.integers(0, config.window, size=config.n_reps)
            sample = stats[np.clip(jt - off, 0, n_blocks - 1), cols]
        c_mix[jt] = upper_quantile(sample, config.alpha)

    ks = np.arange(1, config.t_m + 1)
    c_k = c_mix[ks // config.block_len]
    if not np.all(c_k > 0):
        raise DegenerateBootstrap("bootstrap produced a nonpositive threshold")
    return c_k


def critical_value_schedule(
    x,
    y,
    m: int,
    model: ModelSpec,
    config: BootstrapConfig,
    fit_options: FitOptions | None = None,
) -> BootstrapCriticalValues:
    """Bootstrap threshold schedule ``c_k`` for ``k = 1..t_m``.

    Parameters
    ----------
    x, y : array_like
        History plus as much of the stream as the block refits need:
        observations ``1..m`` are the history, and block ``j`` refits on
        ``1..m + j*block_len``.
    m : int
        History length.
    model : ModelSpec
    config : BootstrapConfig
    fit_options : FitOptions, optional
        Passed through to every refit; each block refit additionally tries
        a warm start at the previous block's estimate and keeps the better
        converged fit.

    Notes
    -----
    Block statistics are drawn from per-block substreams spawned off
    ``config.seed``; the mixture selection uses its own substream, so the
    schedule is a pure function of the data and configuration. Under
    ``all_past`` mixing the thresholds for ``k < 2*block_len`` coincide
    (both ranges mix over the first block alone).

    Raises
    ------
    DomainError
        If the supplied data cannot cover the refits the schedule needs.
    DegenerateBootstrap
        If any mixture quantile fails to be strictly positive.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 1 or x.shape != y.shape:
        raise DomainError("x and y must be one-dimensional arrays of equal length")
    if m < 1 or x.size < m:
        raise DomainError(f"need at least m={m} observations, got {x.size}")

    n_mix_max = config.t_m // config.block_len
    if config.mixing == "all_past":
        n_blocks = max(n_mix_max, 1)
    else:
        n_blocks = n_mix_max + 1
    avail = (x.size - m) // config.block_len + 1
    if config.mixing == "all_past" and avail < n_blocks:
        raise DomainError(
            f"need data through block {n_blocks - 1} "
            f"(m + {(n_blocks - 1) * config.block_len} observations), have {x.size}"
        )
    n_blocks = min(n_blocks, avail)

    blocks = _build_blocks(x, y, m, model, n_blocks, config.block_len, fit_options)

    root = np.random.SeedSequence(config.seed)
    streams = root.spawn(n_blocks + 1)
    stats = np.empty((n_blocks, config.n_reps))
    for j in range(n_blocks):
        stats[j] = sample_block_sups(
            blocks[j], config.t_m, config.gamma, config.n_reps, np.random.default_rng(streams[j])
        )

    c_k = mix_block_quantiles(stats, config, np.random.default_rng(streams[-1]))

    return BootstrapCriticalValues(
        m=m,
        t_m=config.t_m,
        block_len=config.block_len,
        mixing=config.mixing,
        window=config.window,
        n_reps=config.n_reps,
        alpha=config.alpha,
        gamma=config.gamma,
        seed=config.seed,
        c_k=c_k,
        block_means=stats.mean(axis=1),
    )
