"""End-to-end acceptance gate.

Each test covers one release criterion and prints a single PASS line on
success (visible with ``pytest -rA`` or ``-s``); the test name itself
carries the criterion number for the ``-v`` listing. Reference numbers
are frozen simulation targets; tolerances account for Monte-Carlo error
at the pinned replication counts.
"""

from __future__ import annotations

import itertools
import math
import time

import numpy as np
import pytest

from seqbreak import (
    BlockData,
    BootstrapConfig,
    GaussianRegressorLaw,
    Scenario,
    bootstrap_variance,
    boundary,
    compartmental_model,
    critical_value,
    drift_ratio_bound,
    gaussian_moments,
    growth_model,
    linearized_cusum,
    mix_block_quantiles,
    run_power_experiment,
    run_size_experiment,
    sample_block_sups,
    scan_stream,
    sup_statistic,
    upper_quantile,
    AsymptoticThreshold,
    ClosedEnd,
    MonitorConfig,
    initial_state,
    step,
)

FULL_REPS = 50_000
FULL_GRID = 8192


@pytest.fixture(scope="session")
def unit_scale_quantiles():
    """The four reference cells at unit scale ratio, with their wall time."""
    cells = [(0.0, 0.05), (0.0, 0.25), (0.49, 0.01), (0.45, 0.10)]
    t0 = time.perf_counter()
    results = {
        (g, a): critical_value(g, a, 1.0, n_reps=FULL_REPS, n_grid=FULL_GRID, seed=s)
        for s, (g, a) in enumerate(cells, start=101)
    }
    return results, time.perf_counter() - t0


@pytest.fixture(scope="session")
def power_cell():
    """Unit-scale (gamma=0.49, alpha=0.05) threshold for the power runs."""
    return critical_value(0.49, 0.05, 1.0, n_reps=FULL_REPS, n_grid=FULL_GRID, seed=105)


def test_criterion_1_unit_scale_limit_quantiles(unit_scale_quantiles):
    results, elapsed = unit_scale_quantiles
    targets = {
        (0.0, 0.05): 2.2411,
        (0.0, 0.25): 1.5322,
        (0.49, 0.01): 3.5214,
        (0.45, 0.10): 2.5391,
    }
    for cell, target in targets.items():
        assert results[cell].c_alpha == pytest.approx(target, abs=0.10), cell
    assert elapsed < 180.0
    print(
        f"ACCEPTANCE 1: PASS — unit-scale limit quantiles within ±0.10 "
        f"({elapsed:.0f}s for four cells)"
    )


def test_criterion_2_reduced_scale_limit_quantile():
    res = critical_value(0.0, 0.05, 0.5741, n_reps=FULL_REPS, n_grid=FULL_GRID, seed=106)
    assert res.c_alpha == pytest.approx(4.9211, abs=0.15)
    print("ACCEPTANCE 2: PASS — scale-0.5741 limit quantile within ±0.15")


def test_criterion_3_scale_ratios_match_oracles():
    # growth family: the mean gradient equals the first column of the
    # second-moment matrix, so the ratio is identically one
    growth = growth_model()
    rng = np.random.default_rng(31)
    for _ in range(5):
        beta = np.array([rng.uniform(-3, 3), rng.uniform(0.1, 2.0)])
        law = GaussianRegressorLaw(sigma2_x=rng.uniform(0.2, 1.5))
        assert gaussian_moments(growth, law, beta).D == pytest.approx(1.0, abs=1e-6)

    comp = compartmental_model()
    beta = np.array([1.2, 1.0])
    law = GaussianRegressorLaw(sigma2_x=1.0)
    mom = gaussian_moments(comp, law, beta)
    assert mom.D == pytest.approx(0.5741, abs=0.005)

    # Monte-Carlo oracle for the same moments, entrywise within 3 SE
    n = 1_000_000
    x = np.random.default_rng(32).normal(0.0, 1.0, n)
    grads = comp.grad_f(x, beta)
    a_mc = grads.mean(axis=0)
    a_se = grads.std(axis=0, ddof=1) / math.sqrt(n)
    np.testing.assert_array_less(np.abs(mom.A - a_mc), 3 * a_se)
    for i in range(2):
        for j in range(2):
            prod = grads[:, i] * grads[:, j]
            se = prod.std(ddof=1) / math.sqrt(n)
            assert abs(mom.B[i, j] - prod.mean()) < 3 * se
    print("ACCEPTANCE 3: PASS — scale ratios match closed-form and MC oracles")


def test_criterion_4_full_power_at_desk_scale(power_cell):
    t0 = time.perf_counter()
    scenario = Scenario(
        model="growth",
        beta0=(0.5, 1.0),
        m=25,
        t_m=200,
        gamma=0.49,
        alpha=0.05,
        n_reps=100,
        seed=41,
        beta1=(1.0, 2.0),
        k0=25,
    )
    report = run_power_experiment(scenario, power_cell)
    elapsed = time.perf_counter() - t0
    assert report.empirical_rate == 1.0
    assert elapsed < 120.0
    print(f"ACCEPTANCE 4: PASS — every shifted replication alarms ({elapsed:.0f}s)")


def test_criterion_5_size_bound_at_desk_scale(unit_scale_quantiles):
    results, _ = unit_scale_quantiles
    scenario = Scenario(
        model="growth",
        beta0=(0.5, 1.0),
        m=100,
        t_m=200,
        gamma=0.0,
        alpha=0.05,
        n_reps=200,
        seed=51,
    )
    report = run_size_experiment(scenario, results[(0.0, 0.05)])
    assert report.empirical_rate <= 0.05
    print(
        f"ACCEPTANCE 5: PASS — null alarm rate {report.empirical_rate:.3f} <= 0.05 "
        f"({report.n_valid} valid replications)"
    )


def test_criterion_6_detection_delay_band(power_cell):
    scenario = Scenario(
        model="growth",
        beta0=(0.5, 1.0),
        m=25,
        t_m=200,
        gamma=0.49,
        alpha=0.05,
        n_reps=500,
        seed=61,
        beta1=(1.0, 2.0),
        k0=25,
    )
    report = run_power_experiment(scenario, power_cell)
    assert report.tau_summary is not None
    assert 28 <= report.tau_summary.q2 <= 38
    print(
        f"ACCEPTANCE 6: PASS — median alarm time {report.tau_summary.q2:.0f} "
        f"inside [28, 38]"
    )


def test_criterion_7_resampling_matches_exhaustive_enumeration():
    block = BlockData(
        m=3,
        k=0,
        residuals=np.array([1.0, 2.0, 3.0]),
        grads=np.array([[1.0], [2.0], [4.0]]),
        b_mat=np.array([[7.0]]),
        d_a=2.0,
    )
    t_m = 2
    atoms = np.array(
        [
            max(
                abs(linearized_cusum(3, 0, l, 0.0, block.residuals[list(idx)], block.grads, block.b_mat, block.d_a))
                for l in (1, 2)
            )
            / math.sqrt(
                bootstrap_variance(block.residuals[list(idx)], block.grads, block.b_mat, 1)
            )
            for idx in itertools.product(range(3), repeat=5)
        ]
    )
    assert atoms.size == 243

    n_draws = 20_000
    draws = np.sort(sample_block_sups(block, t_m, 0.0, n_draws, np.random.default_rng(71)))
    eps = math.sqrt(math.log(2 / 0.01) / (2 * n_draws))  # 99% DKW band

    gap = 0.0
    for v in np.unique(atoms):
        exact = np.mean(atoms <= v + 1e-12)
        empirical = np.searchsorted(draws, v + 1e-12, side="right") / n_draws
        gap = max(gap, abs(exact - empirical))
    assert gap <= eps
    print(
        f"ACCEPTANCE 7: PASS — resampled CDF within DKW band "
        f"(sup gap {gap:.4f} <= {eps:.4f})"
    )


def test_criterion_8_bootstrap_size_never_exceeds_asymptotic():
    # Well-separated decay rates keep the history fit identifiable at m=25.
    # At this parameterization the gradient distribution is heavy-tailed, so
    # the single limit threshold runs anti-conservative in finite samples
    # while the resampled schedule adapts per replication; the ordering this
    # test asserts holds with a wide margin and is stable across nearby data
    # seeds (checked for 81-88).
    base = dict(
        model="compartmental",
        beta0=(2.0, 0.5),
        m=25,
        t_m=100,
        gamma=0.25,
        alpha=0.05,
        n_reps=200,
        seed=81,
    )
    law = GaussianRegressorLaw(sigma2_x=1.0)
    d = gaussian_moments(compartmental_model(), law, np.array([2.0, 0.5])).D
    asym_c = critical_value(0.25, 0.05, d, n_reps=20_000, n_grid=2048, seed=107)
    asym = run_size_experiment(Scenario(**base), asym_c)

    boot_cfg = BootstrapConfig(
        block_len=10, t_m=100, n_reps=300, alpha=0.05, gamma=0.25, seed=0
    )
    boot = run_size_experiment(Scenario(scheme="bootstrap", **base), boot_cfg)

    assert boot.empirical_rate <= asym.empirical_rate
    print(
        f"ACCEPTANCE 8: PASS — bootstrap size {boot.empirical_rate:.3f} <= "
        f"asymptotic size {asym.empirical_rate:.3f} "
        f"(valid: {boot.n_valid}/{asym.n_valid})"
    )


def test_criterion_9_property_suite():
    rng = np.random.default_rng(91)

    # gradient vs central finite differences
    model = growth_model()
    x = rng.uniform(-2, 2, 20)
    beta = np.array([0.7, 1.3])
    grad = model.grad_f(x, beta)
    for j in range(2):
        h = 1e-6 * (1 + abs(beta[j]))
        e = np.zeros(2)
        e[j] = h
        fd = (model.f(x, beta + e) - model.f(x, beta - e)) / (2 * h)
        np.testing.assert_allclose(grad[:, j], fd, atol=1e-6 * max(1, np.abs(grad[:, j]).max()))

    # boundary monotone in the stream index; drift ratio bound in (0, 1]
    ks = np.arange(1, 500)
    g = boundary(37, ks, 0.3)
    assert np.all(np.diff(g) > 0)
    assert 0 < drift_ratio_bound(37, 0.3, 400) <= 1.0

    # quantile monotone in alpha
    sample = rng.normal(size=2000)
    qs = [upper_quantile(sample, a) for a in (0.01, 0.05, 0.10, 0.25)]
    assert all(hi >= lo for hi, lo in zip(qs, qs[1:]))

    # linearized statistic: linear in the errors, ratio scale-invariant
    grads = rng.normal(size=(8, 2))
    b_mat = grads[:5].T @ grads[:5] / 5
    e1, e2 = rng.normal(size=8), rng.normal(size=8)
    f = lambda e: linearized_cusum(5, 0, 3, 0.2, e, grads, b_mat, 1.3)
    assert f(2.0 * e1 + 0.5 * e2) == pytest.approx(2.0 * f(e1) + 0.5 * f(e2), rel=1e-10)
    ratio = lambda e: f(e) / math.sqrt(bootstrap_variance(e, grads[:5], b_mat, 2))
    assert ratio(3.7 * e1) == pytest.approx(ratio(e1), rel=1e-10)

    # streaming/batch replay equality and statistic scale invariance
    config = MonitorConfig(
        gamma=0.25, alpha=0.05, horizon=ClosedEnd(40), scheme=AsymptoticThreshold(2.0)
    )
    res = rng.normal(size=40)
    state = initial_state()
    for r in res:
        state = step(state, float(r), 50, 1.7, config)
    assert scan_stream(res, 50, 1.7, config) == state
    assert sup_statistic(2.0 * res, 50, 2.0 * 1.7, 0.25) == sup_statistic(res, 50, 1.7, 0.25)

    # mixture weights: selection frequencies uniform over past blocks
    stats = np.array([[1.0], [2.0], [3.0]])
    cfg = BootstrapConfig(block_len=1, t_m=3, n_reps=1, alpha=0.5, gamma=0.0, seed=0)
    n_trials = 4000
    picks = np.array(
        [
            mix_block_quantiles(stats, cfg, np.random.default_rng((92, t)))[2]
            for t in range(n_trials)
        ]
    )
    se = math.sqrt((1 / 3) * (2 / 3) / n_trials)
    for v in (1.0, 2.0, 3.0):
        assert abs(np.mean(picks == v) - 1 / 3) <= 3 * se

    # seeded outputs are deterministic
    a = critical_value(0.1, 0.10, 1.0, n_reps=300, n_grid=64, seed=9)
    b = critical_value(0.1, 0.10, 1.0, n_reps=300, n_grid=64, seed=9)
    assert a == b

    print("ACCEPTANCE 9: PASS — property suite holds")
