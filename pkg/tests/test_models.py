"""Tests for the model registry and the gradient-moment computations.

The compartmental moments are checked against closed forms obtained by hand
from the Gaussian moment-generating identities

    E[exp(tX)]      = exp(t^2 s2 / 2)
    E[X exp(tX)]    = t s2 exp(t^2 s2 / 2)
    E[X^2 exp(tX)]  = (s2 + t^2 s2^2) exp(t^2 s2 / 2)

for X ~ N(0, s2), applied to the gradient components
(1 - b_i x) exp(-b_i x).  A plain Monte-Carlo estimate arbitrates between
the quadrature and the closed forms.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from seqbreak import (
    DomainError,
    GaussianRegressorLaw,
    ModelSpec,
    SingularMoments,
    compartmental_model,
    gaussian_moments,
    get_model,
    growth_model,
    scale_from_moments,
)


def compartmental_mean_gradient(beta, s2):
    """Closed form for E[grad f(X; beta)]: (1 + b^2 s2) exp(b^2 s2 / 2)."""
    b = np.asarray(beta, dtype=float)
    return (1.0 + b**2 * s2) * np.exp(b**2 * s2 / 2.0)


def compartmental_second_moment(beta, s2):
    """Closed form for E[grad f grad f'].

    Entry (i, j) is E[(1 - b_i X)(1 - b_j X) exp(-(b_i + b_j) X)], which
    expands through the moment identities to
    (1 + c^2 s2)(1 + b_i b_j s2) exp(c^2 s2 / 2) with c = b_i + b_j.
    """
    b = np.asarray(beta, dtype=float)
    c = b[:, None] + b[None, :]
    prod = b[:, None] * b[None, :]
    return (1.0 + c**2 * s2) * (1.0 + prod * s2) * np.exp(c**2 * s2 / 2.0)


def test_growth_scalar_values():
    model = growth_model()
    assert model.f(0.0, np.array([0.5, 1.0])) == pytest.approx(-0.5)
    assert model.f(1.0, np.array([1.0, 2.0])) == pytest.approx(1.0 - math.exp(-2.0))
    np.testing.assert_allclose(model.grad_f(0.0, np.array([0.5, 1.0])), [1.0, 0.0])


def test_compartmental_scalar_values():
    model = compartmental_model()
    assert model.f(0.0, np.array([1.2, 1.0])) == pytest.approx(2.2)
    assert model.f(1.0, np.array([1.0, 1.0])) == pytest.approx(2.0 / math.e)
    np.testing.assert_allclose(model.grad_f(0.0, np.array([1.2, 1.0])), [1.0, 1.0])


def test_vectorized_evaluation_shapes():
    x = np.linspace(-2.0, 2.0, 7)
    for model in (growth_model(), compartmental_model()):
        beta = np.asarray(model.beta_ref)
        assert model.f(x, beta).shape == (7,)
        assert model.grad_f(x, beta).shape == (7, model.q)


@pytest.mark.parametrize("name", ["growth", "compartmental"])
def test_gradient_matches_finite_differences(name):
    model = get_model(name)
    rng = np.random.default_rng(20240814)
    for _ in range(100):
        # keep b*x moderate: the central-difference oracle loses digits to
        # cancellation once exp(-b x) dwarfs the component under test
        x = float(np.clip(rng.normal(0.0, 1.5), -2.0, 2.0))
        beta = rng.uniform(0.1, 3.0, model.q)
        if name == "growth":
            beta[0] = rng.uniform(-3.0, 3.0)
        grad = np.asarray(model.grad_f(x, beta), dtype=float)
        fd = np.empty(model.q)
        for j in range(model.q):
            h = 1e-6 * (1.0 + abs(beta[j]))
            up, dn = beta.copy(), beta.copy()
            up[j] += h
            dn[j] -= h
            fd[j] = (model.f(x, up) - model.f(x, dn)) / (2.0 * h)
        scale = np.maximum(np.abs(grad), 1.0)
        assert np.max(np.abs(grad - fd) / scale) <= 1e-6


def test_growth_scale_is_always_one():
    model = growth_model()
    rng = np.random.default_rng(7)
    for _ in range(5):
        # keep exp(4 b2^2 s2) comfortably below the condition-number guard
        beta = np.array([rng.uniform(-5.0, 5.0), rng.uniform(0.1, 2.0)])
        law = GaussianRegressorLaw(sigma2_x=rng.uniform(0.2, 1.5))
        mom = gaussian_moments(model, law, beta)
        assert abs(mom.D - 1.0) <= 1e-6


def test_growth_moment_identity():
    # the first gradient component is identically 1, so A1 = B11 = 1 and
    # A2 = B12 coincide as integrals; the quadrature must preserve this
    mom = gaussian_moments(growth_model(), GaussianRegressorLaw(1.0), np.array([0.5, 1.0]))
    assert mom.A[0] == pytest.approx(1.0, abs=1e-12)
    assert mom.B[0, 0] == pytest.approx(1.0, abs=1e-12)
    assert abs(mom.A[1] - mom.B[0, 1]) <= 1e-12 * max(1.0, abs(mom.A[1]))
    np.testing.assert_allclose(mom.B, mom.B.T)


def test_compartmental_moments_match_closed_form():
    beta = np.array([1.2, 1.0])
    s2 = 1.0
    mom = gaussian_moments(compartmental_model(), GaussianRegressorLaw(s2), beta)

    a_exact = compartmental_mean_gradient(beta, s2)
    b_exact = compartmental_second_moment(beta, s2)
    np.testing.assert_allclose(mom.A, a_exact, rtol=1e-10)
    np.testing.assert_allclose(mom.B, b_exact, rtol=1e-10)

    d_exact = scale_from_moments(a_exact, b_exact)
    assert mom.D == pytest.approx(d_exact, abs=1e-10)
    assert mom.D == pytest.approx(0.5741, abs=0.005)
    assert mom.D_A == pytest.approx(float(a_exact @ a_exact), rel=1e-10)


def test_quadrature_matches_monte_carlo():
    """Quadrature moments within 3 standard errors of a 1e6-draw estimate."""
    beta = np.array([1.2, 1.0])
    model = compartmental_model()
    mom = gaussian_moments(model, GaussianRegressorLaw(1.0), beta)

    rng = np.random.default_rng(321)
    n = 1_000_000
    g = np.asarray(model.grad_f(rng.normal(0.0, 1.0, n), beta))  # (n, 2)

    a_mc = g.mean(axis=0)
    a_se = g.std(axis=0, ddof=1) / math.sqrt(n)
    assert np.all(np.abs(mom.A - a_mc) <= 3.0 * a_se)

    prods = np.stack([g[:, 0] * g[:, 0], g[:, 0] * g[:, 1], g[:, 1] * g[:, 1]], axis=1)
    b_mc = prods.mean(axis=0)
    b_se = prods.std(axis=0, ddof=1) / math.sqrt(n)
    b_quad = np.array([mom.B[0, 0], mom.B[0, 1], mom.B[1, 1]])
    assert np.all(np.abs(b_quad - b_mc) <= 3.0 * b_se)


@pytest.mark.parametrize("name", ["growth", "compartmental"])
def test_node_doubling_leaves_moments_unchanged(name):
    model = get_model(name)
    beta = np.asarray(model.beta_ref)
    law = GaussianRegressorLaw(1.0)
    lo = gaussian_moments(model, law, beta, n_nodes=64)
    hi = gaussian_moments(model, law, beta, n_nodes=128)
    assert np.max(np.abs(lo.A - hi.A)) <= 1e-8
    assert np.max(np.abs(lo.B - hi.B)) <= 1e-8
    assert abs(lo.D - hi.D) <= 1e-8


def test_constant_degenerate_gradient_is_singular():
    flat = ModelSpec(
        name="flat",
        p=1,
        q=2,
        f=lambda x, beta: np.zeros_like(np.asarray(x, dtype=float)),
        grad_f=lambda x, beta: np.stack(
            [np.ones_like(np.asarray(x, dtype=float)), np.zeros_like(np.asarray(x, dtype=float))],
            axis=-1,
        ),
        theta_box=np.array([[-1.0, 1.0], [-1.0, 1.0]]),
    )
    with pytest.raises(SingularMoments):
        gaussian_moments(flat, GaussianRegressorLaw(1.0), np.array([0.0, 0.0]))


def test_scale_from_moments_basics():
    assert scale_from_moments(np.zeros(3), np.eye(3)) == 0.0
    assert scale_from_moments(np.array([1.0, 0.0]), np.eye(2)) == pytest.approx(1.0)


def test_scale_from_moments_scale_covariance():
    a = compartmental_mean_gradient((1.2, 1.0), 1.0)
    b = compartmental_second_moment((1.2, 1.0), 1.0)
    base = scale_from_moments(a, b)
    for c in (0.5, 2.0, 10.0):
        assert abs(scale_from_moments(c * a, c**2 * b) - base) <= 1e-12


def test_scale_from_moments_rejects_bad_matrices():
    with pytest.raises(SingularMoments):
        scale_from_moments(np.array([1.0, 1.0]), np.array([[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(SingularMoments):
        scale_from_moments(np.array([1.0, 1.0]), -np.eye(2))
    with pytest.raises(DomainError):
        scale_from_moments(np.array([1.0, 1.0]), np.eye(3))


def test_get_model_lookup():
    assert get_model("growth").name == "growth"
    assert get_model("compartmental").name == "compartmental"
    with pytest.raises(DomainError):
        get_model("nonsense")


def test_model_spec_validation():
    f = lambda x, beta: np.asarray(x, dtype=float)  # noqa: E731
    g = lambda x, beta: np.ones_like(np.asarray(x, dtype=float))[..., None]  # noqa: E731
    with pytest.raises(DomainError):
        ModelSpec(name="bad", p=1, q=1, f=f, grad_f=g, theta_box=np.array([[1.0, -1.0]]))
    with pytest.raises(DomainError):
        ModelSpec(name="bad", p=1, q=2, f=f, grad_f=g, theta_box=np.array([[0.0, 1.0]]))
    with pytest.raises(DomainError):
        ModelSpec(
            name="bad", p=1, q=1, f=f, grad_f=g,
            theta_box=np.array([[0.0, 1.0]]), beta_ref=(2.0,),
        )
    ok = ModelSpec(name="ok", p=1, q=1, f=f, grad_f=g, theta_box=np.array([[0.0, 1.0]]))
    assert ok.beta_ref == (0.5,)
    assert ok.contains(np.array([1.0]))
    assert not ok.contains(np.array([1.5]))
    assert not ok.contains(np.array([0.5, 0.5]))


def test_gaussian_law_and_moment_validation():
    with pytest.raises(DomainError):
        GaussianRegressorLaw(sigma2_x=0.0)
    with pytest.raises(DomainError):
        GaussianRegressorLaw(sigma2_x=-1.0)
    model = growth_model()
    with pytest.raises(DomainError):
        gaussian_moments(model, GaussianRegressorLaw(1.0), np.array([0.5, 20.0]))
    with pytest.raises(DomainError):
        gaussian_moments(model, GaussianRegressorLaw(1.0), np.array([0.5, 1.0]), n_nodes=1)
