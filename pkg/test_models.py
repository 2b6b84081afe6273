#!/usr/bin/env python3
"""
Tests for the observation models: sampling, restricted likelihoods, gradients
and the exact linear-Gaussian quantities
"""

import numpy as np
import pytest
from scipy import stats

from lib.errors import ConfigurationError, DomainError, UnsupportedModelError
from lib.harness.diagnostics import GRADIENT_TOLERANCE, check_gradients, finite_difference_gradient, relative_error
from lib.models import (EpidemicModel, LinearGaussianModel, ModelSpec, SpatialPoissonModel, build_model,
                        exact_posterior_quantities, grad_y_lik, grad_y_loglik, model_spec_from_dict, model_spectrum,
                        sample_joint)
from lib.numerics import sample_covariance


def test_build_model_dispatches_on_name():
    assert isinstance(build_model(ModelSpec.linear_gaussian(n=4, d=3)), LinearGaussianModel)
    assert isinstance(build_model(ModelSpec.epidemic(n=10)), EpidemicModel)
    spatial = build_model(ModelSpec.spatial_poisson(grid=3))
    assert isinstance(spatial, SpatialPoissonModel)
    assert spatial.n == spatial.d == 9


def test_model_spec_from_dict():
    spec = model_spec_from_dict({'name': 'epidemic', 'epidemic': {'population': 80, 'n': 12}})
    assert spec.n == 12 and spec.d == 1 and spec.params.population == 80
    spec = model_spec_from_dict({'name': 'linear_gaussian',
                                 'linear_gaussian': {'n': 5, 'd': 4, 'noise_kernel': {'amplitude': 0.5}}})
    assert spec.params.noise_kernel.amplitude == 0.5
    with pytest.raises(ConfigurationError):
        model_spec_from_dict({'name': 'epidemic', 'epidemic': {'rate': 1.0}})
    with pytest.raises(ConfigurationError):
        model_spec_from_dict({'name': 'ising'})


def test_invalid_parameters_are_configuration_errors():
    with pytest.raises(ConfigurationError):
        build_model(ModelSpec.epidemic(population=0))
    with pytest.raises(ConfigurationError):
        build_model(ModelSpec.linear_gaussian(n=3, d=2, forward=np.ones((2, 2))))


@pytest.mark.parametrize('spec', [
    ModelSpec.linear_gaussian(n=5, d=4),
    ModelSpec.epidemic(n=6),
    ModelSpec.spatial_poisson(grid=2),
])
def test_sample_joint_shapes_and_determinism(spec):
    model = build_model(spec)
    first = sample_joint(model, 20, 7, seed=11)
    second = sample_joint(model, 20, 7, seed=11)
    assert first.x.shape == (20, model.d)
    assert first.y.shape == (20, model.n)
    assert first.prior_bank.shape == (7, model.d)
    np.testing.assert_array_equal(first.y, second.y)
    np.testing.assert_array_equal(first.prior_bank, second.prior_bank)
    assert not np.array_equal(first.y, sample_joint(model, 20, 7, seed=12).y)


def test_sample_joint_budget_checks(small_lg):
    with pytest.raises(ConfigurationError):
        sample_joint(small_lg, 1, 5, seed=0)
    with pytest.raises(ConfigurationError):
        sample_joint(small_lg, 5, 0, seed=0)


def test_linear_gaussian_restricted_likelihood_is_the_marginal(small_lg, rng):
    x = rng.standard_normal(small_lg.d)
    y = rng.standard_normal(small_lg.n)
    idx = [4, 1]
    expected = stats.multivariate_normal.logpdf(
        y[idx], mean=small_lg.G[idx] @ x, cov=small_lg.noise_cov[np.ix_(idx, idx)]
    )
    assert small_lg.log_likelihood(y, x, idx) == pytest.approx(expected, rel=1e-10)


def test_count_likelihoods_are_separable(epidemic, spatial):
    for model in (epidemic, spatial):
        samples = sample_joint(model, 4, 1, seed=3)
        terms = model.log_likelihood_terms(samples.y, samples.x)
        np.testing.assert_allclose(model.log_likelihood(samples.y, samples.x, [0, 2]), terms[:, [0, 2]].sum(axis=1))


def test_out_of_range_indices(small_lg, epidemic):
    y = np.zeros(small_lg.n)
    with pytest.raises(IndexError):
        small_lg.log_likelihood(y, np.zeros(small_lg.d), [small_lg.n])
    with pytest.raises(IndexError):
        epidemic.log_likelihood(np.zeros(epidemic.n), np.ones(1), [-1])


def test_epidemic_domain(epidemic):
    y = np.full(epidemic.n, 3.0)
    with pytest.raises(DomainError):
        epidemic.log_likelihood(y, np.array([-0.5]))
    y[0] = epidemic.population + 2
    with pytest.raises(DomainError):
        epidemic.grad_y_log_likelihood(y, np.array([1.0]))


def test_count_models_reject_values_outside_support(epidemic, spatial):
    y = np.full(epidemic.n, 3.0)
    y[4] = epidemic.population + 0.5
    with pytest.raises(DomainError):
        epidemic.log_likelihood(y, np.array([1.0]))
    with pytest.raises(DomainError):
        epidemic.grad_y_log_likelihood(y, np.array([1.0]))
    y[4] = -0.5
    with pytest.raises(DomainError):
        epidemic.log_likelihood(y, np.array([1.0]))
    counts = np.zeros(spatial.n)
    counts[0] = -0.5
    with pytest.raises(DomainError):
        spatial.log_likelihood(counts, np.ones(spatial.d))
    # the relaxation itself stays finite just past the support
    assert np.all(np.isfinite(epidemic.relaxed_log_likelihood_terms(y, np.array([1.0]))))


def test_gradient_check_at_support_boundary(epidemic):
    x = np.array([[1.0384], [0.6]])
    for count in (0.0, float(epidemic.population)):
        y = np.full((2, epidemic.n), count)
        analytic = epidemic.grad_y_log_likelihood(y, x)
        numeric = finite_difference_gradient(epidemic, y, x)
        assert np.max(relative_error(analytic, numeric)) < GRADIENT_TOLERANCE


def test_epidemic_is_normalized(epidemic):
    counts = np.arange(epidemic.population + 1, dtype=float)
    y = np.repeat(counts[:, None], epidemic.n, axis=1)
    for rate in (0.05, 0.8, 4.0):
        terms = epidemic.log_likelihood_terms(y, np.array([rate]))
        np.testing.assert_allclose(np.exp(terms).sum(axis=0), 1.0, atol=1e-10)


def test_epidemic_gradient_vanishes_at_the_symmetric_point(epidemic):
    # p_0 = 1/2 and y_0 = N/2
    x = np.array([np.log(2.0) / epidemic.times[0]])
    y = np.full(epidemic.n, epidemic.population / 2)
    assert grad_y_loglik(epidemic, y, x)[0] == pytest.approx(0.0, abs=1e-12)


def test_spatial_poisson_is_normalized(spatial):
    counts = np.arange(80, dtype=float)
    y = np.repeat(counts[:, None], spatial.n, axis=1)
    terms = spatial.log_likelihood_terms(y, np.linspace(0.5, 2.0, spatial.d))
    np.testing.assert_allclose(np.exp(terms).sum(axis=0), 1.0, atol=1e-10)


def test_spatial_poisson_unit_intensity_gradients():
    model = build_model(ModelSpec.spatial_poisson(grid=1))
    x = 1.0 / model.exposure
    y = np.zeros(1)
    assert grad_y_loglik(model, y, x)[0] == pytest.approx(np.euler_gamma, rel=1e-10)
    assert grad_y_lik(model, y, x)[0] == pytest.approx(np.exp(-1.0) * np.euler_gamma, rel=1e-10)


def test_spatial_poisson_mean_is_exposure(spatial):
    draws = 20000
    rng = np.random.default_rng(3)
    y = spatial.sample_likelihood(np.ones((draws, spatial.d)), rng)
    tolerance = 5 * np.sqrt(spatial.exposure / draws)
    assert np.all(np.abs(y.mean(axis=0) - spatial.exposure) < tolerance)


def test_joint_sample_covariance_approaches_marginal():
    model = build_model(ModelSpec.linear_gaussian(n=3, d=3))
    samples = sample_joint(model, 20000, 1, seed=12)
    cov_y = exact_posterior_quantities(model).cov_y
    error = np.max(np.abs(sample_covariance(samples.y) - cov_y))
    assert error < 0.05 * np.max(np.abs(cov_y))


def test_epidemic_matches_binomial_pmf(epidemic):
    x = np.array([0.7])
    y = np.arange(epidemic.n, dtype=float) % (epidemic.population + 1)
    p = 1.0 - np.exp(-x * epidemic.times)
    expected = stats.binom.logpmf(y, epidemic.population, p).sum()
    assert epidemic.log_likelihood(y, x) == pytest.approx(expected, rel=1e-10)
    np.testing.assert_allclose(epidemic.mean_trajectory(x), epidemic.population * p[None, :])


def test_spatial_poisson_matches_poisson_pmf(spatial):
    x = np.linspace(0.5, 2.0, spatial.d)
    y = np.arange(spatial.n, dtype=float) % 4
    expected = stats.poisson.logpmf(y, spatial.exposure * x).sum()
    assert spatial.log_likelihood(y, x) == pytest.approx(expected, rel=1e-10)
    with pytest.raises(DomainError):
        spatial.log_likelihood(y, -x)


@pytest.mark.parametrize('spec', [
    ModelSpec.linear_gaussian(n=20, d=20),
    ModelSpec.epidemic(),
    ModelSpec.spatial_poisson(),
])
def test_analytic_gradients_match_finite_differences(spec):
    report = check_gradients(spec, points=50, seed=5)
    assert report.passed, report


def test_corrupted_gradient_fails_the_check():
    report = check_gradients(ModelSpec.epidemic(), points=20, seed=5, corrupt=True)
    assert not report.passed


def test_likelihood_gradient_identity(scalar_lg):
    # grad pi = pi * grad log pi, checked against a difference of pi itself
    x = np.array([[0.3]])
    y = np.array([[0.9]])
    h = 1e-6
    density = lambda v: np.exp(scalar_lg.log_likelihood(v, x))
    numeric = (density(y + h) - density(y - h)) / (2 * h)
    assert scalar_lg.grad_y_likelihood(y, x)[0, 0] == pytest.approx(numeric[0], rel=1e-7)


def test_exact_quantities_scalar(scalar_lg):
    quantities = exact_posterior_quantities(scalar_lg)
    assert quantities.cov_y[0, 0] == pytest.approx(2.0)
    assert quantities.cov_x_given_y[0, 0] == pytest.approx(0.5)
    assert quantities.score_matrix[0, 0] == pytest.approx(0.5)


def test_exact_score_matrix_vanishes_without_forward_model():
    model = build_model(ModelSpec.linear_gaussian(n=3, d=2, forward=np.zeros((3, 2))))
    np.testing.assert_allclose(exact_posterior_quantities(model).score_matrix, 0.0, atol=1e-12)


def test_model_spectrum(small_lg, epidemic):
    spectra = model_spectrum(small_lg)
    assert set(spectra) == {'forward', 'prior_cov', 'noise_cov', 'cov_y'}
    assert np.all(np.diff(spectra['cov_y']) <= 0)
    with pytest.raises(UnsupportedModelError):
        model_spectrum(epidemic)
    with pytest.raises(UnsupportedModelError):
        exact_posterior_quantities(epidemic)
