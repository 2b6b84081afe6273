import numpy as np
from scipy import linalg
from scipy.special import digamma, gammaln, xlogy

from lib.errors import ConfigurationError, DomainError
from lib.models.base import SeparableCountModel
from lib.models.spec import ModelSpec


class SpatialPoissonModel(SeparableCountModel):
    """
    Counts y_i ~ Poisson(b_i x_i) on the cells of a grid over [0, L]^2 with
    exposure b_i = D_i / l_i (cell area over distance of its center to the
    origin) and log X ~ N(0, Sigma), Sigma_ij = exp(-decay * |c_i - c_j|).
    """

    def __init__(self, spec: ModelSpec):
        super().__init__(spec)
        params = spec.params
        if params.grid < 1 or params.length <= 0 or params.decay <= 0:
            raise ConfigurationError(
                f"Invalid spatial_poisson parameters: grid={params.grid}, length={params.length}, decay={params.decay}"
            )
        width = float(params.length) / params.grid
        axis = (np.arange(params.grid) + 0.5) * width
        gx, gy = np.meshgrid(axis, axis, indexing='ij')
        self.centers = np.column_stack([gx.ravel(), gy.ravel()])
        self.cell_area = width * width
        self.exposure = self.cell_area / np.linalg.norm(self.centers, axis=1)

        distances = np.linalg.norm(self.centers[:, None, :] - self.centers[None, :, :], axis=-1)
        self.prior_cov = np.exp(-float(params.decay) * distances)
        try:
            self._prior_chol = linalg.cholesky(self.prior_cov, lower=True)
        except linalg.LinAlgError as e:
            raise ConfigurationError(f"Spatial prior covariance is not positive definite: {str(e)}") from None

    def sample_prior(self, rng, size):
        return np.exp(rng.standard_normal((size, self.d)) @ self._prior_chol.T)

    def sample_likelihood(self, x, rng):
        return rng.poisson(self.exposure * np.atleast_2d(x)).astype(float)

    def _check_domain(self, y, x):
        if np.any(x <= 0) or np.any(np.isnan(x)):
            raise DomainError("Poisson intensities x must be positive")
        if np.any(y < 0) or np.any(np.isnan(y)):
            raise DomainError("Poisson counts must be non-negative")

    def log_likelihood_terms(self, y, x, indices=None):
        idx = self._indices(indices)
        self._check_domain(np.asarray(y, dtype=float)[..., idx], np.asarray(x, dtype=float)[..., idx])
        return self.relaxed_log_likelihood_terms(y, x, indices)

    def relaxed_log_likelihood_terms(self, y, x, indices=None):
        """Gamma-function relaxation, finite for y > -1"""
        idx = self._indices(indices)
        y = np.asarray(y, dtype=float)[..., idx]
        x = np.asarray(x, dtype=float)[..., idx]
        intensity = self.exposure[idx] * x
        return xlogy(y, intensity) - intensity - gammaln(y + 1.0)

    def grad_y_log_likelihood(self, y, x):
        y = np.asarray(y, dtype=float)
        x = np.asarray(x, dtype=float)
        self._check_domain(y, x)
        return np.log(self.exposure * x) - digamma(y + 1.0)
