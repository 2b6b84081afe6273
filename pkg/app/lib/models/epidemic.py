import numpy as np
from scipy.special import digamma, gammaln, xlogy

from lib.errors import ConfigurationError, DomainError
from lib.models.base import SeparableCountModel
from lib.models.spec import ModelSpec


class EpidemicModel(SeparableCountModel):
    """
    Infected counts y_i ~ Binomial(N, p_i), p_i = 1 - exp(-x t_i), at the
    equispaced times t_i = i * T_end / n, with log X ~ N(mu, sigma^2).

    Densities are evaluated in the log domain; y is treated as continuous
    through the gamma function so that gradients in y exist.
    """

    def __init__(self, spec: ModelSpec):
        super().__init__(spec)
        params = spec.params
        problems = []
        if params.population < 1:
            problems.append(f"population must be >= 1, got {params.population}")
        if params.horizon <= 0:
            problems.append(f"horizon must be > 0, got {params.horizon}")
        if params.prior_sigma <= 0:
            problems.append(f"prior_sigma must be > 0, got {params.prior_sigma}")
        if problems:
            raise ConfigurationError(f"Invalid epidemic parameters: {'; '.join(problems)}")
        self.population = int(params.population)
        self.prior_mu = float(params.prior_mu)
        self.prior_sigma = float(params.prior_sigma)
        self.times = np.arange(1, self.n + 1) * float(params.horizon) / self.n

    def sample_prior(self, rng, size):
        return np.exp(self.prior_mu + self.prior_sigma * rng.standard_normal((size, 1)))

    def sample_likelihood(self, x, rng):
        p = self.infection_probability(np.atleast_2d(x))
        return rng.binomial(self.population, p).astype(float)

    def infection_probability(self, x: np.ndarray, indices=None) -> np.ndarray:
        return -np.expm1(-x * self.times[self._indices(indices)])

    def mean_trajectory(self, x: np.ndarray) -> np.ndarray:
        """Expected infected count N * p_i(x) at every time point"""
        return self.population * self.infection_probability(np.atleast_2d(x))

    def _check_domain(self, y, x):
        if np.any(x <= 0) or np.any(np.isnan(x)):
            raise DomainError("Epidemic rate x must be positive")
        if np.any(y < 0) or np.any(y > self.population) or np.any(np.isnan(y)):
            raise DomainError(f"Epidemic counts must lie in [0, {self.population}]")

    def log_likelihood_terms(self, y, x, indices=None):
        idx = self._indices(indices)
        self._check_domain(np.asarray(y, dtype=float)[..., idx], np.asarray(x, dtype=float))
        return self.relaxed_log_likelihood_terms(y, x, indices)

    def relaxed_log_likelihood_terms(self, y, x, indices=None):
        """Gamma-function relaxation, finite for y in (-1, N + 1)"""
        idx = self._indices(indices)
        y = np.asarray(y, dtype=float)[..., idx]
        x = np.asarray(x, dtype=float)
        N = self.population
        rate_time = x * self.times[idx]
        # log(1 - p) = -x t exactly
        log_binom = gammaln(N + 1.0) - gammaln(y + 1.0) - gammaln(N - y + 1.0)
        return log_binom + xlogy(y, -np.expm1(-rate_time)) - (N - y) * rate_time

    def grad_y_log_likelihood(self, y, x):
        y = np.asarray(y, dtype=float)
        x = np.asarray(x, dtype=float)
        self._check_domain(y, x)
        N = self.population
        rate_time = x * self.times
        log_p = np.log(-np.expm1(-rate_time))
        return digamma(N - y + 1.0) - digamma(y + 1.0) + log_p + rate_time
