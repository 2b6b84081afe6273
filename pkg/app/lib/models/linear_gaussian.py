from dataclasses import dataclass
from threading import Lock
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from lib.errors import ConfigurationError, NotPositiveDefiniteError
from lib.models.base import ObservationModel
from lib.models.spec import ModelSpec
from lib.numerics import symmetrize

LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class PosteriorQuantities:
    cov_y: np.ndarray            # Sigma_Y = G Sigma_X G^T + Sigma_eps
    cov_x_given_y: np.ndarray    # (Sigma_X^-1 + G^T Sigma_eps^-1 G)^-1
    score_matrix: np.ndarray     # Sigma_eps^-1 - Sigma_Y^-1


def _spd_inverse(M: np.ndarray, label: str) -> np.ndarray:
    try:
        factor = linalg.cho_factor(M, lower=True)
    except linalg.LinAlgError as e:
        raise NotPositiveDefiniteError(f"{label} is not positive definite: {str(e)}") from None
    return symmetrize(linalg.cho_solve(factor, np.eye(M.shape[0])))


class LinearGaussianModel(ObservationModel):
    def __init__(self, spec: ModelSpec):
        super().__init__(spec)
        params = spec.params
        self.G = params.forward_matrix()
        self.prior_cov = symmetrize(params.prior_matrix())
        self.noise_cov = symmetrize(params.noise_matrix())
        self._validate()

        self._prior_chol = self._cholesky(self.prior_cov, 'prior covariance')
        self._noise_precision = _spd_inverse(self.noise_cov, 'noise covariance')
        self._factor_lock = Lock()
        self._noise_factors: Dict[Tuple[int, ...], Tuple[np.ndarray, float]] = {}

    def _validate(self):
        problems = []
        if self.G.shape != (self.n, self.d):
            problems.append(f"forward model must be {self.n}x{self.d}, got {self.G.shape}")
        if self.prior_cov.shape != (self.d, self.d):
            problems.append(f"prior covariance must be {self.d}x{self.d}, got {self.prior_cov.shape}")
        if self.noise_cov.shape != (self.n, self.n):
            problems.append(f"noise covariance must be {self.n}x{self.n}, got {self.noise_cov.shape}")
        for label, kernel in (('prior', self.spec.params.prior_kernel), ('noise', self.spec.params.noise_kernel)):
            if kernel.amplitude <= 0 or (kernel.lengthscale is not None and kernel.lengthscale <= 0):
                problems.append(f"{label} kernel needs a > 0 and l > 0")
        if problems:
            raise ConfigurationError(f"Invalid linear_gaussian parameters: {'; '.join(problems)}")

    @staticmethod
    def _cholesky(M: np.ndarray, label: str) -> np.ndarray:
        try:
            return linalg.cholesky(M, lower=True)
        except linalg.LinAlgError as e:
            raise ConfigurationError(f"{label} is not positive definite: {str(e)}") from None

    def _noise_factor(self, indices: np.ndarray) -> Tuple[np.ndarray, float]:
        """Cholesky factor and log-determinant of Sigma_eps restricted to indices, cached"""
        key = tuple(indices.tolist())
        with self._factor_lock:
            cached = self._noise_factors.get(key)
        if cached is None:
            L = self._cholesky(self.noise_cov[np.ix_(indices, indices)], 'noise covariance block')
            cached = (L, float(2.0 * np.sum(np.log(np.diag(L)))))
            with self._factor_lock:
                self._noise_factors[key] = cached
        return cached

    def sample_prior(self, rng, size):
        return rng.standard_normal((size, self.d)) @ self._prior_chol.T

    def sample_likelihood(self, x, rng):
        x = np.atleast_2d(x)
        L, _ = self._noise_factor(np.arange(self.n))
        noise = rng.standard_normal((x.shape[0], self.n)) @ L.T
        return x @ self.G.T + noise

    def log_likelihood(self, y, x, indices=None):
        idx = self._indices(indices)
        if idx.size == 0:
            return np.zeros(np.broadcast_shapes(np.shape(y)[:-1], np.shape(x)[:-1]))
        y = np.asarray(y, dtype=float)
        x = np.asarray(x, dtype=float)
        residual = y[..., idx] - x @ self.G[idx].T
        L, logdet = self._noise_factor(idx)
        flat = residual.reshape(-1, idx.size).T
        z = linalg.solve_triangular(L, flat, lower=True)
        quad = np.sum(z * z, axis=0).reshape(residual.shape[:-1])
        return -0.5 * (quad + logdet + idx.size * LOG_2PI)

    def grad_y_log_likelihood(self, y, x):
        residual = np.asarray(y, dtype=float) - np.asarray(x, dtype=float) @ self.G.T
        return -residual @ self._noise_precision

    def exact_posterior_quantities(self) -> PosteriorQuantities:
        cov_y = symmetrize(self.G @ self.prior_cov @ self.G.T + self.noise_cov)
        prior_precision = _spd_inverse(self.prior_cov, 'prior covariance')
        posterior_precision = symmetrize(prior_precision + self.G.T @ self._noise_precision @ self.G)
        cov_x_given_y = _spd_inverse(posterior_precision, 'posterior precision')
        score_matrix = symmetrize(self._noise_precision - _spd_inverse(cov_y, 'Sigma_Y'))
        return PosteriorQuantities(cov_y=cov_y, cov_x_given_y=cov_x_given_y, score_matrix=score_matrix)

    def spectrum(self) -> Dict[str, np.ndarray]:
        """Singular values of G and eigenvalues of the covariances, descending"""
        cov_y = self.exact_posterior_quantities().cov_y
        return {
            'forward': linalg.svdvals(self.G),
            'prior_cov': np.sort(linalg.eigvalsh(self.prior_cov))[::-1],
            'noise_cov': np.sort(linalg.eigvalsh(self.noise_cov))[::-1],
            'cov_y': np.sort(linalg.eigvalsh(cov_y))[::-1],
        }

    def marginal_blocks(self, indices: Optional[Sequence[int]] = None) -> Tuple[np.ndarray, np.ndarray]:
        """(Sigma_Y, Sigma_eps) restricted to indices"""
        idx = self._indices(indices)
        cov_y = self.G[idx] @ self.prior_cov @ self.G[idx].T + self.noise_cov[np.ix_(idx, idx)]
        return symmetrize(cov_y), self.noise_cov[np.ix_(idx, idx)]
