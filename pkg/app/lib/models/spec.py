from dataclasses import dataclass, field, fields
from typing import Any, Dict, Optional, Union

import numpy as np

from lib.errors import ConfigurationError

MODEL_NAMES = ('linear_gaussian', 'epidemic', 'spatial_poisson')


@dataclass(frozen=True)
class KernelSettings:
    """Exponential kernel a * exp(-|z_i - z_j| / l) on an equispaced grid over [0, 1]"""
    amplitude: float = 1.0
    lengthscale: Optional[float] = None  # None means 1 / size

    def matrix(self, size: int) -> np.ndarray:
        z = np.linspace(0.0, 1.0, size) if size > 1 else np.zeros(1)
        length = self.lengthscale if self.lengthscale is not None else 1.0 / size
        return self.amplitude * np.exp(-np.abs(z[:, None] - z[None, :]) / length)


@dataclass(frozen=True)
class LinearGaussianParams:
    """
    Y = G X + eps with X ~ N(0, prior_cov) and eps ~ N(0, noise_cov).

    Explicit matrices win over kernel settings. G is n x d.
    """
    n: int = 50
    d: int = 50
    prior_kernel: KernelSettings = field(default_factory=lambda: KernelSettings(1.0))
    noise_kernel: KernelSettings = field(default_factory=lambda: KernelSettings(0.01))
    forward_lengthscale: Optional[float] = None  # None means 1 / max(n, d)
    forward: Optional[Any] = field(default=None, compare=False)
    prior_cov: Optional[Any] = field(default=None, compare=False)
    noise_cov: Optional[Any] = field(default=None, compare=False)

    def forward_matrix(self) -> np.ndarray:
        if self.forward is not None:
            return np.atleast_2d(np.asarray(self.forward, dtype=float))
        u = np.linspace(0.0, 1.0, self.n) if self.n > 1 else np.zeros(1)
        v = np.linspace(0.0, 1.0, self.d) if self.d > 1 else np.zeros(1)
        length = self.forward_lengthscale or 1.0 / max(self.n, self.d)
        return np.exp(-np.abs(u[:, None] - v[None, :]) / length)

    def prior_matrix(self) -> np.ndarray:
        if self.prior_cov is not None:
            return np.atleast_2d(np.asarray(self.prior_cov, dtype=float))
        return self.prior_kernel.matrix(self.d)

    def noise_matrix(self) -> np.ndarray:
        if self.noise_cov is not None:
            return np.atleast_2d(np.asarray(self.noise_cov, dtype=float))
        return self.noise_kernel.matrix(self.n)


@dataclass(frozen=True)
class EpidemicParams:
    """Binomial infection counts at t_i = i * horizon / n under a log-normal rate"""
    population: int = 100
    horizon: float = 5.0
    n: int = 50
    prior_mu: float = 0.0
    prior_sigma: float = 0.25


@dataclass(frozen=True)
class SpatialPoissonParams:
    """Poisson counts on a grid x grid partition of [0, length]^2 with log-normal intensities"""
    grid: int = 5
    length: float = 5.0
    decay: float = 2.0

    @property
    def cells(self) -> int:
        return self.grid * self.grid


ModelParams = Union[LinearGaussianParams, EpidemicParams, SpatialPoissonParams]


@dataclass(frozen=True)
class ModelSpec:
    name: str
    n: int
    d: int
    params: ModelParams

    def __post_init__(self):
        problems = []
        if self.name not in MODEL_NAMES:
            problems.append(f"unknown model '{self.name}' (expected one of {', '.join(MODEL_NAMES)})")
        if self.n < 1:
            problems.append(f"n must be >= 1, got {self.n}")
        if self.d < 1:
            problems.append(f"d must be >= 1, got {self.d}")
        expected = {'linear_gaussian': LinearGaussianParams, 'epidemic': EpidemicParams,
                    'spatial_poisson': SpatialPoissonParams}.get(self.name)
        if expected is not None and not isinstance(self.params, expected):
            problems.append(f"model '{self.name}' needs {expected.__name__}, got {type(self.params).__name__}")
        if problems:
            raise ConfigurationError(f"Invalid model spec: {'; '.join(problems)}")

    @classmethod
    def linear_gaussian(cls, n: int = 50, d: int = 50, **kwargs) -> 'ModelSpec':
        return cls('linear_gaussian', n, d, LinearGaussianParams(n=n, d=d, **kwargs))

    @classmethod
    def epidemic(cls, **kwargs) -> 'ModelSpec':
        params = EpidemicParams(**kwargs)
        return cls('epidemic', params.n, 1, params)

    @classmethod
    def spatial_poisson(cls, **kwargs) -> 'ModelSpec':
        params = SpatialPoissonParams(**kwargs)
        return cls('spatial_poisson', params.cells, params.cells, params)


def _kernel_from_dict(section: Dict[str, Any], default: KernelSettings) -> KernelSettings:
    if section is None:
        return default
    unknown = set(section) - {'amplitude', 'lengthscale'}
    if unknown:
        raise ConfigurationError(f"Unknown kernel keys: {sorted(unknown)}")
    return KernelSettings(
        amplitude=float(section.get('amplitude', default.amplitude)),
        lengthscale=section.get('lengthscale', default.lengthscale)
    )


def model_spec_from_dict(section: Dict[str, Any]) -> ModelSpec:
    """
    Build a ModelSpec from the `models` config section, e.g.

        models:
          name: epidemic
          epidemic: {population: 100, horizon: 5.0, n: 50}
    """
    if not isinstance(section, dict) or 'name' not in section:
        raise ConfigurationError("The models section needs a 'name' key")
    name = section['name']
    unknown = set(section) - {'name', *MODEL_NAMES}
    if unknown:
        raise ConfigurationError(f"Unknown keys in models section: {sorted(unknown)}")
    options = dict(section.get(name) or {})

    try:
        if name == 'linear_gaussian':
            prior = _kernel_from_dict(options.pop('prior_kernel', None), KernelSettings(1.0))
            noise = _kernel_from_dict(options.pop('noise_kernel', None), KernelSettings(0.01))
            _reject_unknown(options, LinearGaussianParams, 'linear_gaussian')
            return ModelSpec.linear_gaussian(prior_kernel=prior, noise_kernel=noise, **options)
        if name == 'epidemic':
            _reject_unknown(options, EpidemicParams, 'epidemic')
            return ModelSpec.epidemic(**options)
        if name == 'spatial_poisson':
            _reject_unknown(options, SpatialPoissonParams, 'spatial_poisson')
            return ModelSpec.spatial_poisson(**options)
    except TypeError as e:
        raise ConfigurationError(f"Invalid {name} parameters: {e}") from None
    raise ConfigurationError(f"Unknown model '{name}' (expected one of {', '.join(MODEL_NAMES)})")


def _reject_unknown(options: Dict[str, Any], params_cls, label: str) -> None:
    known = {f.name for f in fields(params_cls)}
    unknown = set(options) - known
    if unknown:
        raise ConfigurationError(f"Unknown {label} parameters: {sorted(unknown)}")
