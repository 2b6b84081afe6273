"""
Probabilistic observation models: the linear-Gaussian, epidemic and spatial
Poisson benchmarks behind one batched interface.
"""

from typing import Dict, Optional, Sequence

import numpy as np

from lib.errors import UnsupportedModelError
from lib.models.base import (JointSampleSet, ObservationModel, SeedRecord, SeparableCountModel,
                             as_seed_sequence, sample_joint)
from lib.models.epidemic import EpidemicModel
from lib.models.linear_gaussian import LinearGaussianModel, PosteriorQuantities
from lib.models.spatial_poisson import SpatialPoissonModel
from lib.models.spec import (MODEL_NAMES, EpidemicParams, KernelSettings, LinearGaussianParams, ModelSpec,
                             SpatialPoissonParams, model_spec_from_dict)

_MODEL_CLASSES = {
    'linear_gaussian': LinearGaussianModel,
    'epidemic': EpidemicModel,
    'spatial_poisson': SpatialPoissonModel,
}


def build_model(spec: ModelSpec) -> ObservationModel:
    return _MODEL_CLASSES[spec.name](spec)


def loglik(model: ObservationModel, y, x, indices: Optional[Sequence[int]] = None) -> np.ndarray:
    return model.log_likelihood(y, x, indices)


def grad_y_loglik(model: ObservationModel, y, x) -> np.ndarray:
    return model.grad_y_log_likelihood(y, x)


def grad_y_lik(model: ObservationModel, y, x) -> np.ndarray:
    return model.grad_y_likelihood(y, x)


def _require_linear_gaussian(model: ObservationModel, operation: str) -> LinearGaussianModel:
    if not isinstance(model, LinearGaussianModel):
        raise UnsupportedModelError(f"{operation} is only defined for linear_gaussian, not {model.name}")
    return model


def exact_posterior_quantities(model: ObservationModel) -> PosteriorQuantities:
    return _require_linear_gaussian(model, 'exact_posterior_quantities').exact_posterior_quantities()


def model_spectrum(model: ObservationModel) -> Dict[str, np.ndarray]:
    return _require_linear_gaussian(model, 'model_spectrum').spectrum()


__all__ = [
    'MODEL_NAMES', 'EpidemicModel', 'EpidemicParams', 'JointSampleSet', 'KernelSettings',
    'LinearGaussianModel', 'LinearGaussianParams', 'ModelSpec', 'ObservationModel', 'PosteriorQuantities',
    'SeedRecord', 'SeparableCountModel', 'SpatialPoissonModel', 'SpatialPoissonParams', 'as_seed_sequence',
    'build_model', 'exact_posterior_quantities', 'grad_y_lik', 'grad_y_loglik', 'loglik', 'model_spec_from_dict',
    'model_spectrum', 'sample_joint',
]
