import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from lib.errors import ConfigurationError
from lib.models.spec import ModelSpec

logger = logging.getLogger(__name__)

SeedLike = Union[int, np.random.SeedSequence, None]


def as_seed_sequence(seed: SeedLike) -> np.random.SeedSequence:
    """Fresh SeedSequence for `seed`; spawning from it never disturbs the caller's copy"""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key, pool_size=seed.pool_size)
    return np.random.SeedSequence(seed)


@dataclass(frozen=True)
class SeedRecord:
    """Provenance of a random draw: the SeedSequence entropy and spawn key"""
    entropy: int
    spawn_key: Tuple[int, ...]

    @classmethod
    def of(cls, seq: np.random.SeedSequence) -> 'SeedRecord':
        return cls(int(seq.entropy), tuple(int(k) for k in seq.spawn_key))


@dataclass(frozen=True)
class JointSampleSet:
    """M joint draws (x, y) plus an independent bank of m prior draws"""
    x: np.ndarray
    y: np.ndarray
    prior_bank: np.ndarray
    seed: SeedRecord

    @property
    def M(self) -> int:
        return self.x.shape[0]

    @property
    def m(self) -> int:
        return self.prior_bank.shape[0]


class ObservationModel(ABC):
    """
    A Bayesian model pi(x) pi(y | x) with y in R^n and x in R^d.

    Batched methods broadcast over leading dimensions: y has shape (..., n)
    and x has shape (..., d). Passing `indices` to log_likelihood restricts the
    likelihood to those observation coordinates.
    """

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        self.name = spec.name
        self.n = spec.n
        self.d = spec.d

    @abstractmethod
    def sample_prior(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw `size` parameters, shape (size, d)"""

    @abstractmethod
    def sample_likelihood(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Draw one observation per parameter row, shape (M, n)"""

    @abstractmethod
    def log_likelihood(self, y: np.ndarray, x: np.ndarray,
                       indices: Optional[Sequence[int]] = None) -> np.ndarray:
        """log pi(y_A | x) in nats"""

    @abstractmethod
    def grad_y_log_likelihood(self, y: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Gradient of log pi(y | x) with respect to y, shape (..., n)"""

    def grad_y_likelihood(self, y: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Gradient of pi(y | x) with respect to y, computed as pi * grad log pi"""
        density = np.exp(self.log_likelihood(y, x))
        return density[..., None] * self.grad_y_log_likelihood(y, x)

    def _indices(self, indices: Optional[Sequence[int]]) -> np.ndarray:
        if indices is None:
            return np.arange(self.n)
        idx = np.asarray(indices, dtype=int).reshape(-1)
        bad = idx[(idx < 0) | (idx >= self.n)]
        if bad.size:
            raise IndexError(f"Observation indices {bad.tolist()} out of range for n={self.n}")
        return idx


class SeparableCountModel(ObservationModel):
    """Count model whose coordinates are independent given x"""

    @abstractmethod
    def log_likelihood_terms(self, y: np.ndarray, x: np.ndarray,
                             indices: Optional[Sequence[int]] = None) -> np.ndarray:
        """Per-coordinate log densities, shape (..., |indices|)"""

    @abstractmethod
    def relaxed_log_likelihood_terms(self, y: np.ndarray, x: np.ndarray,
                                     indices: Optional[Sequence[int]] = None) -> np.ndarray:
        """
        log_likelihood_terms without the support check on y. The continuous
        relaxation stays finite slightly past the integer support, which lets
        central differences straddle a boundary count.
        """

    def log_likelihood(self, y, x, indices=None):
        return np.sum(self.log_likelihood_terms(y, x, indices), axis=-1)


def sample_joint(model: ObservationModel, M: int, m: int, seed: SeedLike) -> JointSampleSet:
    """
    Draw M joint samples and an independent bank of m prior samples.

    The joint draws and the bank use disjoint child streams of `seed`.
    """
    if M < 2 or m < 1:
        raise ConfigurationError(f"sample_joint needs M >= 2 and m >= 1, got M={M}, m={m}")
    seq = as_seed_sequence(seed)
    joint_seq, bank_seq = seq.spawn(2)
    joint_rng = np.random.default_rng(joint_seq)
    x = model.sample_prior(joint_rng, M)
    y = model.sample_likelihood(x, joint_rng)
    bank = model.sample_prior(np.random.default_rng(bank_seq), m)
    logger.debug(f"Sampled {M} joint draws and {m} bank draws for {model.name}")
    return JointSampleSet(x=x, y=y, prior_bank=bank, seed=SeedRecord.of(seq))
