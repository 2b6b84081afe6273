"""
Monte Carlo estimate of the posterior score grad_y log pi(x | y) and the
matrix F = E[score score^T] used by the LSIG selector.

The marginal score grad_y log pi_Y(y) is estimated from a bank of prior
draws x^1..x^m, shared by every joint sample, as the mixture score
sum_j w_j grad_y log pi(y | x^j) with w = softmax_j log pi(y | x^j). This is
algebraically the ratio sum_j grad pi(y | x^j) / sum_j pi(y | x^j) without
its underflow.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from lib.errors import DegenerateMixtureError
from lib.models import JointSampleSet, ObservationModel
from lib.numerics import symmetrize
from lib.op_stats import OpCounter

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScoreMatrix:
    F: np.ndarray
    M: int
    m: int


def mixture_weights(model: ObservationModel, y: np.ndarray, bank: np.ndarray) -> np.ndarray:
    """Softmax weights of the bank components at y"""
    log_w = model.log_likelihood(y[None, :], bank)
    total = logsumexp(log_w)
    if not np.isfinite(total):
        raise DegenerateMixtureError("Observation has zero likelihood under every prior-bank component")
    return np.exp(log_w - total)


def mixture_score(model: ObservationModel, y: np.ndarray, bank: np.ndarray) -> np.ndarray:
    """Estimate of grad_y log pi_Y(y) from the prior bank"""
    weights = mixture_weights(model, y, bank)
    return weights @ model.grad_y_log_likelihood(y[None, :], bank)


def mixture_score_ratio(model: ObservationModel, y: np.ndarray, bank: np.ndarray) -> np.ndarray:
    """Direct ratio sum_j grad pi(y | x^j) / sum_j pi(y | x^j); underflows for peaked likelihoods"""
    density = np.exp(model.log_likelihood(y[None, :], bank))
    return model.grad_y_likelihood(y[None, :], bank).sum(axis=0) / density.sum()


def grad_log_posterior_hat(model: ObservationModel, x: np.ndarray, y: np.ndarray,
                           prior_bank: np.ndarray) -> np.ndarray:
    """grad_y log pi(y | x) minus the mixture estimate of grad_y log pi_Y(y)"""
    if prior_bank.shape[0] < 1:
        raise ValueError("Prior bank must contain at least one draw")
    return model.grad_y_log_likelihood(y, x) - mixture_score(model, y, prior_bank)


def _score_rows(model: ObservationModel, samples: JointSampleSet, start: int, stop: int) -> np.ndarray:
    rows = np.empty((stop - start, model.n))
    for i in range(start, stop):
        try:
            rows[i - start] = grad_log_posterior_hat(model, samples.x[i], samples.y[i], samples.prior_bank)
        except DegenerateMixtureError as e:
            raise DegenerateMixtureError(f"Joint sample {i}: {str(e)}", sample_index=i) from None
    return rows


def build_score_matrix(model: ObservationModel, samples: JointSampleSet,
                       counter: Optional[OpCounter] = None, workers: int = 1) -> ScoreMatrix:
    """
    F = (1/M) sum_i F^i F^i^T with F^i the estimated posterior score at sample i.

    Rows are computed in chunks (optionally on a thread pool) and reduced in a
    fixed order afterwards, so F does not depend on the worker count.
    """
    M, m = samples.M, samples.m
    workers = max(1, int(workers))
    bounds = np.linspace(0, M, min(M, workers * 4) + 1).astype(int) if workers > 1 else np.array([0, M])
    chunks = [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers, thread_name_prefix='score') as pool:
            parts = list(pool.map(lambda c: _score_rows(model, samples, *c), chunks))
    else:
        parts = [_score_rows(model, samples, a, b) for a, b in chunks]
    scores = np.vstack(parts)

    F = symmetrize(scores.T @ scores / M)
    if counter is not None:
        counter.add(model_evals=M + 2 * M * m)
    logger.debug(f"Built score matrix for {model.name} from M={M}, m={m}, trace={np.trace(F):.4g}")
    return ScoreMatrix(F=F, M=M, m=m)
