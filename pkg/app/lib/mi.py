"""
Mutual information I(X; Y_A) for a design A, in nats.

mi_closed_form is exact for the linear-Gaussian model. mi_nmc is the nested
Monte Carlo contrast estimator that works for every model: for each outer joint
draw (x, y) it compares log pi(y_A | x) against the log of the inner average
of pi(y_A | x~) over fresh prior draws x~.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from lib.errors import ConfigurationError, DegenerateMixtureError, UnsupportedModelError
from lib.models import LinearGaussianModel, ObservationModel
from lib.models.base import SeedLike, as_seed_sequence
from lib.numerics import Design, logdet_psd, logmeanexp
from lib.op_stats import OpCounter

logger = logging.getLogger(__name__)

CLOSED_FORM = 'closed_form'
NMC = 'nmc'

# Upper bound on inner-loop array elements held at once
INNER_CHUNK_ELEMENTS = 2_000_000

DesignLike = Union[Design, Sequence[int]]


@dataclass(frozen=True)
class MIEstimate:
    value: float
    stderr: float
    estimator: str
    budgets: Optional[Tuple[int, int]] = None


def _design_indices(model: ObservationModel, design: DesignLike) -> Tuple[int, ...]:
    if isinstance(design, Design):
        if design.n != model.n:
            raise ConfigurationError(f"Design is over {design.n} candidates but {model.name} has n={model.n}")
        return design.indices
    return Design(tuple(design), model.n).indices


def mi_closed_form(model: ObservationModel, design: DesignLike,
                   counter: Optional[OpCounter] = None) -> MIEstimate:
    """1/2 log det(Sigma_Y[A,A] Sigma_eps[A,A]^-1); mi of the empty design is 0"""
    if not isinstance(model, LinearGaussianModel):
        raise UnsupportedModelError(f"Closed-form MI is only available for linear_gaussian, not {model.name}")
    indices = _design_indices(model, design)
    if counter is not None:
        counter.add(mi_evaluations=1)
    if not indices:
        return MIEstimate(0.0, 0.0, CLOSED_FORM)
    cov_y, cov_noise = model.marginal_blocks(indices)
    value = 0.5 * (logdet_psd(cov_y, counter) - logdet_psd(cov_noise, counter))
    return MIEstimate(float(value), 0.0, CLOSED_FORM)


def _chunk_rows(M_in: int, width: int) -> int:
    return max(1, INNER_CHUNK_ELEMENTS // (M_in * max(1, width)))


def mi_nmc(model: ObservationModel, design: DesignLike, M_in: int, M_out: int, seed: SeedLike,
           recycle_inner: bool = False, counter: Optional[OpCounter] = None) -> MIEstimate:
    """
    Nested Monte Carlo estimate with M_out outer joint draws and M_in inner prior draws.

    The outer and inner draws come from two child streams of `seed`, so a
    fixed seed gives the same joint draws for every design; greedy steps use
    this for common random numbers across candidates. Inner banks are fresh
    per outer draw unless recycle_inner is set, in which case one bank of
    M_in draws is shared by every outer draw.
    """
    if M_in < 2 or M_out < 2:
        raise ConfigurationError(f"NMC needs M_in >= 2 and M_out >= 2, got M_in={M_in}, M_out={M_out}")
    indices = _design_indices(model, design)
    budgets = (int(M_in), int(M_out))
    if counter is not None:
        counter.add(mi_evaluations=1)
    if not indices:
        return MIEstimate(0.0, 0.0, NMC, budgets)

    outer_seq, inner_seq = as_seed_sequence(seed).spawn(2)
    outer_rng = np.random.default_rng(outer_seq)
    inner_rng = np.random.default_rng(inner_seq)

    x = model.sample_prior(outer_rng, M_out)
    y = model.sample_likelihood(x, outer_rng)
    conditional = model.log_likelihood(y, x, indices)

    marginal = np.empty(M_out)
    shared_bank = model.sample_prior(inner_rng, M_in) if recycle_inner else None
    rows = _chunk_rows(M_in, max(model.d, len(indices)))
    for start in range(0, M_out, rows):
        stop = min(M_out, start + rows)
        if shared_bank is None:
            bank = model.sample_prior(inner_rng, (stop - start) * M_in).reshape(stop - start, M_in, model.d)
        else:
            bank = shared_bank[None, :, :]
        inner = model.log_likelihood(y[start:stop, None, :], bank, indices)
        marginal[start:stop] = logmeanexp(inner, axis=1)

    if not np.all(np.isfinite(marginal)):
        bad = int(np.flatnonzero(~np.isfinite(marginal))[0])
        raise DegenerateMixtureError(
            f"Outer draw {bad} has zero likelihood under every inner prior draw", sample_index=bad
        )

    terms = conditional - marginal
    value = float(np.mean(terms))
    stderr = float(np.std(terms, ddof=1) / np.sqrt(M_out))
    if counter is not None:
        counter.add(model_evals=M_out * (1 + M_in))
    logger.debug(f"NMC MI of {len(indices)} indices on {model.name}: {value:.6g} +/- {stderr:.3g}")
    return MIEstimate(value, stderr, NMC, budgets)
