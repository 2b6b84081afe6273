"""
Greedy observation selectors. Every selector returns a SelectorReport whose
design lists original candidate indices in the order they were chosen.

Ties are broken by the lowest original index everywhere.
"""

import itertools
import logging
import math
import time
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy import linalg

from lib.errors import BudgetExceededError, ConfigurationError, DegenerateBlockError, UnsupportedModelError
from lib.mi import mi_closed_form, mi_nmc
from lib.models import (JointSampleSet, LinearGaussianModel, ObservationModel, exact_posterior_quantities)
from lib.models.base import SeedLike, as_seed_sequence
from lib.numerics import Design, cholesky_with_jitter, logdet_psd, sample_covariance, schur_complement, \
    select_submatrix, symmetrize
from lib.op_stats import OpCounter, OpSnapshot
from lib.score import build_score_matrix

logger = logging.getLogger(__name__)

LSIG = 'lsig'
GAUSS = 'gauss'
NMC_GREEDY = 'nmc'
RANDOM = 'random'
EXHAUSTIVE = 'exhaustive'
EXACT_GREEDY = 'exact_greedy'

RECHECK_EVERY = 10
RECHECK_TOLERANCE = 1e-8
EXHAUSTIVE_LIMIT = 10 ** 6


@dataclass(frozen=True)
class StepRecord:
    index: int
    criterion: float
    wall_time_s: float
    ops: OpSnapshot     # cumulative up to and including this step


@dataclass(frozen=True)
class SelectorReport:
    selector: str
    design: Design
    per_step: Tuple[StepRecord, ...]

    @property
    def op_counters(self) -> OpSnapshot:
        return self.per_step[-1].ops if self.per_step else OpSnapshot()

    def prefix(self, k: int) -> Design:
        return self.design.prefix(k)

    def prefix_ops(self, k: int) -> OpSnapshot:
        return self.per_step[k - 1].ops

    def prefix_wall_time(self, k: int) -> float:
        return float(sum(step.wall_time_s for step in self.per_step[:k]))


def argmax_lowest(values: np.ndarray) -> int:
    """Position of the largest value, NaN counted as -inf, lowest position on ties"""
    values = np.asarray(values, dtype=float)
    return int(np.argmax(np.where(np.isnan(values), -np.inf, values)))


def _check_k(n: int, k: int) -> None:
    if not 1 <= k <= n:
        raise ConfigurationError(f"Design size k must satisfy 1 <= k <= n={n}, got {k}")


class _StepLog:
    """Accumulates StepRecords with per-step wall time and cumulative ops"""

    def __init__(self, selector: str, n: int, counter: OpCounter):
        self.selector = selector
        self.design = Design.empty(n)
        self.counter = counter
        self.steps = []
        self._started = time.perf_counter()

    def record(self, index: int, criterion: float) -> None:
        now = time.perf_counter()
        self.design = self.design.with_index(index)
        self.steps.append(StepRecord(int(index), float(criterion), now - self._started, self.counter.snapshot()))
        logger.debug(f"{self.selector} step {len(self.steps)}: index {index}, criterion {criterion:.6g}")
        self._started = now

    def report(self) -> SelectorReport:
        return SelectorReport(self.selector, self.design, tuple(self.steps))


def lsig_select(F: np.ndarray, S: np.ndarray, k: int, counter: Optional[OpCounter] = None,
                selector: str = LSIG) -> SelectorReport:
    """
    Greedy rule i* = argmax_i diag(F S)_i over the surviving candidates.

    After each pick F is shrunk to the surviving rows and columns and S is
    replaced by the Schur complement of the original S on everything picked
    so far.
    """
    F = symmetrize(F)
    S = symmetrize(S)
    n = F.shape[0]
    if F.shape != (n, n) or S.shape != (n, n):
        raise ConfigurationError(f"F and S must both be square of equal size, got {F.shape} and {S.shape}")
    _check_k(n, k)
    counter = counter or OpCounter()
    log = _StepLog(selector, n, counter)

    F_cur, S_cur = F, S
    for _ in range(k):
        surviving = log.design.complement()
        b = len(surviving)
        criterion = np.einsum('ij,ji->i', F_cur, S_cur)
        counter.add(aux_mults=b * b)
        pos = argmax_lowest(criterion)
        chosen = log.design.with_index(surviving.original(pos))

        try:
            S_cur = schur_complement(S, chosen.indices, counter)
        except DegenerateBlockError as e:
            e.partial_design = chosen
            raise
        rest = chosen.complement().surviving
        F_cur = select_submatrix(F, rest, rest)
        log.record(surviving.original(pos), criterion[pos])
    return log.report()


def _conditional_variances(cov: np.ndarray, L: np.ndarray, chosen, candidates) -> np.ndarray:
    """Var(Y_i | Y_A) for each candidate i via the Cholesky factor L of cov[A,A]"""
    diag = np.diag(cov)[candidates]
    if not chosen:
        return diag
    W = linalg.solve_triangular(L, cov[np.ix_(chosen, candidates)], lower=True)
    return diag - np.sum(W * W, axis=0)


def _append_factor(L: np.ndarray, cov: np.ndarray, chosen, index: int, variance: float) -> np.ndarray:
    """Cholesky factor of cov[A+i, A+i] from that of cov[A, A]"""
    a = L.shape[0]
    grown = np.zeros((a + 1, a + 1))
    grown[:a, :a] = L
    if a:
        grown[a, :a] = linalg.solve_triangular(L, cov[np.ix_(chosen, [index])], lower=True).ravel()
    grown[a, a] = np.sqrt(variance)
    return grown


def gauss_greedy_select(cov_y: np.ndarray, cov_y_given_x: np.ndarray, k: int,
                        counter: Optional[OpCounter] = None, selector: str = GAUSS,
                        recheck_every: int = RECHECK_EVERY) -> SelectorReport:
    """
    Greedy maximization of log det Sigma_Y[A+i] - log det Sigma_{Y|X}[A+i].

    Both log-determinants are grown one index at a time from Cholesky
    factors of the chosen blocks. Every `recheck_every` steps the running
    values are compared with a direct factorization and resynced on drift.
    """
    cov_y = symmetrize(cov_y)
    cov_c = symmetrize(cov_y_given_x)
    n = cov_y.shape[0]
    if cov_y.shape != (n, n) or cov_c.shape != (n, n):
        raise ConfigurationError(f"Covariances must be square of equal size, got {cov_y.shape} and {cov_c.shape}")
    _check_k(n, k)
    counter = counter or OpCounter()
    log = _StepLog(selector, n, counter)

    L_y, L_c = np.zeros((0, 0)), np.zeros((0, 0))
    logdet_y = logdet_c = 0.0
    for _ in range(k):
        chosen = list(log.design.indices)
        candidates = list(log.design.complement().surviving)
        a, b = len(chosen), len(candidates)
        var_y = _conditional_variances(cov_y, L_y, chosen, candidates)
        var_c = _conditional_variances(cov_c, L_c, chosen, candidates)
        counter.add(mults=2 * b * a * a)

        valid = (var_y > 0) & (var_c > 0)
        if not np.any(valid):
            raise DegenerateBlockError(f"No candidate keeps the conditioning blocks on {chosen} positive definite",
                                       chosen)
        with np.errstate(divide='ignore', invalid='ignore'):
            criterion = np.where(valid, (logdet_y + np.log(var_y)) - (logdet_c + np.log(var_c)), -np.inf)
        pos = argmax_lowest(criterion)
        index = candidates[pos]

        L_y = _append_factor(L_y, cov_y, chosen, index, var_y[pos])
        L_c = _append_factor(L_c, cov_c, chosen, index, var_c[pos])
        logdet_y += float(np.log(var_y[pos]))
        logdet_c += float(np.log(var_c[pos]))

        picked = chosen + [index]
        if recheck_every and len(picked) % recheck_every == 0:
            direct = logdet_psd(cov_y[np.ix_(picked, picked)], counter) - logdet_psd(
                cov_c[np.ix_(picked, picked)], counter)
            running = logdet_y - logdet_c
            if abs(direct - running) > RECHECK_TOLERANCE * max(1.0, abs(direct)):
                logger.warning(f"{selector}: incremental log-det drifted by {abs(direct - running):.3e} "
                               f"after {len(picked)} steps, refactorizing")
                L_y = cholesky_with_jitter(cov_y[np.ix_(picked, picked)], picked, counter)
                L_c = cholesky_with_jitter(cov_c[np.ix_(picked, picked)], picked, counter)
                logdet_y = float(2.0 * np.sum(np.log(np.diag(L_y))))
                logdet_c = float(2.0 * np.sum(np.log(np.diag(L_c))))
        log.record(index, criterion[pos])
    return log.report()


def _require_samples(samples: Optional[JointSampleSet], selector: str) -> JointSampleSet:
    if samples is None:
        raise ConfigurationError(f"{selector} needs joint samples unless exact moments are used")
    return samples


def select_lsig(model: ObservationModel, samples: Optional[JointSampleSet], k: int,
                counter: Optional[OpCounter] = None, exact_moments: bool = False,
                workers: int = 1) -> SelectorReport:
    """LSIG with F and S = Sigma_Y estimated from samples, or exact for linear_gaussian"""
    counter = counter or OpCounter()
    if exact_moments:
        quantities = exact_posterior_quantities(model)
        return lsig_select(quantities.score_matrix, quantities.cov_y, k, counter)
    samples = _require_samples(samples, LSIG)
    F = build_score_matrix(model, samples, counter, workers).F
    return lsig_select(F, sample_covariance(samples.y), k, counter)


def select_gauss_greedy(model: ObservationModel, samples: Optional[JointSampleSet], k: int,
                        counter: Optional[OpCounter] = None, exact_moments: bool = False) -> SelectorReport:
    """Gaussian approximation from the joint sample covariance of (X, Y), or exact for linear_gaussian"""
    counter = counter or OpCounter()
    if exact_moments:
        quantities = exact_posterior_quantities(model)
        return gauss_greedy_select(quantities.cov_y, model.noise_cov, k, counter)

    samples = _require_samples(samples, GAUSS)
    d = model.d
    joint = sample_covariance(np.hstack([samples.x, samples.y]))
    cov_y = joint[d:, d:]
    # Conditioning on the x block leaves the y block in order
    cov_y_given_x = schur_complement(joint, range(d))
    counter.add(model_evals=samples.M, aux_mults=d ** 3 + model.n * d * d)
    return gauss_greedy_select(cov_y, cov_y_given_x, k, counter)


def greedy_by_estimator(n: int, k: int, estimate: Callable[[Design, int], float],
                        counter: Optional[OpCounter] = None, selector: str = NMC_GREEDY) -> SelectorReport:
    """
    Standard greedy: at step s pick argmax_i estimate(A + i, s).

    The shared I(X; Y_A) term of the incremental gain is the same for every
    candidate, so maximizing I(X; Y_{A+i}) picks the same index.
    """
    _check_k(n, k)
    counter = counter or OpCounter()
    log = _StepLog(selector, n, counter)
    for step in range(k):
        candidates = log.design.complement().surviving
        values = np.array([estimate(log.design.with_index(i), step) for i in candidates])
        pos = argmax_lowest(values)
        log.record(candidates[pos], values[pos])
    return log.report()


def select_nmc_greedy(model: ObservationModel, k: int, M_in: int, M_out: int, seed: SeedLike,
                      counter: Optional[OpCounter] = None, recycle_inner: bool = False) -> SelectorReport:
    """Greedy on NMC estimates; all candidates of one step share that step's seed"""
    counter = counter or OpCounter()
    step_seeds = as_seed_sequence(seed).spawn(k) if 1 <= k <= model.n else []

    def estimate(design: Design, step: int) -> float:
        return mi_nmc(model, design, M_in, M_out, step_seeds[step], recycle_inner, counter).value

    return greedy_by_estimator(model.n, k, estimate, counter, NMC_GREEDY)


def select_exact_greedy(model: ObservationModel, k: int, counter: Optional[OpCounter] = None) -> SelectorReport:
    """Standard greedy on the closed-form MI of a linear_gaussian model"""
    if not isinstance(model, LinearGaussianModel):
        raise UnsupportedModelError(f"Exact greedy needs closed-form MI, not available for {model.name}")
    counter = counter or OpCounter()
    return greedy_by_estimator(model.n, k, lambda design, _: mi_closed_form(model, design, counter).value,
                               counter, EXACT_GREEDY)


def select_random(n: int, k: int, seed: SeedLike, counter: Optional[OpCounter] = None) -> SelectorReport:
    """Uniform k-subset without replacement"""
    _check_k(n, k)
    counter = counter or OpCounter()
    rng = np.random.default_rng(as_seed_sequence(seed))
    log = _StepLog(RANDOM, n, counter)
    for index in rng.choice(n, size=k, replace=False):
        log.record(int(index), float('nan'))
    return log.report()


def select_exhaustive(model: ObservationModel, k: int, counter: Optional[OpCounter] = None,
                      limit: int = EXHAUSTIVE_LIMIT) -> Design:
    """Best k-subset by closed-form MI; the first subset in lexicographic order wins ties"""
    if not isinstance(model, LinearGaussianModel):
        raise UnsupportedModelError(f"Exhaustive search needs closed-form MI, not available for {model.name}")
    _check_k(model.n, k)
    count = math.comb(model.n, k)
    if count > limit:
        raise BudgetExceededError(f"Exhaustive search over C({model.n}, {k}) = {count} subsets exceeds {limit}",
                                  count)
    best, best_value = None, -np.inf
    for subset in itertools.combinations(range(model.n), k):
        value = mi_closed_form(model, subset, counter).value
        if value > best_value:
            best, best_value = subset, value
    logger.info(f"Exhaustive search over {count} subsets: best MI {best_value:.6g}")
    return Design(best, model.n)
