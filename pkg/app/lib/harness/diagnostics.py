"""
Self-checks behind the check-gradients, bench and spectrum commands.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from lib.errors import UnsupportedModelError
from lib.models import EpidemicModel, ModelSpec, ObservationModel, SeparableCountModel, build_model, model_spectrum, \
    sample_joint
from lib.models.base import SeedLike
from lib.op_stats import OpCounter
from lib.selectors import select_gauss_greedy, select_lsig, select_nmc_greedy

logger = logging.getLogger(__name__)

GRADIENT_TOLERANCE = 1e-5
RELATIVE_FLOOR = 1e-3
STEP_SCALE = 1e-5
CORRUPTION = 1e-3
BENCH_SPREAD = 2.0


@dataclass(frozen=True)
class GradientCheckReport:
    model: str
    points: int
    max_rel_err: float
    worst_sample: int
    worst_coordinate: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.max_rel_err < self.tolerance)

    def as_dict(self) -> Dict[str, Any]:
        return {**asdict(self), 'passed': self.passed}


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    """|a - fd| / max(|a|, |fd|, floor)"""
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), RELATIVE_FLOOR)
    return np.abs(analytic - numeric) / scale


def central_difference(model: ObservationModel, y: np.ndarray, x: np.ndarray, h: np.ndarray) -> np.ndarray:
    if isinstance(model, SeparableCountModel):
        # Term j only depends on y_j, so every coordinate can be stepped at once
        upper = model.relaxed_log_likelihood_terms(y + h, x)
        lower = model.relaxed_log_likelihood_terms(y - h, x)
        return (upper - lower) / (2.0 * h)

    grad = np.empty_like(y)
    for j in range(model.n):
        step = np.zeros_like(y)
        step[:, j] = h[:, j]
        grad[:, j] = (model.log_likelihood(y + step, x) - model.log_likelihood(y - step, x)) / (2.0 * h[:, j])
    return grad


def finite_difference_gradient(model: ObservationModel, y: np.ndarray, x: np.ndarray) -> np.ndarray:
    """
    Richardson-extrapolated central differences of log pi(y | x) in y,
    (4 D(h / 2) - D(h)) / 3 with h = 1e-5 * (1 + |y|), which cancels the h^2 term.
    """
    h = STEP_SCALE * (1.0 + np.abs(y))
    return (4.0 * central_difference(model, y, x, 0.5 * h) - central_difference(model, y, x, h)) / 3.0


def check_gradients(spec: ModelSpec, points: int = 200, seed: SeedLike = 0, corrupt: bool = False,
                    tolerance: float = GRADIENT_TOLERANCE) -> GradientCheckReport:
    """
    Compare the analytic grad_y log pi(y | x) against central differences at
    `points` joint samples. With `corrupt` the analytic gradient is scaled by
    1 + 1e-3 so the check must fail.
    """
    model = build_model(spec)
    samples = sample_joint(model, max(points, 2), 1, seed)
    x, y = samples.x[:points], samples.y[:points]

    analytic = model.grad_y_log_likelihood(y, x)
    if corrupt:
        analytic = analytic * (1.0 + CORRUPTION)
    numeric = finite_difference_gradient(model, y, x)
    errors = relative_error(analytic, numeric)

    worst = np.unravel_index(int(np.argmax(errors)), errors.shape)
    report = GradientCheckReport(
        model=model.name,
        points=int(points),
        max_rel_err=float(errors[worst]),
        worst_sample=int(worst[0]),
        worst_coordinate=int(worst[1]),
        tolerance=tolerance,
    )
    logger.info(f"Gradient check on {model.name}: max relative error {report.max_rel_err:.3e} "
                f"({'pass' if report.passed else 'FAIL'})")
    return report


@dataclass(frozen=True)
class BenchRow:
    n: int
    k: int
    lsig_mults: int
    lsig_ratio: float          # lsig_mults / (n k^3)
    gauss_mults: int
    gauss_ratio: float         # gauss_mults / (n k^4)
    nmc_mi_evaluations: int
    nmc_expected: int          # k (2n - k + 1) / 2


@dataclass(frozen=True)
class BenchReport:
    rows: List[BenchRow]

    @property
    def lsig_spread(self) -> float:
        ratios = [r.lsig_ratio for r in self.rows]
        return max(ratios) / min(ratios)

    @property
    def lsig_constant(self) -> float:
        """Geometric mean of the extreme ratios; every ratio lies within lsig_spread**0.5 of it"""
        ratios = [r.lsig_ratio for r in self.rows]
        return float(np.sqrt(max(ratios) * min(ratios)))

    @property
    def lsig_fits(self) -> bool:
        return self.lsig_spread <= BENCH_SPREAD ** 2

    @property
    def gauss_within_bound(self) -> bool:
        return all(r.gauss_ratio <= 1.0 for r in self.rows)

    @property
    def nmc_counts_exact(self) -> bool:
        return all(r.nmc_mi_evaluations == r.nmc_expected for r in self.rows)

    @property
    def passed(self) -> bool:
        return self.lsig_fits and self.gauss_within_bound and self.nmc_counts_exact

    def as_dict(self) -> Dict[str, Any]:
        return {
            'rows': [asdict(r) for r in self.rows],
            'lsig_constant': self.lsig_constant,
            'lsig_spread': self.lsig_spread,
            'lsig_fits': self.lsig_fits,
            'gauss_within_bound': self.gauss_within_bound,
            'nmc_counts_exact': self.nmc_counts_exact,
            'passed': self.passed,
        }


def run_bench(ns: Sequence[int] = (20, 40, 80), ks: Sequence[int] = (2, 4, 8), seed: SeedLike = 0,
              nmc_budgets: Optional[Sequence[int]] = (2, 2)) -> BenchReport:
    """
    Operation counts of the selectors on linear-Gaussian instances with n = d.

    LSIG and Gaussian-greedy run on exact moments; NMC-greedy runs with tiny
    budgets since only its number of MI evaluations is reported.
    """
    rows = []
    for n in ns:
        model = build_model(ModelSpec.linear_gaussian(n=n, d=n))
        for k in ks:
            lsig_counter, gauss_counter, nmc_counter = OpCounter(), OpCounter(), OpCounter()
            select_lsig(model, None, k, lsig_counter, exact_moments=True)
            select_gauss_greedy(model, None, k, gauss_counter, exact_moments=True)
            select_nmc_greedy(model, k, nmc_budgets[0], nmc_budgets[1], seed, nmc_counter)
            lsig_mults = lsig_counter.snapshot().mults
            gauss_mults = gauss_counter.snapshot().mults
            rows.append(BenchRow(
                n=n,
                k=k,
                lsig_mults=lsig_mults,
                lsig_ratio=lsig_mults / (n * k ** 3),
                gauss_mults=gauss_mults,
                gauss_ratio=gauss_mults / (n * k ** 4),
                nmc_mi_evaluations=nmc_counter.snapshot().mi_evaluations,
                nmc_expected=k * (2 * n - k + 1) // 2,
            ))
            logger.debug(f"Bench n={n} k={k}: {rows[-1]}")
    report = BenchReport(rows)
    logger.info(f"Bench: LSIG constant {report.lsig_constant:.4g}, spread {report.lsig_spread:.3f}, "
                f"passed={report.passed}")
    return report


def spectrum(spec: ModelSpec) -> Dict[str, List[float]]:
    model = build_model(spec)
    return {name: values.tolist() for name, values in model_spectrum(model).items()}


def trajectory(spec: ModelSpec, rates: Optional[Sequence[float]] = None) -> Dict[str, Any]:
    """
    Expected infected counts N * p_i(x) over the observation times. Without
    `rates`, uses the prior median rate and one prior sigma either side.
    """
    model = build_model(spec)
    if not isinstance(model, EpidemicModel):
        raise UnsupportedModelError(f"trajectory needs the epidemic model, got {model.name}")
    if rates is None:
        rates = np.exp(model.prior_mu + model.prior_sigma * np.array([-1.0, 0.0, 1.0]))
    rates = np.asarray(rates, dtype=float).reshape(-1, 1)
    return {
        'times': model.times.tolist(),
        'rates': rates[:, 0].tolist(),
        'mean_counts': model.mean_trajectory(rates).tolist(),
    }
