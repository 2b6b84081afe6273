"""
Seeded multi-trial experiment runner.

Every trial derives its own streams from the master seed (joint samples,
NMC-greedy, random selection, evaluation), runs each configured selector
once up to k_max and scores every prefix with a common evaluator. Within a
trial all selectors are evaluated with the same seed and budgets.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from threading import Lock
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from lib.errors import OedselError
from lib.harness.config import ExperimentConfig
from lib.mi import MIEstimate, mi_closed_form, mi_nmc
from lib.models import JointSampleSet, ObservationModel, build_model, sample_joint
from lib.numerics import Design
from lib.op_stats import OpCounter, OpSnapshot, SelectionStats
from lib.ResultWriter import ResultRow, ResultWriter, TrialFailure
from lib.selectors import (EXACT_GREEDY, EXHAUSTIVE, GAUSS, LSIG, NMC_GREEDY, RANDOM, SelectorReport,
                           select_exact_greedy, select_exhaustive, select_gauss_greedy, select_lsig,
                           select_nmc_greedy, select_random)

logger = logging.getLogger(__name__)

SAMPLE_BASED = (LSIG, GAUSS)


@dataclass(frozen=True)
class ExperimentResult:
    rows: List[ResultRow]
    failures: List[TrialFailure]

    @property
    def exit_code(self) -> int:
        return 2 if self.failures else 0


@dataclass(frozen=True)
class TrialStreams:
    samples: np.random.SeedSequence
    nmc: np.random.SeedSequence
    random: np.random.SeedSequence
    evaluation: np.random.SeedSequence

    @classmethod
    def spawn(cls, trial_seq: np.random.SeedSequence) -> 'TrialStreams':
        return cls(*trial_seq.spawn(4))


class DesignEvaluator:
    """MI of designs within one trial, cached by the sorted index set"""

    def __init__(self, model: ObservationModel, config: ExperimentConfig, seed: np.random.SeedSequence,
                 stats: Optional[SelectionStats] = None):
        self.model = model
        self.config = config
        self.seed = seed
        self.stats = stats
        self._cache: Dict[Tuple[int, ...], MIEstimate] = {}
        self._lock = Lock()

    def __call__(self, design: Design) -> MIEstimate:
        key = design.sorted_indices()
        with self._lock:
            cached = self._cache.get(key)
        if cached is not None:
            return cached
        if self.config.uses_closed_form:
            estimate = mi_closed_form(self.model, key)
        else:
            estimate = mi_nmc(self.model, key, self.config.eval_inner, self.config.eval_outer, self.seed,
                              self.config.recycle_inner)
        if self.stats is not None:
            self.stats.observe_evaluation(estimate.estimator)
        with self._lock:
            self._cache[key] = estimate
        return estimate


class ExperimentRunner:
    def __init__(self, config: ExperimentConfig, stats: Optional[SelectionStats] = None,
                 writer: Optional[ResultWriter] = None):
        self.config = config
        self.model = build_model(config.model)
        self.stats = stats
        self.writer = writer or ResultWriter(config.output, config.selectors)

    def run(self) -> ExperimentResult:
        config = self.config
        logger.info(f"Starting experiment: model={self.model.name}, selectors={list(config.selectors)}, "
                    f"k_max={config.k_max}, trials={config.trials}, seed={config.seed}")
        trial_seqs = np.random.SeedSequence(config.seed).spawn(config.trials)
        workers = 1 if config.deterministic else config.workers
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers, thread_name_prefix='trial') as pool:
                list(pool.map(self.run_trial, range(config.trials), trial_seqs))
        else:
            for trial, seq in enumerate(trial_seqs):
                self.run_trial(trial, seq)

        result = ExperimentResult(self.writer.rows(), self.writer.sorted_failures())
        if self.stats is not None:
            self.stats.mark_run_complete()
        logger.info(f"Experiment finished: {len(result.rows)} rows, {len(result.failures)} failed selector runs")
        return result

    def run_trial(self, trial: int, trial_seq: np.random.SeedSequence) -> None:
        streams = TrialStreams.spawn(trial_seq)
        evaluator = DesignEvaluator(self.model, self.config, streams.evaluation, self.stats)
        samples: Optional[JointSampleSet] = None
        logger.info(f"Trial {trial}: running {len(self.config.selectors)} selectors")

        for selector in self.config.selectors:
            try:
                if selector in SAMPLE_BASED and samples is None and not self.config.exact_moments_active():
                    samples = sample_joint(self.model, self.config.M, self.config.m, streams.samples)
                if selector in (RANDOM, EXHAUSTIVE):
                    self._run_per_k(trial, selector, streams, evaluator)
                else:
                    self._run_greedy(trial, selector, samples, streams, evaluator)
            except Exception as e:
                if not isinstance(e, OedselError):
                    logger.error(f"Trial {trial}: unexpected error in {selector}: {str(e)}", exc_info=True)
                else:
                    logger.error(f"Trial {trial}: {selector} failed: {str(e)}")
                self.writer.add_failure(TrialFailure(trial, selector, type(e).__name__, str(e)))
                if self.stats is not None:
                    self.stats.observe_failure(selector, e)

    def _greedy_report(self, selector: str, samples: Optional[JointSampleSet], streams: TrialStreams,
                       counter: OpCounter) -> SelectorReport:
        config = self.config
        if selector == LSIG:
            return select_lsig(self.model, samples, config.k_max, counter, config.exact_moments_active(),
                               config.score_workers)
        if selector == GAUSS:
            return select_gauss_greedy(self.model, samples, config.k_max, counter, config.exact_moments_active())
        if selector == NMC_GREEDY:
            return select_nmc_greedy(self.model, config.k_max, config.nmc_inner, config.nmc_outer, streams.nmc,
                                     counter, config.recycle_inner)
        if selector == EXACT_GREEDY:
            return select_exact_greedy(self.model, config.k_max, counter)
        raise ValueError(f"Not a greedy selector: {selector}")

    def _run_greedy(self, trial: int, selector: str, samples: Optional[JointSampleSet], streams: TrialStreams,
                    evaluator: DesignEvaluator) -> None:
        counter = OpCounter()
        started = time.perf_counter()
        report = self._greedy_report(selector, samples, streams, counter)
        setup = (time.perf_counter() - started) - report.prefix_wall_time(len(report.per_step))
        if self.stats is not None:
            self.stats.observe_steps(selector, [s.wall_time_s for s in report.per_step])
        for k in range(1, self.config.k_max + 1):
            seconds = setup + report.prefix_wall_time(k)
            self._emit(trial, selector, report.prefix(k), evaluator, seconds, report.prefix_ops(k))

    def _run_per_k(self, trial: int, selector: str, streams: TrialStreams, evaluator: DesignEvaluator) -> None:
        random_seqs = streams.random.spawn(self.config.k_max)
        for k in range(1, self.config.k_max + 1):
            counter = OpCounter()
            started = time.perf_counter()
            if selector == RANDOM:
                design = select_random(self.model.n, k, random_seqs[k - 1], counter).design
            else:
                design = select_exhaustive(self.model, k, counter)
            self._emit(trial, selector, design, evaluator, time.perf_counter() - started, counter.snapshot())

    def _emit(self, trial: int, selector: str, design: Design, evaluator: Callable[[Design], MIEstimate],
              seconds: float, ops: OpSnapshot) -> None:
        estimate = evaluator(design)
        wall_time_ms = 0.0 if self.config.deterministic else 1000.0 * max(0.0, seconds)
        self.writer.add_row(ResultRow(
            trial=trial,
            selector=selector,
            k=len(design),
            design=design.to_string(),
            mi_value=estimate.value,
            mi_stderr=estimate.stderr,
            wall_time_ms=wall_time_ms,
            op_mults=ops.mults,
            op_factorizations=ops.factorizations,
            op_model_evals=ops.model_evals,
        ))


def run_experiment(config: ExperimentConfig, stats: Optional[SelectionStats] = None) -> ExperimentResult:
    return ExperimentRunner(config, stats).run()
