import logging
import time
from dataclasses import dataclass, fields
from threading import Lock
from typing import Dict, Iterable, Optional

from prometheus_client import CollectorRegistry, Counter, Gauge, Histogram, start_http_server

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OpSnapshot:
    """Immutable copy of an OpCounter at one point of a run"""
    mults: int = 0
    factorizations: int = 0
    model_evals: int = 0
    mi_evaluations: int = 0
    aux_mults: int = 0

    def as_dict(self) -> Dict[str, int]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


class OpCounter:
    """
    Exact operation counts for one selector run.

    mults follows the cost model of the greedy methods: factorization of the
    conditioning block (a^3) plus the cross-block solve (b*a^2) for a
    conditioning set of size a and b remaining candidates. Row-dot products for
    diag(F S) and the downdate of the remaining block go to aux_mults.
    """

    def __init__(self):
        self._lock = Lock()
        self._counts = {f.name: 0 for f in fields(OpSnapshot)}

    def add(self, **increments: int) -> None:
        with self._lock:
            for name, value in increments.items():
                if name not in self._counts:
                    raise KeyError(f"Unknown operation counter: {name}")
                self._counts[name] += int(value)

    def snapshot(self) -> OpSnapshot:
        with self._lock:
            return OpSnapshot(**self._counts)


class SelectionStats:
    def __init__(self, service_name: str, registry: Optional[CollectorRegistry] = None):
        self.service_name = service_name
        self.registry = registry or CollectorRegistry()
        self._setup_metrics()

    def _setup_metrics(self):
        """Initialize Prometheus metrics for selector runs"""
        self.steps_total = Counter(
            'oedsel_selector_steps_total',
            'Total number of greedy steps taken',
            ['service', 'selector'],
            registry=self.registry
        )
        self.step_duration = Histogram(
            'oedsel_selector_step_duration_seconds',
            'Time spent in one selector step',
            ['service', 'selector'],
            buckets=(0.001, 0.01, 0.05, 0.1, 0.5, 1.0, 5.0, 30.0, 120.0),
            registry=self.registry
        )
        self.mi_evaluations_total = Counter(
            'oedsel_mi_evaluations_total',
            'Total number of mutual information evaluations',
            ['service', 'estimator'],
            registry=self.registry
        )
        self.trial_failures_total = Counter(
            'oedsel_trial_failures_total',
            'Total number of failed selector runs',
            ['service', 'selector', 'error_type'],
            registry=self.registry
        )
        self.last_run_timestamp = Gauge(
            'oedsel_last_run_timestamp_seconds',
            'Timestamp of the last completed experiment',
            ['service'],
            registry=self.registry
        )

    def observe_steps(self, selector: str, step_seconds: Iterable[float]) -> None:
        for seconds in step_seconds:
            self.steps_total.labels(service=self.service_name, selector=selector).inc()
            self.step_duration.labels(service=self.service_name, selector=selector).observe(seconds)

    def observe_evaluation(self, estimator: str) -> None:
        self.mi_evaluations_total.labels(service=self.service_name, estimator=estimator).inc()

    def observe_failure(self, selector: str, error: BaseException) -> None:
        self.trial_failures_total.labels(
            service=self.service_name, selector=selector, error_type=type(error).__name__
        ).inc()

    def mark_run_complete(self) -> None:
        self.last_run_timestamp.labels(service=self.service_name).set(time.time())

    def start_metrics_server(self, port: int) -> None:
        """Start the Prometheus metrics HTTP server (optional)"""
        try:
            start_http_server(port, registry=self.registry)
            logger.info(f"Prometheus metrics server started on port {port}")
        except Exception as e:
            logger.error(f"Failed to start metrics server: {str(e)}")
