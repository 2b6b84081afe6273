import csv
import json
import logging
import queue
from collections import defaultdict
from dataclasses import asdict, dataclass
from pathlib import Path
from threading import Lock
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

CSV_HEADER = ('trial', 'selector', 'k', 'design', 'mi_value', 'mi_stderr', 'wall_time_ms',
              'op_mults', 'op_factorizations', 'op_model_evals')

REFERENCE_SELECTOR = 'nmc'


@dataclass(frozen=True)
class ResultRow:
    trial: int
    selector: str
    k: int
    design: str
    mi_value: float
    mi_stderr: float
    wall_time_ms: float
    op_mults: int
    op_factorizations: int
    op_model_evals: int

    def design_indices(self) -> Tuple[int, ...]:
        return tuple(int(i) for i in self.design.split(';') if i)


@dataclass(frozen=True)
class TrialFailure:
    trial: int
    selector: str
    error_type: str
    message: str


def format_value(value: Any) -> str:
    """CSV cell text; floats keep 17 significant digits"""
    if isinstance(value, (float, np.floating)):
        return format(float(value), '.17g')
    return str(value)


def _mean_stderr(values: Sequence[float]) -> Dict[str, Any]:
    values = np.asarray(values, dtype=float)
    stderr = float(np.std(values, ddof=1) / np.sqrt(values.size)) if values.size > 1 else 0.0
    return {'mean': float(np.mean(values)), 'stderr': stderr, 'trials': int(values.size)}


def summarize(rows: Iterable[ResultRow], failures: Iterable[TrialFailure] = ()) -> Dict[str, Any]:
    """
    Per-selector, per-k aggregates across trials: MI mean and standard error,
    number of distinct candidates chosen (occupied cells), how often each
    candidate was chosen, and paired differences against NMC-greedy.
    """
    by_key: Dict[Tuple[str, int], List[ResultRow]] = defaultdict(list)
    for row in rows:
        by_key[(row.selector, row.k)].append(row)

    curves: Dict[str, Dict[str, Any]] = defaultdict(dict)
    occupied: Dict[str, Dict[str, int]] = defaultdict(dict)
    frequency: Dict[str, Dict[str, Dict[str, float]]] = defaultdict(dict)
    for (selector, k), group in by_key.items():
        curves[selector][str(k)] = _mean_stderr([r.mi_value for r in group])
        counts: Dict[int, int] = defaultdict(int)
        for r in group:
            for index in r.design_indices():
                counts[index] += 1
        occupied[selector][str(k)] = len(counts)
        frequency[selector][str(k)] = {str(i): c / len(group) for i, c in sorted(counts.items())}

    differences: Dict[str, Dict[str, Any]] = defaultdict(dict)
    for (selector, k), group in by_key.items():
        reference = {r.trial: r.mi_value for r in by_key.get((REFERENCE_SELECTOR, k), [])}
        if selector == REFERENCE_SELECTOR or not reference:
            continue
        paired = [r.mi_value - reference[r.trial] for r in group if r.trial in reference]
        if paired:
            differences[selector][str(k)] = _mean_stderr(paired)

    return {
        'curves': dict(curves),
        'occupied_cells': dict(occupied),
        'selection_frequency': dict(frequency),
        'difference_vs_nmc': dict(differences),
        'failures': [asdict(f) for f in failures],
    }


def summary_path_for(path: Path) -> Path:
    return path.with_name(f"{path.stem}.summary.json")


def emit_results(rows: Sequence[ResultRow], path, failures: Sequence[TrialFailure] = (),
                 metadata: Optional[Dict[str, Any]] = None) -> Tuple[Path, Path]:
    """Write the result CSV and its sibling <stem>.summary.json; returns both paths"""
    path = Path(path)
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(CSV_HEADER)
        for row in rows:
            writer.writerow([format_value(getattr(row, column)) for column in CSV_HEADER])

    summary = summarize(rows, failures)
    if metadata:
        summary['metadata'] = metadata
    summary_path = summary_path_for(path)
    with open(summary_path, 'w') as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write('\n')
    logger.info(f"Wrote {len(rows)} result rows to {path} and summary to {summary_path}")
    return path, summary_path


class ResultWriter:
    """
    Collects rows and failures from concurrently running trials and writes
    them once, ordered by (trial, selector order, k).
    """

    def __init__(self, path, selector_order: Sequence[str] = ()):
        self.path = Path(path)
        self.selector_order = {name: i for i, name in enumerate(selector_order)}
        self.buffer: 'queue.Queue[ResultRow]' = queue.Queue()
        self.failures: List[TrialFailure] = []
        self._rows: List[ResultRow] = []
        self._lock = Lock()

    def add_row(self, row: ResultRow) -> None:
        self.buffer.put(row)

    def add_failure(self, failure: TrialFailure) -> None:
        with self._lock:
            self.failures.append(failure)

    def _sort_key(self, row: ResultRow):
        return row.trial, self.selector_order.get(row.selector, len(self.selector_order)), row.selector, row.k

    def rows(self) -> List[ResultRow]:
        """Every row received so far, in output order"""
        with self._lock:
            while not self.buffer.empty():
                self._rows.append(self.buffer.get_nowait())
            return sorted(self._rows, key=self._sort_key)

    def sorted_failures(self) -> List[TrialFailure]:
        with self._lock:
            return sorted(self.failures, key=lambda f: (f.trial, f.selector))

    def flush(self, metadata: Optional[Dict[str, Any]] = None) -> Tuple[Path, Path]:
        return emit_results(self.rows(), self.path, self.sorted_failures(), metadata)
