"""
Experiment configuration: defaults, then the YAML file, then command-line
overrides. Each YAML section maps onto one group of settings:

    models:    name plus a sub-section of model parameters
    score:     M, m, workers
    mi:        eval_inner, eval_outer, recycle_inner
    selectors: names, k_max, nmc_inner, nmc_outer, exact_moments
    harness:   trials, seed, output, workers, deterministic, desk
"""

import copy
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import yaml

from lib.errors import ConfigurationError
from lib.models import ModelSpec, model_spec_from_dict
from lib.selectors import EXACT_GREEDY, EXHAUSTIVE, GAUSS, LSIG, NMC_GREEDY, RANDOM

logger = logging.getLogger(__name__)

SELECTOR_NAMES = (LSIG, GAUSS, NMC_GREEDY, RANDOM, EXHAUSTIVE, EXACT_GREEDY)

DESK_EVAL_BUDGETS = (2000, 200)
DESK_NMC_BUDGETS = (1000, 100)

DEFAULTS: Dict[str, Dict[str, Any]] = {
    'models': {'name': 'linear_gaussian'},
    'score': {'M': 1000, 'm': 1000, 'workers': 1},
    'mi': {'eval_inner': 10000, 'eval_outer': 1000, 'recycle_inner': False},
    'selectors': {
        'names': [LSIG, GAUSS, NMC_GREEDY, RANDOM],
        'k_max': 10,
        'nmc_inner': 10000,
        'nmc_outer': 1000,
        'exact_moments': True,
    },
    'harness': {
        'trials': 10,
        'seed': 42,
        'output': 'results.csv',
        'workers': None,
        'deterministic': False,
        'desk': False,
    },
}


@dataclass
class ExperimentConfig:
    model: ModelSpec
    selectors: Tuple[str, ...] = (LSIG, GAUSS, NMC_GREEDY, RANDOM)
    k_max: int = 10
    trials: int = 10
    M: int = 1000
    m: int = 1000
    score_workers: int = 1
    nmc_inner: int = 10000
    nmc_outer: int = 1000
    eval_inner: int = 10000
    eval_outer: int = 1000
    recycle_inner: bool = False
    exact_moments: bool = True
    seed: int = 42
    output: Path = Path('results.csv')
    workers: int = 1
    deterministic: bool = False
    desk: bool = False
    source: Dict[str, Any] = field(default_factory=dict, compare=False, repr=False)

    @property
    def uses_closed_form(self) -> bool:
        return self.model.name == 'linear_gaussian'

    def validate(self) -> None:
        """Collect every problem before raising"""
        problems = []
        unknown = [s for s in self.selectors if s not in SELECTOR_NAMES]
        if unknown:
            problems.append(f"unknown selectors {unknown}; choose from {list(SELECTOR_NAMES)}")
        if not self.selectors:
            problems.append("at least one selector is required")
        if len(set(self.selectors)) != len(self.selectors):
            problems.append(f"selectors listed more than once: {list(self.selectors)}")
        if not 1 <= self.k_max <= self.model.n:
            problems.append(f"k_max must be in [1, {self.model.n}], got {self.k_max}")
        if self.trials < 1:
            problems.append(f"trials must be >= 1, got {self.trials}")
        if self.M < 2 or self.m < 1:
            problems.append(f"score budgets need M >= 2 and m >= 1, got M={self.M}, m={self.m}")
        for label, (inner, outer) in (('nmc', (self.nmc_inner, self.nmc_outer)),
                                      ('eval', (self.eval_inner, self.eval_outer))):
            if inner < 2 or outer < 2:
                problems.append(f"{label} NMC budgets must be >= 2, got inner={inner}, outer={outer}")
        if self.workers < 1 or self.score_workers < 1:
            problems.append(f"workers must be >= 1, got {self.workers} and {self.score_workers}")
        closed_form_only = {EXHAUSTIVE, EXACT_GREEDY} & set(self.selectors)
        if closed_form_only and self.model.name != 'linear_gaussian':
            problems.append(f"selectors {sorted(closed_form_only)} need the linear_gaussian model")

        if problems:
            error_msg = f"Invalid experiment configuration: {'; '.join(problems)}"
            logger.error(error_msg)
            raise ConfigurationError(error_msg)

    def exact_moments_active(self) -> bool:
        return self.exact_moments and self.model.name == 'linear_gaussian'

    def as_dict(self) -> Dict[str, Any]:
        return copy.deepcopy(self.source)


def read_config_file(path) -> Dict[str, Any]:
    try:
        with open(path) as f:
            data = yaml.safe_load(f) or {}
    except FileNotFoundError:
        raise ConfigurationError(f"Config file not found: {path}") from None
    except yaml.YAMLError as e:
        raise ConfigurationError(f"Config file {path} is not valid YAML: {str(e)}") from None
    if not isinstance(data, dict):
        raise ConfigurationError(f"Config file {path} must contain a mapping of sections")
    return data


def merge_sections(base: Dict[str, Dict[str, Any]], update: Dict[str, Any], label: str) -> None:
    """Overlay `update` onto `base` in place, rejecting unknown sections and keys"""
    for section, values in update.items():
        if section not in DEFAULTS:
            raise ConfigurationError(f"Unknown config section '{section}' in {label}")
        if values is None:
            continue
        if not isinstance(values, dict):
            raise ConfigurationError(f"Config section '{section}' in {label} must be a mapping")
        for key, value in values.items():
            if section != 'models' and key not in DEFAULTS[section]:
                raise ConfigurationError(f"Unknown key '{section}.{key}' in {label}")
            if section == 'models' and isinstance(value, dict):
                base[section].setdefault(key, {}).update(value)
            else:
                base[section][key] = value


def _explicit(sections: Tuple[Dict[str, Any], ...], section: str, key: str) -> bool:
    return any(key in (s.get(section) or {}) for s in sections)


def load_config(path=None, overrides: Optional[Dict[str, Dict[str, Any]]] = None) -> ExperimentConfig:
    """
    Build and validate an ExperimentConfig.

    `overrides` uses the same section layout as the YAML file; values of None
    are ignored so unset command-line flags fall through.
    """
    merged = copy.deepcopy(DEFAULTS)
    from_file = read_config_file(path) if path else {}
    merge_sections(merged, from_file, str(path))
    cleaned = {
        section: {k: v for k, v in (values or {}).items() if v is not None}
        for section, values in (overrides or {}).items()
    }
    merge_sections(merged, cleaned, 'command line')

    harness = merged['harness']
    selectors = merged['selectors']
    mi = merged['mi']
    explicit = (from_file, cleaned)
    if harness['desk']:
        if not _explicit(explicit, 'mi', 'eval_inner') and not _explicit(explicit, 'mi', 'eval_outer'):
            mi['eval_inner'], mi['eval_outer'] = DESK_EVAL_BUDGETS
        if not _explicit(explicit, 'selectors', 'nmc_inner') and not _explicit(explicit, 'selectors', 'nmc_outer'):
            selectors['nmc_inner'], selectors['nmc_outer'] = DESK_NMC_BUDGETS

    workers = harness['workers'] if harness['workers'] is not None else os.getenv('OEDSEL_WORKERS', '1')
    names = selectors['names']
    if isinstance(names, str):
        names = [s.strip() for s in names.split(',') if s.strip()]

    try:
        config = ExperimentConfig(
            model=model_spec_from_dict(merged['models']),
            selectors=tuple(names),
            k_max=int(selectors['k_max']),
            trials=int(harness['trials']),
            M=int(merged['score']['M']),
            m=int(merged['score']['m']),
            score_workers=int(merged['score']['workers']),
            nmc_inner=int(selectors['nmc_inner']),
            nmc_outer=int(selectors['nmc_outer']),
            eval_inner=int(mi['eval_inner']),
            eval_outer=int(mi['eval_outer']),
            recycle_inner=bool(mi['recycle_inner']),
            exact_moments=bool(selectors['exact_moments']),
            seed=int(harness['seed']),
            output=Path(harness['output']),
            workers=int(workers),
            deterministic=bool(harness['deterministic']),
            desk=bool(harness['desk']),
            source=merged,
        )
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigurationError):
            raise
        raise ConfigurationError(f"Invalid configuration value: {str(e)}") from None

    if config.deterministic:
        config.workers = 1
        config.score_workers = 1
    config.validate()
    logger.debug(f"Loaded configuration: {config}")
    return config
