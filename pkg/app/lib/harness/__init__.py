from lib.harness.config import ExperimentConfig, load_config
from lib.harness.diagnostics import BenchReport, GradientCheckReport, check_gradients, run_bench, spectrum, \
    trajectory
from lib.harness.experiment_runner import ExperimentResult, ExperimentRunner, run_experiment

__all__ = [
    'BenchReport', 'ExperimentConfig', 'ExperimentResult', 'ExperimentRunner', 'GradientCheckReport',
    'check_gradients', 'load_config', 'run_bench', 'run_experiment', 'spectrum', 'trajectory',
]
