"""
Exception hierarchy for oedsel.

Every error carries the process exit code the CLI should use when it escapes
to the top level: 1 for configuration problems, 2 for numerical failures and
3 for failed acceptance checks.
"""

from typing import Optional, Sequence


class OedselError(Exception):
    """Base class for all oedsel errors"""
    exit_code = 2


class ConfigurationError(OedselError, ValueError):
    """Invalid configuration, model parameters or budgets"""
    exit_code = 1


class UnsupportedModelError(ConfigurationError):
    """Operation only defined for a specific model family"""


class InsufficientSamplesError(ConfigurationError):
    """Too few samples to form an estimate"""


class BudgetExceededError(ConfigurationError):
    def __init__(self, message: str, count: int):
        super().__init__(message)
        self.count = count


class NumericalError(OedselError):
    exit_code = 2


class NotPositiveDefiniteError(NumericalError):
    """Factorization found a non-positive pivot"""


class DegenerateBlockError(NumericalError):
    """Conditioning block of a Schur complement is singular even after jitter"""

    def __init__(self, message: str, indices: Sequence[int]):
        super().__init__(message)
        self.indices = tuple(int(i) for i in indices)
        # Selectors attach the design built so far before re-raising
        self.partial_design = None


class DegenerateMixtureError(NumericalError):
    """Every component of a prior-bank mixture assigns zero likelihood"""

    def __init__(self, message: str, sample_index: Optional[int] = None):
        super().__init__(message)
        self.sample_index = sample_index


class DomainError(OedselError, ValueError):
    """Observation or parameter outside the model's support"""
    exit_code = 2


class AcceptanceCheckError(OedselError):
    exit_code = 3
