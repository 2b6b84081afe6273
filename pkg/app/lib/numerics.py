"""
Dense symmetric-matrix utilities: design and index bookkeeping, sample
covariance, Schur complements and log-determinants.

All functions are pure. Index arguments are always original candidate
indices; shrunken matrices are addressed through an IndexMap.
"""

import logging
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt
from scipy import linalg
from scipy.special import logsumexp

from lib.errors import DegenerateBlockError, InsufficientSamplesError, NotPositiveDefiniteError
from lib.op_stats import OpCounter

logger = logging.getLogger(__name__)

SymMatrix = npt.NDArray[np.float64]

JITTER_SCALE = 1e-10


@dataclass(frozen=True)
class IndexMap:
    """Positions of a shrunken matrix mapped to original candidate indices"""
    surviving: Tuple[int, ...]

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.surviving, self.surviving[1:])):
            raise ValueError(f"IndexMap must be strictly increasing: {self.surviving}")

    def __len__(self) -> int:
        return len(self.surviving)

    def original(self, position: int) -> int:
        return self.surviving[position]

    def positions(self, originals: Iterable[int]) -> Tuple[int, ...]:
        lookup = {index: pos for pos, index in enumerate(self.surviving)}
        try:
            return tuple(lookup[i] for i in originals)
        except KeyError as e:
            raise IndexError(f"Index {e.args[0]} is not a surviving candidate") from None


@dataclass(frozen=True)
class Design:
    """Ordered selection of distinct candidate indices out of n"""
    indices: Tuple[int, ...]
    n: int

    def __post_init__(self):
        object.__setattr__(self, 'indices', tuple(int(i) for i in self.indices))
        if self.n < 1:
            raise ValueError(f"Design needs n >= 1, got {self.n}")
        if len(set(self.indices)) != len(self.indices):
            raise ValueError(f"Design indices must be distinct: {self.indices}")
        bad = [i for i in self.indices if i < 0 or i >= self.n]
        if bad:
            raise IndexError(f"Design indices {bad} outside [0, {self.n})")

    @classmethod
    def empty(cls, n: int) -> 'Design':
        return cls((), n)

    @classmethod
    def parse(cls, text: str, n: int) -> 'Design':
        """Parse a semicolon-joined index list such as '3;7;12'"""
        parts = [p.strip() for p in text.split(';') if p.strip()]
        try:
            return cls(tuple(int(p) for p in parts), n)
        except ValueError as e:
            raise ValueError(f"Invalid design '{text}': {e}") from None

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def with_index(self, index: int) -> 'Design':
        return Design(self.indices + (int(index),), self.n)

    def prefix(self, k: int) -> 'Design':
        return Design(self.indices[:k], self.n)

    def complement(self) -> IndexMap:
        chosen = set(self.indices)
        return IndexMap(tuple(i for i in range(self.n) if i not in chosen))

    def sorted_indices(self) -> Tuple[int, ...]:
        return tuple(sorted(self.indices))

    def to_string(self) -> str:
        return ';'.join(str(i) for i in self.indices)


def symmetrize(M: npt.ArrayLike) -> SymMatrix:
    M = np.asarray(M, dtype=float)
    return (M + M.T) / 2.0


def _check_indices(indices: Sequence[int], dim: int, label: str) -> np.ndarray:
    idx = np.asarray(indices, dtype=int).reshape(-1)
    bad = idx[(idx < 0) | (idx >= dim)]
    if bad.size:
        raise IndexError(f"{label} indices {bad.tolist()} out of range for dimension {dim}")
    return idx


def select_submatrix(M: npt.ArrayLike, rows: Sequence[int], cols: Sequence[int]) -> np.ndarray:
    """Return P_rows^T M P_cols, i.e. M restricted to the given rows and columns"""
    M = np.asarray(M, dtype=float)
    r = _check_indices(rows, M.shape[0], 'Row')
    c = _check_indices(cols, M.shape[1], 'Column')
    return M[np.ix_(r, c)]


def cholesky_with_jitter(block: np.ndarray, indices: Sequence[int],
                         counter: Optional[OpCounter] = None) -> np.ndarray:
    """
    Lower Cholesky factor of a conditioning block.

    On failure retries once with lambda*I, lambda = 1e-10 * mean(diag); a second
    failure raises DegenerateBlockError naming the block's indices.
    """
    a = block.shape[0]
    if counter is not None:
        counter.add(factorizations=1, mults=a ** 3)
    try:
        return linalg.cholesky(block, lower=True, check_finite=True)
    except (linalg.LinAlgError, ValueError):
        pass

    jitter = JITTER_SCALE * float(np.mean(np.diag(block))) if a else 0.0
    logger.warning(f"Conditioning block on {list(indices)} not positive definite, retrying with jitter {jitter:.3e}")
    if counter is not None:
        counter.add(factorizations=1, mults=a ** 3)
    try:
        if jitter <= 0:
            raise linalg.LinAlgError("non-positive jitter")
        return linalg.cholesky(block + jitter * np.eye(a), lower=True)
    except (linalg.LinAlgError, ValueError):
        raise DegenerateBlockError(
            f"Conditioning block on indices {list(indices)} is singular after jitter {jitter:.3e}",
            indices
        ) from None


def schur_complement(S: npt.ArrayLike, conditioned_on: Sequence[int],
                     counter: Optional[OpCounter] = None) -> SymMatrix:
    """
    S_{B,B} - S_{B,A} S_{A,A}^{-1} S_{A,B} with A = conditioned_on and B its
    complement in increasing index order (see Design.complement).
    """
    S = np.asarray(S, dtype=float)
    dim = S.shape[0]
    A = _check_indices(conditioned_on, dim, 'Conditioning')
    if len(set(A.tolist())) != A.size:
        raise ValueError(f"Conditioning indices must be distinct: {A.tolist()}")
    chosen = set(A.tolist())
    B = np.array([i for i in range(dim) if i not in chosen], dtype=int)
    if A.size == 0:
        return symmetrize(S)
    if B.size == 0:
        return np.zeros((0, 0))

    L = cholesky_with_jitter(S[np.ix_(A, A)], A.tolist(), counter)
    W = linalg.solve_triangular(L, S[np.ix_(A, B)], lower=True)
    a, b = A.size, B.size
    if counter is not None:
        counter.add(mults=b * a ** 2, aux_mults=a * b * b)
    return symmetrize(S[np.ix_(B, B)] - W.T @ W)


def sample_covariance(samples: npt.ArrayLike) -> SymMatrix:
    """Unbiased (1/(M-1)) centered covariance of an M x n sample matrix"""
    X = np.asarray(samples, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    M = X.shape[0]
    if M < 2:
        raise InsufficientSamplesError(f"Sample covariance needs at least 2 samples, got {M}")
    centered = X - X.mean(axis=0)
    return symmetrize(centered.T @ centered / (M - 1))


def logdet_psd(M: npt.ArrayLike, counter: Optional[OpCounter] = None) -> float:
    """Log-determinant of a positive definite matrix via Cholesky"""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0.0
    if counter is not None:
        counter.add(factorizations=1, mults=M.shape[0] ** 3)
    try:
        L = linalg.cholesky(M, lower=True)
    except (linalg.LinAlgError, ValueError) as e:
        raise NotPositiveDefiniteError(f"Matrix is not positive definite: {str(e)}") from None
    return float(2.0 * np.sum(np.log(np.diag(L))))


def logmeanexp(values: npt.ArrayLike, axis: int = -1) -> np.ndarray:
    """log(mean(exp(values))) along an axis, stable via the max-subtraction trick"""
    values = np.asarray(values, dtype=float)
    return logsumexp(values, axis=axis) - np.log(values.shape[axis])
