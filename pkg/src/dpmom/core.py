"""Domain values, the divergence kernel and seeded randomness shared by every module.

All values are immutable after construction: arrays are copied, converted to a fixed dtype and
flagged read-only, so they can be handed to parallel workers without locking.
"""

from dataclasses import dataclass, field
from typing import Union

import numpy as np
import numpy.typing as npt
from scipy.spatial.distance import cdist

from .errors import ContractViolationError

__all__ = [
    'Assignment',
    'AssignmentLike',
    'CentroidSet',
    'CentroidsLike',
    'DataLike',
    'DataMatrix',
    'FloatArray',
    'IntArray',
    'Rng',
    'as_assignment',
    'as_centroids',
    'as_data',
    'assign',
    'divergence',
    'empirical_objective',
    'point_loss',
    'sq_euclidean',
]

FloatArray = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]

_UINT64_LIMIT = 2**64


def _readonly(array: npt.NDArray[np.generic]) -> npt.NDArray[np.generic]:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


def _finite_matrix(values: npt.ArrayLike, what: str) -> FloatArray:
    try:
        matrix = np.asarray(values, dtype=np.float64)
    except (TypeError, ValueError) as e:
        raise ContractViolationError(f'{what} must be numeric: {e}') from e
    if matrix.ndim != 2:
        raise ContractViolationError(f'{what} must be a 2-D matrix, got shape {matrix.shape}')
    if matrix.shape[0] < 1 or matrix.shape[1] < 1:
        raise ContractViolationError(f'{what} must have at least one row and one column, got shape {matrix.shape}')
    if not np.isfinite(matrix).all():
        raise ContractViolationError(f'{what} contains NaN or infinite entries')
    return matrix


@dataclass(frozen=True, eq=False)
class DataMatrix:
    """n x p matrix of finite observations; one row per observation."""

    values: FloatArray

    def __post_init__(self) -> None:
        object.__setattr__(self, 'values', _readonly(_finite_matrix(self.values, 'data')))

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    @property
    def p(self) -> int:
        return int(self.values.shape[1])

    def __len__(self) -> int:
        return self.n

    def take(self, rows: npt.ArrayLike) -> 'DataMatrix':
        """Return the sub-matrix holding the given rows, in the given order."""
        return DataMatrix(self.values[np.asarray(rows, dtype=np.int64)])

    def grand_mean(self) -> FloatArray:
        return np.asarray(self.values.mean(axis=0), dtype=np.float64)


@dataclass(frozen=True, eq=False)
class CentroidSet:
    """Ordered set of k >= 1 centroids in R^p."""

    values: FloatArray

    def __post_init__(self) -> None:
        object.__setattr__(self, 'values', _readonly(_finite_matrix(self.values, 'centroids')))

    @property
    def k(self) -> int:
        return int(self.values.shape[0])

    @property
    def p(self) -> int:
        return int(self.values.shape[1])

    def __len__(self) -> int:
        return self.k

    def take(self, indices: npt.ArrayLike) -> 'CentroidSet':
        return CentroidSet(self.values[np.asarray(indices, dtype=np.int64)])

    def to_list(self) -> list[list[float]]:
        return [[float(v) for v in row] for row in self.values]


@dataclass(frozen=True, eq=False)
class Assignment:
    """Per-observation cluster labels, 0-based.

    Ground-truth labelings may carry the outlier sentinel ``-1`` on contaminating rows; labelings
    produced by a fit only reference live centroids.
    """

    labels: IntArray

    def __post_init__(self) -> None:
        labels = np.asarray(self.labels)
        if labels.ndim != 1:
            raise ContractViolationError(f'labels must be a 1-D vector, got shape {labels.shape}')
        if labels.size and not np.issubdtype(labels.dtype, np.integer):
            as_int = labels.astype(np.int64)
            if not np.array_equal(as_int, labels):
                raise ContractViolationError('labels must be integers')
            labels = as_int
        labels = labels.astype(np.int64)
        if labels.size and labels.min() < -1:
            raise ContractViolationError(f'labels must be >= -1, got {int(labels.min())}')
        object.__setattr__(self, 'labels', _readonly(labels))

    @property
    def n(self) -> int:
        return int(self.labels.shape[0])

    def __len__(self) -> int:
        return self.n

    @property
    def n_clusters(self) -> int:
        """Number of distinct non-sentinel labels."""
        return int(np.unique(self.labels[self.labels >= 0]).size)

    def sizes(self, k: int) -> IntArray:
        """Member count of each label 0..k-1; the sentinel is not counted."""
        inliers = self.labels[self.labels >= 0]
        return np.bincount(inliers, minlength=k).astype(np.int64)

    def inlier_mask(self) -> npt.NDArray[np.bool_]:
        return np.asarray(self.labels >= 0)

    def to_list(self) -> list[int]:
        return [int(v) for v in self.labels]


DataLike = Union[DataMatrix, npt.ArrayLike]
CentroidsLike = Union[CentroidSet, npt.ArrayLike]
AssignmentLike = Union[Assignment, npt.ArrayLike]


def as_data(data: DataLike) -> DataMatrix:
    return data if isinstance(data, DataMatrix) else DataMatrix(np.asarray(data))


def as_centroids(centroids: CentroidsLike) -> CentroidSet:
    return centroids if isinstance(centroids, CentroidSet) else CentroidSet(np.asarray(centroids))


def as_assignment(labels: AssignmentLike) -> Assignment:
    return labels if isinstance(labels, Assignment) else Assignment(np.asarray(labels))


@dataclass(frozen=True)
class Rng:
    """Reproducible random stream identified by a seed and a derivation key.

    The value itself holds no mutable state: :meth:`generator` always starts the same counter-based
    (Philox) stream for the same ``(seed, key)``, and :meth:`derive` splits off independent streams
    for parallel work, addressed by coordinates rather than by execution order.
    """

    seed: int
    key: tuple[int, ...] = field(default=())

    def __post_init__(self) -> None:
        if not 0 <= int(self.seed) < _UINT64_LIMIT:
            raise ContractViolationError(f'seed must be a 64-bit unsigned integer, got {self.seed}')
        if any(int(c) < 0 for c in self.key):
            raise ContractViolationError(f'derivation coordinates must be non-negative, got {self.key}')
        object.__setattr__(self, 'seed', int(self.seed))
        object.__setattr__(self, 'key', tuple(int(c) for c in self.key))

    def _sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence(self.seed, spawn_key=self.key)

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(self._sequence()))

    def derive(self, *coords: int) -> 'Rng':
        """Independent child stream for the given cell coordinates."""
        return Rng(self.seed, (*self.key, *coords))

    def seed_for(self, *coords: int) -> int:
        """64-bit seed of the child stream at ``coords``, for APIs that take a plain seed."""
        state = self.derive(*coords)._sequence().generate_state(1, np.uint64)
        return int(state[0])


def divergence(points: FloatArray, centroids: FloatArray) -> FloatArray:
    """Divergence of every point to every centroid, shape (n, k).

    Squared Euclidean distance, the Bregman divergence of the squared norm. This is the only place
    the divergence is computed.
    """
    return np.asarray(cdist(points, centroids, 'sqeuclidean'), dtype=np.float64)


def _vector(x: npt.ArrayLike, what: str) -> FloatArray:
    vector = np.asarray(x, dtype=np.float64)
    if vector.ndim != 1 or vector.size < 1:
        raise ContractViolationError(f'{what} must be a non-empty vector, got shape {vector.shape}')
    if not np.isfinite(vector).all():
        raise ContractViolationError(f'{what} contains NaN or infinite entries')
    return vector


def sq_euclidean(x: npt.ArrayLike, y: npt.ArrayLike) -> float:
    """Squared Euclidean distance between two vectors of equal dimension."""
    a, b = _vector(x, 'x'), _vector(y, 'y')
    if a.shape != b.shape:
        raise ContractViolationError(f'dimension mismatch: {a.size} != {b.size}')
    return float(divergence(a[None, :], b[None, :])[0, 0])


def point_loss(x: npt.ArrayLike, centroids: CentroidsLike) -> tuple[float, int]:
    """Loss of ``x`` against its nearest centroid and that centroid's index.

    Ties go to the lowest centroid index.

    Raises:
        ContractViolationError: If the centroid set is empty or dimensions disagree.
    """
    vector = _vector(x, 'x')
    if not isinstance(centroids, CentroidSet) and np.asarray(centroids).size == 0:
        raise ContractViolationError('centroid set is empty')
    theta = as_centroids(centroids)
    if theta.p != vector.size:
        raise ContractViolationError(f'dimension mismatch: point has {vector.size}, centroids have {theta.p}')
    row = divergence(vector[None, :], theta.values)[0]
    index = int(np.argmin(row))
    return float(row[index]), index


def assign(data: DataLike, centroids: CentroidsLike) -> tuple[IntArray, FloatArray]:
    """Nearest-centroid labels and losses for every row, lowest index on ties."""
    matrix, theta = as_data(data), as_centroids(centroids)
    if matrix.p != theta.p:
        raise ContractViolationError(f'dimension mismatch: data has {matrix.p} columns, centroids have {theta.p}')
    distances = divergence(matrix.values, theta.values)
    labels = np.argmin(distances, axis=1).astype(np.int64)
    losses = distances[np.arange(matrix.n), labels]
    return labels, losses


def empirical_objective(data: DataLike, centroids: CentroidsLike) -> float:
    """Mean nearest-centroid loss over all rows."""
    if not isinstance(data, DataMatrix) and np.asarray(data).size == 0:
        raise ContractViolationError('data is empty')
    _, losses = assign(data, centroids)
    return float(losses.mean())
