"""Median-of-Means estimation over bucket partitions.

Even bucket counts use the lower-middle order statistic so the selected value always belongs to a
concrete bucket; ties between equal bucket means go to the lowest bucket index.
"""

from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt

from .core import CentroidsLike, DataLike, FloatArray, IntArray, Rng, as_centroids, as_data, assign
from .errors import ContractViolationError

__all__ = [
    'BucketPartition',
    'block_means',
    'bucket_objective_means',
    'mom_estimate',
    'mom_objective',
    'select_median_bucket',
]


@dataclass(frozen=True, eq=False)
class BucketPartition:
    """L disjoint index blocks covering rows 0..n-1, sizes differing by at most one."""

    blocks: tuple[IntArray, ...]
    _block_ids: IntArray = field(init=False, repr=False)
    _sizes: IntArray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if len(self.blocks) < 1:
            raise ContractViolationError('a partition needs at least one block')
        blocks = tuple(np.sort(np.asarray(b, dtype=np.int64)) for b in self.blocks)
        sizes = np.array([b.size for b in blocks], dtype=np.int64)
        if sizes.min() < 1:
            raise ContractViolationError('partition contains an empty block')
        if sizes.max() - sizes.min() > 1:
            raise ContractViolationError(f'block sizes must differ by at most one, got {sizes.min()}..{sizes.max()}')
        every = np.concatenate(blocks)
        n = every.size
        if not np.array_equal(np.sort(every), np.arange(n)):
            raise ContractViolationError('blocks must be disjoint and cover every row exactly once')
        block_ids = np.empty(n, dtype=np.int64)
        for index, block in enumerate(blocks):
            block.setflags(write=False)
            block_ids[block] = index
        block_ids.setflags(write=False)
        sizes.setflags(write=False)
        object.__setattr__(self, 'blocks', blocks)
        object.__setattr__(self, '_block_ids', block_ids)
        object.__setattr__(self, '_sizes', sizes)

    @classmethod
    def from_order(cls, order: npt.ArrayLike, L: int) -> 'BucketPartition':
        """Cut an index order into L near-equal blocks; the first ``n mod L`` blocks get one extra row."""
        indices = np.asarray(order, dtype=np.int64)
        n = indices.size
        if not 1 <= L <= n:
            raise ContractViolationError(f'bucket count L={L} must satisfy 1 <= L <= n={n}')
        base, extra = divmod(n, L)
        sizes = np.full(L, base, dtype=np.int64)
        sizes[:extra] += 1
        return cls(tuple(np.split(indices, np.cumsum(sizes)[:-1])))

    @property
    def L(self) -> int:
        return len(self.blocks)

    @property
    def n(self) -> int:
        return int(self._block_ids.size)

    @property
    def b(self) -> int:
        """Nominal block size ``floor(n / L)``."""
        return self.n // self.L

    def sizes(self) -> IntArray:
        return self._sizes

    def block_ids(self) -> IntArray:
        """Bucket index of every row."""
        return self._block_ids

    def to_lists(self) -> list[list[int]]:
        return [[int(i) for i in block] for block in self.blocks]


def block_means(values: npt.ArrayLike, partition: BucketPartition) -> FloatArray:
    """Mean of ``values`` within each block of ``partition``."""
    sample = np.asarray(values, dtype=np.float64)
    if sample.shape != (partition.n,):
        raise ContractViolationError(f'partition covers {partition.n} rows, got {sample.shape[0]} values')
    sums = np.bincount(partition.block_ids(), weights=sample, minlength=partition.L)
    return np.asarray(sums / partition.sizes(), dtype=np.float64)


def select_median_bucket(bucket_means: npt.ArrayLike) -> int:
    """Index of the bucket holding the (lower-middle) median mean."""
    means = np.asarray(bucket_means, dtype=np.float64)
    if means.ndim != 1 or means.size < 1:
        raise ContractViolationError('bucket means must be a non-empty vector')
    value = np.sort(means)[(means.size - 1) // 2]
    return int(np.flatnonzero(means == value)[0])


def mom_estimate(
    values: npt.ArrayLike,
    L: int,
    rng: Rng,
    partition: BucketPartition | None = None,
) -> float:
    """Median-of-Means estimate of the mean of a scalar sample.

    Args:
        values: The sample.
        L: Number of buckets, ``1 <= L <= len(values)``.
        rng: Stream used to draw the random partition.
        partition: Use this partition instead of drawing one; its block count must equal ``L``.

    Returns:
        The median of the L bucket means.

    Raises:
        ContractViolationError: If the sample is empty or ``L`` is out of range.
    """
    sample = np.asarray(values, dtype=np.float64).ravel()
    if sample.size < 1:
        raise ContractViolationError('values must be non-empty')
    if not 1 <= L <= sample.size:
        raise ContractViolationError(f'bucket count L={L} must satisfy 1 <= L <= n={sample.size}')
    if partition is None:
        partition = BucketPartition.from_order(rng.generator().permutation(sample.size), L)
    elif partition.L != L:
        raise ContractViolationError(f'partition has {partition.L} blocks, expected L={L}')
    means = block_means(sample, partition)
    return float(means[select_median_bucket(means)])


def bucket_objective_means(data: DataLike, part: BucketPartition, centroids: CentroidsLike) -> FloatArray:
    """Mean nearest-centroid loss inside each bucket."""
    matrix = as_data(data)
    if part.n != matrix.n:
        raise ContractViolationError(f'partition covers {part.n} rows but data has {matrix.n}')
    _, losses = assign(matrix, centroids)
    return block_means(losses, part)


def mom_objective(data: DataLike, part: BucketPartition, centroids: CentroidsLike, lambda_: float) -> float:
    """Penalized MoM objective: the median bucket's mean loss plus ``lambda_ * k``."""
    if lambda_ < 0:
        raise ContractViolationError(f'lambda must be non-negative, got {lambda_}')
    theta = as_centroids(centroids)
    means = bucket_objective_means(data, part, theta)
    return float(means[select_median_bucket(means)]) + lambda_ * theta.k
