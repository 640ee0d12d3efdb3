"""Bucket construction for the MoM estimators.

Two strategies are provided: a uniform random permutation cut into near-equal blocks, and a
k-means++ style filling that spreads each bucket over the data so buckets resemble each other.
"""

import numpy as np

from .core import DataLike, Rng, as_data, divergence
from .errors import ContractViolationError
from .mom import BucketPartition

__all__ = ['BUCKET_STRATEGIES', 'build_buckets', 'kmeanspp_buckets', 'random_buckets']

BUCKET_STRATEGIES = ('kmeanspp', 'random')


def _check_bucket_count(n: int, L: int) -> None:
    if not 1 <= L <= n:
        raise ContractViolationError(f'bucket count L={L} must satisfy 1 <= L <= n={n}')


def _block_sizes(n: int, L: int) -> list[int]:
    base, extra = divmod(n, L)
    return [base + 1 if index < extra else base for index in range(L)]


def random_buckets(n: int, L: int, rng: Rng) -> BucketPartition:
    """Uniform random permutation of the rows cut into L near-equal blocks."""
    _check_bucket_count(n, L)
    return BucketPartition.from_order(rng.generator().permutation(n), L)


def kmeanspp_buckets(data: DataLike, L: int, rng: Rng) -> BucketPartition:
    """Fill buckets one after the other with k-means++ style sampling.

    Within a bucket the first member is drawn uniformly from the rows not yet used; every further
    member is drawn with probability proportional to its squared distance to the nearest member
    already placed in that bucket. Used rows leave the pool before the next bucket starts, and the
    last bucket takes whatever is left.
    """
    matrix = as_data(data)
    n = matrix.n
    _check_bucket_count(n, L)
    generator = rng.generator()
    values = matrix.values
    pool = np.arange(n, dtype=np.int64)
    blocks: list[np.ndarray] = []
    for size in _block_sizes(n, L)[:-1]:
        first = int(generator.integers(pool.size))
        members = [int(pool[first])]
        pool = np.delete(pool, first)
        nearest = divergence(values[pool], values[members[0] : members[0] + 1])[:, 0]
        for _ in range(size - 1):
            total = float(nearest.sum())
            if total > 0.0:
                pick = int(generator.choice(pool.size, p=nearest / total))
            else:
                pick = int(generator.integers(pool.size))
            chosen = int(pool[pick])
            members.append(chosen)
            pool = np.delete(pool, pick)
            nearest = np.delete(nearest, pick)
            nearest = np.minimum(nearest, divergence(values[pool], values[chosen : chosen + 1])[:, 0])
        blocks.append(np.asarray(members, dtype=np.int64))
    blocks.append(pool)
    return BucketPartition(tuple(blocks))


def build_buckets(data: DataLike, L: int, rng: Rng, strategy: str = 'kmeanspp') -> BucketPartition:
    """Dispatch to the named bucket strategy."""
    if strategy == 'kmeanspp':
        return kmeanspp_buckets(data, L, rng)
    if strategy == 'random':
        return random_buckets(as_data(data).n, L, rng)
    raise ContractViolationError(f'unknown bucket strategy {strategy!r}, expected one of {BUCKET_STRATEGIES}')
