import numpy as np
import pytest

from dpmom.core import Assignment, DataMatrix, Rng
from dpmom.errors import ContractViolationError
from dpmom.mom import BucketPartition
from dpmom.partition import build_buckets, kmeanspp_buckets, random_buckets

TWO_PAIRS = DataMatrix(np.array([[0.0, 0.0], [0.1, 0.0], [100.0, 0.0], [100.1, 0.0]]))


def _covers(partition: BucketPartition, n: int) -> bool:
    return sorted(i for block in partition.to_lists() for i in block) == list(range(n))


def test_random_buckets_sizes() -> None:
    assert random_buckets(6, 3, Rng(0)).sizes().tolist() == [2, 2, 2]
    assert random_buckets(7, 3, Rng(0)).sizes().tolist() == [3, 2, 2]
    assert _covers(random_buckets(7, 3, Rng(0)), 7)


def test_random_buckets_are_seeded() -> None:
    assert random_buckets(20, 4, Rng(5)).to_lists() == random_buckets(20, 4, Rng(5)).to_lists()
    assert random_buckets(20, 4, Rng(5)).to_lists() != random_buckets(20, 4, Rng(6)).to_lists()


@pytest.mark.parametrize('L', [0, 8])
def test_bucket_count_out_of_range(L: int) -> None:
    with pytest.raises(ContractViolationError, match=f'L={L}'):
        random_buckets(7, L, Rng(0))
    with pytest.raises(ContractViolationError, match=f'L={L}'):
        kmeanspp_buckets(np.zeros((7, 2)), L, Rng(0))


def test_kmeanspp_buckets_cover_every_row(quadrant: tuple[DataMatrix, Assignment]) -> None:
    data, _ = quadrant
    for L in (3, 7, 11, 40):
        partition = kmeanspp_buckets(data, L, Rng(L))
        assert partition.L == L
        assert _covers(partition, data.n)
        assert partition.sizes().max() - partition.sizes().min() <= 1


def test_kmeanspp_singleton_buckets_are_a_permutation() -> None:
    partition = kmeanspp_buckets(TWO_PAIRS, 4, Rng(1))
    assert all(len(block) == 1 for block in partition.to_lists())
    assert _covers(partition, 4)


def test_kmeanspp_buckets_are_seeded(blobs: tuple[DataMatrix, Assignment]) -> None:
    data, _ = blobs
    assert kmeanspp_buckets(data, 5, Rng(3)).to_lists() == kmeanspp_buckets(data, 5, Rng(3)).to_lists()


def test_kmeanspp_buckets_spread_over_far_pairs() -> None:
    spread = 0
    for seed in range(1000):
        first, _ = kmeanspp_buckets(TWO_PAIRS, 2, Rng(seed)).to_lists()
        spread += (min(first) < 2) != (max(first) < 2)
    assert spread / 1000 >= 0.9


def test_kmeanspp_buckets_fill_one_after_another(blobs: tuple[DataMatrix, Assignment]) -> None:
    data, _ = blobs
    partition = kmeanspp_buckets(data, 7, Rng(3))
    first_row = int(Rng(3).generator().integers(data.n))
    assert first_row in partition.to_lists()[0]
    sizes = partition.sizes().tolist()
    assert sizes == sorted(sizes, reverse=True)
    assert sizes[-1] == data.n // 7


def test_kmeanspp_buckets_with_coincident_rows_fall_back_to_uniform() -> None:
    partition = kmeanspp_buckets(np.ones((9, 2)), 3, Rng(2))
    assert _covers(partition, 9)


def test_build_buckets_dispatch(blobs: tuple[DataMatrix, Assignment]) -> None:
    data, _ = blobs
    assert build_buckets(data, 4, Rng(1), 'random').to_lists() == random_buckets(data.n, 4, Rng(1)).to_lists()
    assert build_buckets(data, 4, Rng(1)).to_lists() == kmeanspp_buckets(data, 4, Rng(1)).to_lists()
    with pytest.raises(ContractViolationError, match='unknown bucket strategy'):
        build_buckets(data, 4, Rng(1), 'stratified')
