import numpy as np
import pytest

from dpmom.core import Assignment, CentroidSet, DataMatrix, Rng, assign, empirical_objective, point_loss, sq_euclidean
from dpmom.errors import ContractViolationError


@pytest.mark.parametrize(
    ('x', 'y', 'expected'),
    [
        ((0, 0), (0, 0), 0.0),
        ((0, 0), (3, 4), 25.0),
        ((1, 1), (1, 2), 1.0),
    ],
)
def test_sq_euclidean(x: tuple[float, float], y: tuple[float, float], expected: float) -> None:
    assert sq_euclidean(x, y) == expected
    assert sq_euclidean(y, x) == expected


def test_sq_euclidean_dimension_mismatch() -> None:
    with pytest.raises(ContractViolationError, match='dimension mismatch'):
        sq_euclidean((0, 0), (0, 0, 0))


@pytest.mark.parametrize(
    ('x', 'centroids', 'loss', 'index'),
    [
        ((0, 0), [(0, 0)], 0.0, 0),
        ((1, 0), [(0, 0), (3, 0)], 1.0, 0),
        ((2, 0), [(0, 0), (4, 0)], 4.0, 0),
    ],
)
def test_point_loss(x: tuple[float, float], centroids: list[tuple[float, float]], loss: float, index: int) -> None:
    assert point_loss(x, centroids) == (loss, index)


def test_point_loss_needs_centroids() -> None:
    with pytest.raises(ContractViolationError, match='empty'):
        point_loss((0, 0), np.empty((0, 2)))


def test_point_loss_is_minimum_over_centroids() -> None:
    generator = Rng(5).generator()
    for _ in range(50):
        x = generator.normal(size=3)
        theta = generator.normal(size=(4, 3))
        loss, index = point_loss(x, theta)
        assert all(loss <= sq_euclidean(x, row) for row in theta)
        assert loss == sq_euclidean(x, theta[index])


def test_point_loss_is_one_lipschitz_in_l1() -> None:
    # min is 1-Lipschitz with respect to the l1 norm on the vector of divergences
    generator = Rng(6).generator()
    for _ in range(50):
        a, b = generator.uniform(0, 10, size=5), generator.uniform(0, 10, size=5)
        assert abs(a.min() - b.min()) <= np.abs(a - b).sum() + 1e-12


@pytest.mark.parametrize(
    ('data', 'centroids', 'expected'),
    [
        ([(1, 1), (1, 1)], [(1, 1)], 0.0),
        ([(0, 0), (2, 0)], [(0, 0)], 2.0),
        ([(0, 0), (2, 0)], [(0, 0), (2, 0)], 0.0),
    ],
)
def test_empirical_objective(
    data: list[tuple[float, float]], centroids: list[tuple[float, float]], expected: float
) -> None:
    assert empirical_objective(data, centroids) == expected


def test_empirical_objective_permutation_invariant() -> None:
    generator = Rng(7).generator()
    data = generator.normal(size=(30, 2))
    theta = generator.normal(size=(3, 2))
    value = empirical_objective(data, theta)
    assert empirical_objective(data[generator.permutation(30)], theta) == pytest.approx(value, rel=1e-12)
    assert empirical_objective(data, theta[::-1]) == pytest.approx(value, rel=1e-12)


def test_empirical_objective_rejects_empty_data() -> None:
    with pytest.raises(ContractViolationError):
        empirical_objective(np.empty((0, 2)), [(0, 0)])


def test_assign_breaks_ties_by_lowest_index() -> None:
    labels, losses = assign([(2, 0), (1, 0), (3, 0)], [(0, 0), (4, 0)])
    assert labels.tolist() == [0, 0, 1]
    assert losses.tolist() == [4.0, 1.0, 1.0]


def test_data_matrix_validation() -> None:
    with pytest.raises(ContractViolationError, match='NaN'):
        DataMatrix(np.array([[1.0, np.nan]]))
    with pytest.raises(ContractViolationError, match='2-D'):
        DataMatrix(np.array([1.0, 2.0]))
    with pytest.raises(ContractViolationError, match='at least one row'):
        DataMatrix(np.empty((0, 3)))


def test_data_matrix_is_read_only() -> None:
    source = np.array([[1.0, 2.0], [3.0, 4.0]])
    data = DataMatrix(source)
    source[0, 0] = 99.0
    assert data.values[0, 0] == 1.0
    assert (data.n, data.p) == (2, 2)
    with pytest.raises(ValueError, match='read-only'):
        data.values[0, 0] = 5.0


def test_centroid_set_properties() -> None:
    theta = CentroidSet(np.array([[0.0, 1.0], [2.0, 3.0], [4.0, 5.0]]))
    assert (theta.k, theta.p, len(theta)) == (3, 2, 3)
    assert theta.take([2, 0]).to_list() == [[4.0, 5.0], [0.0, 1.0]]


def test_assignment_counts_and_sentinel() -> None:
    labels = Assignment([0, 0, 2, -1, 2, 2])
    assert labels.n_clusters == 2
    assert labels.sizes(3).tolist() == [2, 0, 3]
    assert labels.inlier_mask().tolist() == [True, True, True, False, True, True]
    with pytest.raises(ContractViolationError, match='>= -1'):
        Assignment([0, -2])
    with pytest.raises(ContractViolationError, match='integers'):
        Assignment([0.5, 1.0])


def test_rng_is_reproducible() -> None:
    first = Rng(42).generator().random(5)
    second = Rng(42).generator().random(5)
    assert np.array_equal(first, second)
    assert not np.array_equal(first, Rng(43).generator().random(5))


def test_rng_derive_gives_independent_addressed_streams() -> None:
    rng = Rng(42)
    a = rng.derive(1, 2).generator().random(4)
    b = rng.derive(1, 3).generator().random(4)
    assert not np.array_equal(a, b)
    assert np.array_equal(a, Rng(42).derive(1).derive(2).generator().random(4))
    assert rng.seed_for(1, 2) == Rng(42).seed_for(1, 2)
    assert rng.seed_for(1, 2) != rng.seed_for(2, 1)


def test_rng_rejects_negative_seed() -> None:
    with pytest.raises(ContractViolationError):
        Rng(-1)
