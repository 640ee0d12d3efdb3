"""Reference algorithms: DP-means and Lloyd's k-means with k-means++ seeding.

DP-means sums the point losses while DP-MoM averages them per bucket, so penalties are not
interchangeable between the two.
"""

import logging

import numpy as np

from .clustering import ClusteringResult, assign_and_spawn
from .core import (
    Assignment,
    CentroidSet,
    CentroidsLike,
    DataLike,
    FloatArray,
    IntArray,
    Rng,
    as_centroids,
    as_data,
    divergence,
)
from .errors import ContractViolationError

__all__ = ['cluster_means', 'dp_means', 'kmeans_pp', 'kmeans_pp_seed', 'lloyd']

_logger = logging.getLogger(__name__)


def cluster_means(points: FloatArray, labels: IntArray, k: int) -> tuple[FloatArray, IntArray]:
    """Per-label means and member counts; rows of empty labels are zero."""
    sums = np.zeros((k, points.shape[1]), dtype=np.float64)
    np.add.at(sums, labels, points)
    counts = np.bincount(labels, minlength=k).astype(np.int64)
    means = np.divide(sums, counts[:, None], out=np.zeros_like(sums), where=counts[:, None] > 0)
    return means, counts


def dp_means(
    data: DataLike,
    lambda_: float,
    t_max: int = 100,
    delta: float = 1e-6,
    max_clusters: int | None = None,
) -> ClusteringResult:
    """Hard-clustering DP-means: spawn-or-assign sweeps followed by mean updates.

    The objective recorded per iteration is the summed squared distance of every row to its
    cluster mean plus ``lambda_ * k``. Clusters left empty by a sweep are removed before the
    update. The loop stops when the labels repeat or the objective changes by at most ``delta``
    relative to the previous iteration.
    """
    matrix = as_data(data)
    if lambda_ < 0:
        raise ContractViolationError(f'lambda must be non-negative, got {lambda_}')
    if t_max < 1:
        raise ContractViolationError(f't_max must be at least 1, got {t_max}')
    points = matrix.values
    centroids = CentroidSet(matrix.grand_mean()[None, :])
    labels = np.zeros(matrix.n, dtype=np.int64)
    previous: IntArray | None = None
    trace: list[float] = []
    converged = False
    for _ in range(t_max):
        swept, grown = assign_and_spawn(matrix, centroids, lambda_, max_clusters)
        live = np.unique(swept.labels)
        labels = np.searchsorted(live, swept.labels).astype(np.int64)
        means, _ = cluster_means(points, labels, live.size)
        centroids = CentroidSet(means)
        residual = points - means[labels]
        objective = float(np.einsum('ij,ij->', residual, residual)) + lambda_ * live.size
        trace.append(objective)
        _logger.debug(
            'DP-means sweep %d: objective=%.6g k=%d (%d emptied)', len(trace), objective, live.size, grown.k - live.size
        )
        if previous is not None and np.array_equal(previous, labels):
            converged = True
            break
        if len(trace) > 1 and abs(trace[-2] - objective) <= delta * abs(trace[-2]):
            converged = True
            break
        previous = labels
    return ClusteringResult(
        labels=Assignment(labels),
        centroids=centroids,
        objective_trace=tuple(trace),
        converged=converged,
        iterations=len(trace),
        config={'lambda': lambda_, 't_max': t_max, 'delta': delta, 'max_clusters': max_clusters},
        seed=None,
        algorithm='dpmeans',
    )


def kmeans_pp_seed(data: DataLike, k: int, rng: Rng) -> CentroidSet:
    """Pick ``k`` distinct rows as seeds: the first uniformly, the rest weighted by squared distance."""
    matrix = as_data(data)
    if not 1 <= k <= matrix.n:
        raise ContractViolationError(f'k={k} must satisfy 1 <= k <= n={matrix.n}')
    generator = rng.generator()
    points = matrix.values
    available = np.ones(matrix.n, dtype=bool)
    first = int(generator.integers(matrix.n))
    chosen = [first]
    available[first] = False
    nearest = divergence(points, points[first : first + 1])[:, 0]
    for _ in range(k - 1):
        weights = np.where(available, nearest, 0.0)
        total = float(weights.sum())
        if total > 0.0:
            pick = int(generator.choice(matrix.n, p=weights / total))
        else:
            pick = int(generator.choice(np.flatnonzero(available)))
        chosen.append(pick)
        available[pick] = False
        nearest = np.minimum(nearest, divergence(points, points[pick : pick + 1])[:, 0])
    return CentroidSet(points[chosen])


def _reseed_empty(points: FloatArray, centroids: FloatArray, labels: IntArray, counts: IntArray) -> FloatArray:
    empty = np.flatnonzero(counts == 0)
    if empty.size == 0:
        return centroids
    reseeded = centroids.copy()
    losses = divergence(points, centroids)[np.arange(points.shape[0]), labels]
    for j in empty:
        farthest = int(np.argmax(losses))
        reseeded[j] = points[farthest]
        losses[farthest] = -1.0
    _logger.debug('re-seeded %d empty clusters at the farthest points', empty.size)
    return reseeded


def lloyd(data: DataLike, seeds: CentroidsLike, t_max: int = 100, delta: float = 0.0) -> ClusteringResult:
    """Lloyd iterations from the given seeds until the labels repeat or ``t_max`` updates ran.

    A cluster that loses all members is moved onto the row farthest from its own centroid. The
    recorded objective is the summed nearest-centroid loss after each update. With ``delta > 0`` the
    loop also stops once the relative decrease falls to ``delta`` or below.
    """
    matrix = as_data(data)
    theta = as_centroids(seeds)
    if theta.p != matrix.p:
        raise ContractViolationError(f'dimension mismatch: data has {matrix.p} columns, seeds have {theta.p}')
    if t_max < 1:
        raise ContractViolationError(f't_max must be at least 1, got {t_max}')
    points = matrix.values
    centroids = np.array(theta.values, copy=True)
    previous: IntArray | None = None
    trace: list[float] = []
    converged = False
    for _ in range(t_max):
        labels = np.argmin(divergence(points, centroids), axis=1).astype(np.int64)
        if previous is not None and np.array_equal(previous, labels):
            converged = True
            break
        means, counts = cluster_means(points, labels, theta.k)
        centroids = np.where(counts[:, None] > 0, means, centroids)
        centroids = _reseed_empty(points, centroids, labels, counts)
        objective = float(divergence(points, centroids).min(axis=1).sum())
        trace.append(objective)
        previous = labels
        if delta > 0 and len(trace) > 1 and trace[-2] - objective <= delta * trace[-2]:
            converged = True
            break
    final = np.argmin(divergence(points, centroids), axis=1).astype(np.int64)
    return ClusteringResult(
        labels=Assignment(final),
        centroids=CentroidSet(centroids),
        objective_trace=tuple(trace),
        converged=converged,
        iterations=len(trace),
        config={'k': theta.k, 't_max': t_max, 'delta': delta},
        seed=None,
        algorithm='kmeans',
    )


def kmeans_pp(data: DataLike, k: int, rng: Rng, t_max: int = 100, delta: float = 0.0) -> ClusteringResult:
    """Lloyd's algorithm started from k-means++ seeds."""
    result = lloyd(data, kmeans_pp_seed(data, k, rng), t_max=t_max, delta=delta)
    return ClusteringResult(
        labels=result.labels,
        centroids=result.centroids,
        objective_trace=result.objective_trace,
        converged=result.converged,
        iterations=result.iterations,
        config=result.config,
        seed=rng.seed,
        algorithm='kmeans',
    )
