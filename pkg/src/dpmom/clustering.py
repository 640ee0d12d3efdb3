"""DP-MoM fitting: Dirichlet-process spawning with centroids driven by the median bucket.

One iteration of :func:`fit` scans the rows in order and spawns a centroid on every row whose
loss exceeds the penalty, evaluates the bucket means of the loss, picks the median bucket and
moves the centroids with an AdaGrad step computed on that bucket alone.
"""

import logging
import math
from collections.abc import Mapping
from dataclasses import asdict, dataclass, field
from typing import Any, Union

import numpy as np
import numpy.typing as npt
from scipy.spatial.distance import pdist
from typing_extensions import TypedDict

from .core import (
    Assignment,
    AssignmentLike,
    CentroidSet,
    CentroidsLike,
    DataLike,
    FloatArray,
    IntArray,
    Rng,
    as_assignment,
    as_centroids,
    as_data,
    divergence,
)
from .errors import (
    ContractViolationError,
    DegenerateDataError,
    MergeImpossibleError,
    NumericFaultError,
    SpawnOverflowError,
)
from .mom import BucketPartition, block_means, select_median_bucket
from .partition import BUCKET_STRATEGIES, build_buckets

__all__ = [
    'ClusteringResult',
    'DpMomConfig',
    'DpMomConfigLike',
    'DpMomConfigOverrides',
    'OptimizerState',
    'adagrad_step',
    'assign_and_spawn',
    'default_learning_rate',
    'fit',
    'gradient',
    'merge_small_clusters',
]

_logger = logging.getLogger(__name__)


class DpMomConfigOverrides(TypedDict, total=False):
    lambda_: float
    eta: float
    L: int
    seed: int
    epsilon: float
    delta: float
    t_max: int
    max_clusters: int | None
    bucket_strategy: str


@dataclass(frozen=True)
class DpMomConfig:
    """Settings of one DP-MoM fit.

    Attributes:
        lambda_: Cluster penalty; a row spawns a centroid when its loss exceeds it.
        eta: AdaGrad learning rate.
        L: Number of MoM buckets, at least 3.
        seed: Seed of the bucket partition.
        epsilon: AdaGrad stabilizer added under the square root.
        delta: Relative change of the objective at which the loop stops.
        t_max: Iteration cap.
        max_clusters: Guard on the number of centroids; ``None`` means n.
        bucket_strategy: ``'kmeanspp'`` or ``'random'``.
    """

    lambda_: float
    eta: float
    L: int
    seed: int = 0
    epsilon: float = 1.0
    delta: float = 1e-4
    t_max: int = 200
    max_clusters: int | None = None
    bucket_strategy: str = 'kmeanspp'

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lambda_) and self.lambda_ >= 0):
            raise ContractViolationError(f'lambda must be a finite non-negative number, got {self.lambda_}')
        if not (math.isfinite(self.eta) and self.eta > 0):
            raise ContractViolationError(f'eta must be positive, got {self.eta}')
        if not (math.isfinite(self.epsilon) and self.epsilon > 0):
            raise ContractViolationError(f'epsilon must be positive, got {self.epsilon}')
        if not 0 < self.delta < 1:
            raise ContractViolationError(f'delta must lie in (0, 1), got {self.delta}')
        if self.t_max < 1:
            raise ContractViolationError(f't_max must be at least 1, got {self.t_max}')
        if self.L <= 2:
            raise ContractViolationError(f'L must exceed 2, got {self.L}')
        if self.max_clusters is not None and self.max_clusters < 1:
            raise ContractViolationError(f'max_clusters must be at least 1, got {self.max_clusters}')
        if self.bucket_strategy not in BUCKET_STRATEGIES:
            raise ContractViolationError(
                f'unknown bucket strategy {self.bucket_strategy!r}, expected one of {BUCKET_STRATEGIES}'
            )
        Rng(self.seed)

    @classmethod
    def from_like(cls, like: 'DpMomConfigLike') -> 'DpMomConfig':
        if isinstance(like, DpMomConfig):
            return like
        values = dict(like)
        if 'lambda' in values:
            values['lambda_'] = values.pop('lambda')
        try:
            return cls(**values)
        except TypeError as e:
            raise ContractViolationError(f'invalid DP-MoM settings: {e}') from e

    def to_dict(self) -> dict[str, Any]:
        values = asdict(self)
        values['lambda'] = values.pop('lambda_')
        return values


DpMomConfigLike = Union[DpMomConfig, DpMomConfigOverrides, Mapping[str, Any]]


@dataclass(frozen=True, eq=False)
class OptimizerState:
    """Per-centroid running sum of squared gradient norms and the iteration counter."""

    grad_sq_accum: FloatArray
    iteration: int = 0

    def __post_init__(self) -> None:
        accum = np.array(self.grad_sq_accum, dtype=np.float64, copy=True)
        if accum.ndim != 1 or (accum.size and accum.min() < 0):
            raise ContractViolationError('gradient accumulators must be a non-negative vector')
        accum.setflags(write=False)
        object.__setattr__(self, 'grad_sq_accum', accum)

    @classmethod
    def fresh(cls, k: int) -> 'OptimizerState':
        return cls(np.zeros(k, dtype=np.float64))

    @property
    def k(self) -> int:
        return int(self.grad_sq_accum.size)

    def grow(self, k: int) -> 'OptimizerState':
        """Accumulators for newly spawned centroids start at zero."""
        if k < self.k:
            raise ContractViolationError(f'cannot shrink optimizer state from {self.k} to {k}')
        if k == self.k:
            return self
        padded = np.concatenate([self.grad_sq_accum, np.zeros(k - self.k, dtype=np.float64)])
        return OptimizerState(padded, self.iteration)


@dataclass(frozen=True, eq=False)
class ClusteringResult:
    """Outcome of a clustering run.

    ``labels`` only reference live centroids, and ``objective_trace`` holds one objective value per
    iteration. ``config`` echoes the settings the run was started with.
    """

    labels: Assignment
    centroids: CentroidSet
    objective_trace: tuple[float, ...]
    converged: bool
    iterations: int
    config: Mapping[str, Any] = field(default_factory=dict)
    seed: int | None = None
    algorithm: str = 'dpmom'

    def __post_init__(self) -> None:
        labels = self.labels.labels
        if labels.size and (labels.min() < 0 or labels.max() >= self.centroids.k):
            raise ContractViolationError(f'labels must reference centroids 0..{self.centroids.k - 1}')
        if len(self.objective_trace) != self.iterations:
            raise ContractViolationError(
                f'objective trace has {len(self.objective_trace)} entries for {self.iterations} iterations'
            )
        object.__setattr__(self, 'objective_trace', tuple(float(v) for v in self.objective_trace))
        object.__setattr__(self, 'config', dict(self.config))

    @property
    def k(self) -> int:
        return self.centroids.k

    def cluster_sizes(self) -> IntArray:
        return self.labels.sizes(self.k)

    def to_dict(self) -> dict[str, Any]:
        return {
            'algorithm': self.algorithm,
            'k': self.k,
            'labels': self.labels.to_list(),
            'centroids': self.centroids.to_list(),
            'objective_trace': list(self.objective_trace),
            'converged': self.converged,
            'iterations': self.iterations,
            'config': dict(self.config),
            'seed': self.seed,
        }

    @classmethod
    def from_dict(cls, values: Mapping[str, Any]) -> 'ClusteringResult':
        try:
            return cls(
                labels=Assignment(np.asarray(values['labels'], dtype=np.int64)),
                centroids=CentroidSet(np.asarray(values['centroids'], dtype=np.float64)),
                objective_trace=tuple(values.get('objective_trace', ())),
                converged=bool(values.get('converged', False)),
                iterations=int(values.get('iterations', len(values.get('objective_trace', ())))),
                config=dict(values.get('config', {})),
                seed=values.get('seed'),
                algorithm=str(values.get('algorithm', 'dpmom')),
            )
        except KeyError as e:
            raise ContractViolationError(f'clustering result is missing field {e}') from e


def _spawn_sweep(
    points: FloatArray,
    centroids: FloatArray,
    lambda_: float,
    limit: int,
) -> tuple[IntArray, FloatArray]:
    # Vectorized row-order scan: only the rows after each spawn need the new centroid's distance.
    distances = divergence(points, centroids)
    labels = np.argmin(distances, axis=1).astype(np.int64)
    best = distances[np.arange(points.shape[0]), labels]
    grown = list(centroids)
    start = 0
    while True:
        over = np.flatnonzero(best[start:] > lambda_)
        if over.size == 0:
            break
        row = start + int(over[0])
        if len(grown) >= limit:
            raise SpawnOverflowError(limit, lambda_)
        spawned = points[row]
        grown.append(spawned)
        labels[row] = len(grown) - 1
        best[row] = 0.0
        tail = divergence(points[row + 1 :], spawned[None, :])[:, 0]
        closer = tail < best[row + 1 :]
        labels[row + 1 :][closer] = len(grown) - 1
        best[row + 1 :][closer] = tail[closer]
        start = row + 1
    return labels, np.asarray(grown, dtype=np.float64)


def assign_and_spawn(
    data: DataLike,
    centroids: CentroidsLike,
    lambda_: float,
    max_clusters: int | None = None,
) -> tuple[Assignment, CentroidSet]:
    """Scan the rows in order, spawning a centroid on every row farther than ``lambda_`` from all.

    Each row's loss is taken against the centroid set as grown so far. A row whose loss exceeds
    ``lambda_`` becomes a new centroid and is labelled with it; any other row is labelled with its
    nearest centroid (lowest index on ties).

    Raises:
        SpawnOverflowError: If the centroid count would exceed ``max_clusters`` (default n).
    """
    matrix, theta = as_data(data), as_centroids(centroids)
    if matrix.p != theta.p:
        raise ContractViolationError(f'dimension mismatch: data has {matrix.p} columns, centroids have {theta.p}')
    if lambda_ < 0:
        raise ContractViolationError(f'lambda must be non-negative, got {lambda_}')
    limit = matrix.n if max_clusters is None else max_clusters
    labels, grown = _spawn_sweep(matrix.values, theta.values, lambda_, max(limit, theta.k))
    return Assignment(labels), CentroidSet(grown)


def _block_gradient(points: FloatArray, block: IntArray, centroids: FloatArray, labels: IntArray) -> FloatArray:
    k, p = centroids.shape
    members = labels[block]
    sums = np.zeros((k, p), dtype=np.float64)
    np.add.at(sums, members, points[block])
    counts = np.bincount(members, minlength=k).astype(np.float64)
    return np.asarray(2.0 * (counts[:, None] * centroids - sums) / block.size, dtype=np.float64)


def gradient(
    data: DataLike,
    block: npt.ArrayLike,
    centroids: CentroidsLike,
    assignment: AssignmentLike,
) -> FloatArray:
    """Gradient of the block's mean loss with respect to every centroid, at a fixed assignment.

    Returns:
        A (k, p) matrix; centroids without a member in the block get a zero row.
    """
    matrix, theta, labels = as_data(data), as_centroids(centroids), as_assignment(assignment)
    rows = np.asarray(block, dtype=np.int64).ravel()
    if rows.size < 1:
        raise ContractViolationError('gradient block must be non-empty')
    if labels.n != matrix.n:
        raise ContractViolationError(f'assignment has {labels.n} labels for {matrix.n} rows')
    if labels.labels.size and (labels.labels.min() < 0 or labels.labels.max() >= theta.k):
        raise ContractViolationError('assignment references a centroid that does not exist')
    return _block_gradient(matrix.values, rows, theta.values, labels.labels)


def adagrad_step(
    centroids: CentroidsLike,
    state: OptimizerState,
    grads: npt.ArrayLike,
    eta: float,
    epsilon: float,
) -> tuple[CentroidSet, OptimizerState]:
    """Move every centroid by ``eta / sqrt(epsilon + accum)`` times its gradient.

    The accumulator includes the squared norm of this step's gradient before the step is taken.

    Raises:
        NumericFaultError: If the gradient or the updated centroids are not finite.
    """
    theta = as_centroids(centroids)
    g = np.asarray(grads, dtype=np.float64)
    if g.shape != theta.values.shape:
        raise ContractViolationError(f'gradient shape {g.shape} does not match centroids {theta.values.shape}')
    if state.k != theta.k:
        raise ContractViolationError(f'optimizer state tracks {state.k} centroids, got {theta.k}')
    if not np.isfinite(g).all():
        raise NumericFaultError(f'non-finite gradient at iteration {state.iteration}')
    accum = state.grad_sq_accum + np.einsum('ij,ij->i', g, g)
    moved = theta.values - (eta / np.sqrt(epsilon + accum))[:, None] * g
    if not np.isfinite(moved).all():
        raise NumericFaultError(f'centroid update overflowed at iteration {state.iteration}')
    return CentroidSet(moved), OptimizerState(accum, state.iteration + 1)


def _prune(points: FloatArray, centroids: FloatArray) -> tuple[IntArray, FloatArray]:
    distances = divergence(points, centroids)
    labels = np.argmin(distances, axis=1).astype(np.int64)
    live = np.unique(labels)
    return np.searchsorted(live, labels).astype(np.int64), centroids[live]


def fit(data: DataLike, config: DpMomConfigLike, partition: BucketPartition | None = None) -> ClusteringResult:
    """Run DP-MoM from the grand mean until the objective settles or ``t_max`` is reached.

    Args:
        data: Observations to cluster.
        config: Fit settings.
        partition: Bucket partition to use instead of building one from ``config.seed``.

    Returns:
        The final centroids and the labels of one last pure assignment pass against them. Centroids
        that end up without members are dropped and the labels renumbered.

    Raises:
        SpawnOverflowError: If spawning exceeds ``config.max_clusters``.
        NumericFaultError: If the AdaGrad update diverges.
    """
    matrix = as_data(data)
    cfg = DpMomConfig.from_like(config)
    n = matrix.n
    if cfg.L > n:
        raise ContractViolationError(f'L={cfg.L} exceeds the number of rows n={n}')
    limit = n if cfg.max_clusters is None else cfg.max_clusters
    if limit > n:
        raise ContractViolationError(f'max_clusters={limit} exceeds n={n}')
    if partition is None:
        partition = build_buckets(matrix, cfg.L, Rng(cfg.seed), cfg.bucket_strategy)
    elif partition.L != cfg.L or partition.n != n:
        raise ContractViolationError(
            f'partition has L={partition.L} over {partition.n} rows, expected L={cfg.L}, n={n}'
        )

    points = matrix.values
    theta = CentroidSet(matrix.grand_mean()[None, :])
    state = OptimizerState.fresh(1)
    trace: list[float] = []
    converged = False
    for _ in range(cfg.t_max):
        labels, grown = _spawn_sweep(points, theta.values, cfg.lambda_, limit)
        theta = CentroidSet(grown)
        state = state.grow(theta.k)
        losses = divergence(points, grown).min(axis=1)
        means = block_means(losses, partition)
        median_bucket = select_median_bucket(means)
        objective = float(means[median_bucket]) + cfg.lambda_ * theta.k
        trace.append(objective)
        _logger.debug('iteration %d: h=%.6g k=%d median bucket %d', len(trace), objective, theta.k, median_bucket)
        if objective == 0.0 or (len(trace) > 1 and abs(objective / trace[-2] - 1.0) <= cfg.delta):
            converged = True
            break
        grads = _block_gradient(points, partition.blocks[median_bucket], grown, labels)
        theta, state = adagrad_step(theta, state, grads, cfg.eta, cfg.epsilon)

    final_labels, live = _prune(points, theta.values)
    if live.shape[0] < theta.k:
        _logger.debug('dropped %d centroids without members', theta.k - live.shape[0])
    _logger.info(
        'DP-MoM fit: k=%d after %d iterations (converged=%s, lambda=%g, L=%d)',
        live.shape[0],
        len(trace),
        converged,
        cfg.lambda_,
        cfg.L,
    )
    return ClusteringResult(
        labels=Assignment(final_labels),
        centroids=CentroidSet(live),
        objective_trace=tuple(trace),
        converged=converged,
        iterations=len(trace),
        config=cfg.to_dict(),
        seed=cfg.seed,
        algorithm='dpmom',
    )


def merge_small_clusters(result: ClusteringResult, data: DataLike, min_size: int = 3) -> ClusteringResult:
    """Fold clusters with fewer than ``min_size`` members into the nearest cluster that has enough.

    Nearness is measured between centroids. Surviving centroids keep their position and order.

    Raises:
        MergeImpossibleError: If no cluster has ``min_size`` members.
    """
    matrix = as_data(data)
    if matrix.n != result.labels.n:
        raise ContractViolationError(f'result labels {result.labels.n} rows, data has {matrix.n}')
    sizes = result.cluster_sizes()
    large = np.flatnonzero(sizes >= min_size)
    if large.size == 0:
        raise MergeImpossibleError(
            f'no cluster has at least {min_size} members (largest has {int(sizes.max())}); nothing can absorb the rest'
        )
    if large.size == result.k:
        return result
    centroids = result.centroids.values
    remap = np.empty(result.k, dtype=np.int64)
    remap[large] = np.arange(large.size)
    small = np.flatnonzero(sizes < min_size)
    remap[small] = np.argmin(divergence(centroids[small], centroids[large]), axis=1)
    merged = remap[result.labels.labels].astype(np.int64)
    _logger.debug('merged %d small clusters into %d', result.k - large.size, large.size)
    return ClusteringResult(
        labels=Assignment(merged),
        centroids=CentroidSet(centroids[large]),
        objective_trace=result.objective_trace,
        converged=result.converged,
        iterations=result.iterations,
        config=result.config,
        seed=result.seed,
        algorithm=result.algorithm,
    )


def default_learning_rate(data: DataLike) -> tuple[float, float]:
    """Two learning-rate candidates from the largest squared separation D of the data.

    The first is ``10 ** (ceil(2 * log10(D)) / 2)``, the second one order of magnitude lower.

    Raises:
        DegenerateDataError: If all rows coincide.
    """
    matrix = as_data(data)
    if matrix.n < 2:
        raise ContractViolationError('the learning-rate heuristic needs at least two rows')
    largest = float(np.max(pdist(matrix.values, 'sqeuclidean')))
    if largest <= 0.0:
        raise DegenerateDataError('all rows are identical; no distance scale for the learning rate')
    exponent = math.ceil(2.0 * math.log10(largest)) / 2.0
    return 10.0**exponent, 10.0 ** (exponent - 1.0)
