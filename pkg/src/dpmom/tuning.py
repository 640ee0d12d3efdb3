"""Grid search over the penalty and the bucket count.

A search runs ``repeats`` independent repetitions. Each repetition sweeps a coarse penalty grid
across every admissible bucket count, then twice refines the penalty grid around the best cell.
Every cell's bucket partition is derived from ``(rng, repeat, L)`` so results do not depend on the
order in which cells are evaluated.
"""

import logging
import math
import time
from collections.abc import Mapping, Sequence
from dataclasses import asdict, dataclass, field, fields
from itertools import product
from pathlib import Path
from typing import Any, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.spatial.distance import pdist
from typing_extensions import TypedDict

from .clustering import ClusteringResult, DpMomConfig, default_learning_rate, fit, merge_small_clusters
from .core import Assignment, AssignmentLike, DataLike, DataMatrix, Rng, as_assignment, as_data, empirical_objective
from .errors import ContractViolationError, DegenerateDataError, MergeImpossibleError, SpawnOverflowError
from .mom import BucketPartition, mom_objective
from .metrics import ari_on_inliers
from .partition import BUCKET_STRATEGIES, build_buckets

__all__ = [
    'CRITERION_ARI',
    'CRITERION_PROXY',
    'ProtocolConfig',
    'ProtocolConfigLike',
    'ProtocolOverrides',
    'TrialRecord',
    'TuningResult',
    'admissible_L',
    'default_proxy_penalty',
    'grid_stage',
    'lambda_bounds',
    'refine_bounds',
    'search',
    'unsupervised_proxy_search',
    'write_trace',
]

_logger = logging.getLogger(__name__)

CRITERION_ARI = 'ari'
CRITERION_PROXY = 'proxy'


class ProtocolOverrides(TypedDict, total=False):
    repeats: int
    stage_points: tuple[int, ...]
    L_values: tuple[int, ...] | None
    eta: float | None
    full_sweep: bool
    max_L_values: int
    merge_min_size: int
    proxy_penalty: float | None
    max_clusters: int | None
    epsilon: float
    delta: float
    t_max: int
    bucket_strategy: str
    n_jobs: int


@dataclass(frozen=True)
class ProtocolConfig:
    """Settings of the tuning protocol.

    Attributes:
        repeats: Independent repetitions of the whole grid search.
        stage_points: Penalty grid sizes; the first stage spans the pairwise-distance range, later
            stages refine around the previous winner.
        L_values: Explicit bucket counts; ``None`` sweeps :func:`admissible_L`.
        eta: Fixed learning rate; ``None`` tries both heuristic candidates in the first stage and
            keeps the winner's.
        full_sweep: Sweep every admissible L even for large n.
        max_L_values: Number of log-spaced L values used for n > 300 without ``full_sweep``.
        merge_min_size: Clusters smaller than this are merged before scoring against the labels.
        proxy_penalty: Fixed per-cluster penalty for the unsupervised criterion. ``None`` scores every
            cell with its own penalty, the objective the fit minimises; see :func:`default_proxy_penalty`.
        max_clusters: Centroid guard passed to every fit; cells that overflow it are skipped.
        n_jobs: joblib worker count for grid cells.
    """

    repeats: int = 35
    stage_points: tuple[int, ...] = (11, 21, 21)
    L_values: tuple[int, ...] | None = None
    eta: float | None = None
    full_sweep: bool = False
    max_L_values: int = 30
    merge_min_size: int = 3
    proxy_penalty: float | None = None
    max_clusters: int | None = None
    epsilon: float = 1.0
    delta: float = 1e-4
    t_max: int = 200
    bucket_strategy: str = 'kmeanspp'
    n_jobs: int = 1

    def __post_init__(self) -> None:
        if self.repeats < 1:
            raise ContractViolationError(f'repeats must be at least 1, got {self.repeats}')
        if not self.stage_points or any(points < 2 for points in self.stage_points):
            raise ContractViolationError(f'every stage needs at least 2 grid points, got {self.stage_points}')
        if self.L_values is not None:
            if not self.L_values or any(L <= 2 for L in self.L_values):
                raise ContractViolationError(f'L values must all exceed 2, got {self.L_values}')
            object.__setattr__(self, 'L_values', tuple(sorted(set(int(L) for L in self.L_values))))
        if self.eta is not None and not (math.isfinite(self.eta) and self.eta > 0):
            raise ContractViolationError(f'eta must be positive, got {self.eta}')
        if self.max_L_values < 2:
            raise ContractViolationError(f'max_L_values must be at least 2, got {self.max_L_values}')
        if self.merge_min_size < 1:
            raise ContractViolationError(f'merge_min_size must be at least 1, got {self.merge_min_size}')
        if self.proxy_penalty is not None and not self.proxy_penalty >= 0:
            raise ContractViolationError(f'proxy penalty must be non-negative, got {self.proxy_penalty}')
        if self.max_clusters is not None and self.max_clusters < 1:
            raise ContractViolationError(f'max_clusters must be at least 1, got {self.max_clusters}')
        if self.bucket_strategy not in BUCKET_STRATEGIES:
            raise ContractViolationError(f'unknown bucket strategy {self.bucket_strategy!r}')
        object.__setattr__(self, 'stage_points', tuple(int(p) for p in self.stage_points))

    @classmethod
    def from_like(cls, like: 'ProtocolConfigLike | None') -> 'ProtocolConfig':
        if like is None:
            return cls()
        if isinstance(like, ProtocolConfig):
            return like
        try:
            return cls(**dict(like))
        except TypeError as e:
            raise ContractViolationError(f'invalid protocol settings: {e}') from e


ProtocolConfigLike = Union[ProtocolConfig, ProtocolOverrides, Mapping[str, Any]]


@dataclass(frozen=True)
class TrialRecord:
    """One evaluated grid cell. ``score`` is the ARI or the proxy objective; ``k`` is 0 on overflow."""

    stage: int
    repeat: int
    lambda_: float
    L: int
    eta: float
    score: float
    k: int
    runtime_ms: float
    seed: int


@dataclass(frozen=True)
class TuningResult:
    """Aggregated outcome of a search.

    ``lambda_opt`` and ``L_opt`` belong to the repetition whose best score is the (lower) median;
    the ranges span the per-repetition optima.
    """

    lambda_opt: float
    L_opt: int
    eta: float
    lambda_range: tuple[float, float]
    L_range: tuple[int, int]
    median_ari: float | None
    median_score: float
    criterion: str
    estimated_clusters: int
    lambda_bounds: tuple[float, float]
    repeats: int
    trials: tuple[TrialRecord, ...] = field(repr=False)
    dropped_repeats: tuple[int, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            'criterion': self.criterion,
            'lambda_opt': self.lambda_opt,
            'L_opt': self.L_opt,
            'eta': self.eta,
            'lambda_range': list(self.lambda_range),
            'L_range': list(self.L_range),
            'median_ari': self.median_ari,
            'median_score': self.median_score,
            'estimated_clusters': self.estimated_clusters,
            'lambda_bounds': list(self.lambda_bounds),
            'repeats': self.repeats,
            'dropped_repeats': list(self.dropped_repeats),
            'trials': len(self.trials),
        }


def lambda_bounds(data: DataLike) -> tuple[float, float]:
    """Smallest non-zero and largest squared distance between two rows.

    Raises:
        DegenerateDataError: If every row is identical.
    """
    matrix = as_data(data)
    if matrix.n < 2:
        raise ContractViolationError('the penalty range needs at least two rows')
    distances = pdist(matrix.values, 'sqeuclidean')
    positive = distances[distances > 0.0]
    if positive.size == 0:
        raise DegenerateDataError('all rows are identical; the penalty range is empty')
    return float(positive.min()), float(positive.max())


def grid_stage(bounds: tuple[float, float], points: int) -> list[float]:
    """``points`` equally spaced values from ``bounds[0]`` to ``bounds[1]`` inclusive."""
    lo, hi = bounds
    if points < 2:
        raise ContractViolationError(f'a grid stage needs at least 2 points, got {points}')
    if not lo <= hi:
        raise ContractViolationError(f'grid bounds are reversed: ({lo}, {hi})')
    return [float(v) for v in np.linspace(lo, hi, points)]


def refine_bounds(grid: Sequence[float], index: int) -> tuple[float, float]:
    """Neighbours of ``grid[index]``; at an end of the grid, the end point and its single neighbour."""
    if not 0 <= index < len(grid) or len(grid) < 2:
        raise ContractViolationError(f'index {index} outside a grid of {len(grid)} points')
    if index == 0:
        return grid[0], grid[1]
    if index == len(grid) - 1:
        return grid[-2], grid[-1]
    return grid[index - 1], grid[index + 1]


def admissible_L(n: int, full_sweep: bool = False, max_values: int = 30) -> tuple[int, ...]:
    """Bucket counts with ``2 < L < n / 3``; log-spaced down to ``max_values`` for n > 300."""
    candidates = [L for L in range(3, n) if 3 * L < n]
    if not candidates:
        raise ContractViolationError(f'no bucket count satisfies 2 < L < n/3 for n={n}')
    if n <= 300 or full_sweep or len(candidates) <= max_values:
        return tuple(candidates)
    spaced = np.unique(np.rint(np.geomspace(candidates[0], candidates[-1], max_values)).astype(np.int64))
    return tuple(int(L) for L in spaced)


@dataclass(frozen=True)
class _Cell:
    stage: int
    repeat: int
    lambda_: float
    L: int
    eta: float
    seed: int


def _score_cell(
    data: DataMatrix,
    truth: Assignment | None,
    partition: BucketPartition,
    cell: _Cell,
    protocol: ProtocolConfig,
    proxy_penalty: float | None,
) -> TrialRecord:
    config = DpMomConfig(
        lambda_=cell.lambda_,
        eta=cell.eta,
        L=cell.L,
        seed=cell.seed,
        epsilon=protocol.epsilon,
        delta=protocol.delta,
        t_max=protocol.t_max,
        max_clusters=protocol.max_clusters,
        bucket_strategy=protocol.bucket_strategy,
    )
    started = time.perf_counter()
    try:
        result: ClusteringResult = fit(data, config, partition=partition)
    except SpawnOverflowError:
        _logger.info('cell lambda=%g L=%d overflowed, scored as worst', cell.lambda_, cell.L)
        score = -math.inf if truth is not None else math.inf
        return TrialRecord(cell.stage, cell.repeat, cell.lambda_, cell.L, cell.eta, score, 0, _ms(started), cell.seed)
    if truth is not None:
        try:
            result = merge_small_clusters(result, data, protocol.merge_min_size)
        except MergeImpossibleError:
            pass
        score = ari_on_inliers(truth, result.labels)
    else:
        penalty = cell.lambda_ if proxy_penalty is None else proxy_penalty
        score = mom_objective(data, partition, result.centroids, penalty)
    return TrialRecord(
        cell.stage, cell.repeat, cell.lambda_, cell.L, cell.eta, score, result.k, _ms(started), cell.seed
    )


def _ms(started: float) -> float:
    return round((time.perf_counter() - started) * 1000.0, 3)


def _rank_key(record: TrialRecord, sign: float) -> tuple[float, float, int]:
    return (-sign * record.score, record.lambda_, record.L)


def _best(records: Sequence[TrialRecord], sign: float) -> TrialRecord:
    return min(records, key=lambda r: _rank_key(r, sign))


def _run(
    data: DataLike,
    truth: Assignment | None,
    protocol: ProtocolConfigLike | None,
    rng: Rng | None,
) -> TuningResult:
    matrix = as_data(data)
    cfg = ProtocolConfig.from_like(protocol)
    rng = rng if rng is not None else Rng(0)
    criterion = CRITERION_ARI if truth is not None else CRITERION_PROXY
    sign = 1.0 if truth is not None else -1.0
    if truth is not None and truth.n != matrix.n:
        raise ContractViolationError(f'{truth.n} labels for {matrix.n} rows')
    bounds = lambda_bounds(matrix)
    Ls = cfg.L_values if cfg.L_values is not None else admissible_L(matrix.n, cfg.full_sweep, cfg.max_L_values)
    if Ls[-1] > matrix.n:
        raise ContractViolationError(f'L={Ls[-1]} exceeds the number of rows n={matrix.n}')
    etas: tuple[float, ...] = (cfg.eta,) if cfg.eta is not None else default_learning_rate(matrix)
    _logger.info(
        'tuning (%s): lambda in [%g, %g], %d L values, %d repeats',
        criterion,
        bounds[0],
        bounds[1],
        len(Ls),
        cfg.repeats,
    )

    partitions: dict[tuple[int, int], BucketPartition] = {}
    seeds: dict[tuple[int, int], int] = {}
    for repeat, L in product(range(cfg.repeats), Ls):
        seeds[repeat, L] = rng.seed_for(repeat, L)
        partitions[repeat, L] = build_buckets(matrix, L, Rng(seeds[repeat, L]), cfg.bucket_strategy)

    def evaluate(cells: list[_Cell]) -> list[TrialRecord]:
        jobs = (
            delayed(_score_cell)(matrix, truth, partitions[c.repeat, c.L], c, cfg, cfg.proxy_penalty)
            for c in cells
        )
        return list(Parallel(n_jobs=cfg.n_jobs)(jobs))

    trials: list[TrialRecord] = []
    grids = {repeat: grid_stage(bounds, cfg.stage_points[0]) for repeat in range(cfg.repeats)}
    frozen_eta: dict[int, float] = {}
    alive = list(range(cfg.repeats))
    dropped: list[int] = []

    def drop(repeat: int) -> None:
        _logger.warning('repeat %d: every cell overflowed max_clusters; repeat dropped', repeat)
        alive.remove(repeat)
        dropped.append(repeat)

    for stage, _ in enumerate(cfg.stage_points, start=1):
        cells = [
            _Cell(stage, repeat, lam, L, eta, seeds[repeat, L])
            for repeat in alive
            for lam in grids[repeat]
            for L in Ls
            for eta in (etas if stage == 1 else (frozen_eta[repeat],))
        ]
        records = evaluate(cells)
        trials.extend(records)
        if stage == len(cfg.stage_points):
            break
        for repeat in list(alive):
            winner = _best([r for r in records if r.repeat == repeat], sign)
            if not math.isfinite(winner.score):
                drop(repeat)
                continue
            if stage == 1:
                frozen_eta[repeat] = winner.eta
            index = grids[repeat].index(winner.lambda_)
            grids[repeat] = grid_stage(refine_bounds(grids[repeat], index), cfg.stage_points[stage])
            _logger.info(
                'repeat %d stage %d winner: lambda=%g L=%d score=%.4f',
                repeat,
                stage,
                winner.lambda_,
                winner.L,
                winner.score,
            )

    optima: list[TrialRecord] = []
    for repeat in list(alive):
        winner = _best([r for r in trials if r.repeat == repeat], sign)
        if not math.isfinite(winner.score):
            drop(repeat)
            continue
        optima.append(winner)
    if not optima:
        raise SpawnOverflowError(cfg.max_clusters if cfg.max_clusters is not None else matrix.n, bounds[1])
    ordered = sorted(optima, key=lambda r: _rank_key(r, sign))
    middle = ordered[(len(ordered) - 1) // 2]
    scores = np.array([r.score for r in optima], dtype=np.float64)
    ks = sorted(r.k for r in optima)
    median_score = float(np.median(scores))
    return TuningResult(
        lambda_opt=middle.lambda_,
        L_opt=middle.L,
        eta=middle.eta,
        lambda_range=(min(r.lambda_ for r in optima), max(r.lambda_ for r in optima)),
        L_range=(min(r.L for r in optima), max(r.L for r in optima)),
        median_ari=median_score if truth is not None else None,
        median_score=median_score,
        criterion=criterion,
        estimated_clusters=ks[(len(ks) - 1) // 2],
        lambda_bounds=bounds,
        repeats=len(optima),
        trials=tuple(trials),
        dropped_repeats=tuple(sorted(dropped)),
    )


def search(
    data: DataLike,
    labels: AssignmentLike,
    protocol: ProtocolConfigLike | None = None,
    rng: Rng | None = None,
) -> TuningResult:
    """Supervised tuning: every cell is scored by the ARI of its fit against ``labels``.

    Fits are post-processed with :func:`~dpmom.clustering.merge_small_clusters` before scoring and
    rows labelled as outliers are left out of the ARI. Ties prefer the smaller penalty, then the
    smaller L. Cells whose fit overflows score ``-inf``; a repetition in which every cell overflows is
    dropped with a warning and listed in ``dropped_repeats``.

    Raises:
        DegenerateDataError: If all rows coincide.
        SpawnOverflowError: If every repetition was dropped.
    """
    return _run(data, as_assignment(labels), protocol, rng)


def unsupervised_proxy_search(
    data: DataLike,
    protocol: ProtocolConfigLike | None = None,
    rng: Rng | None = None,
) -> TuningResult:
    """Label-free tuning that minimises the penalized MoM objective of each fit.

    By default a cell is scored with its own penalty, ``median bucket loss + lambda * k``, the same
    objective the fit minimises. Setting ``protocol.proxy_penalty`` scores every cell under that one
    penalty instead, so cells with different penalties compete on one scale;
    :func:`default_proxy_penalty` gives a data-derived value. This is a proxy criterion; the result
    reports ``criterion='proxy'`` and no ARI.
    """
    matrix = as_data(data)
    if matrix.n < 10:
        raise ContractViolationError(f'proxy tuning needs at least 10 rows, got {matrix.n}')
    return _run(matrix, None, protocol, rng)


def default_proxy_penalty(data: DataLike) -> float:
    """Half the objective of the single cluster at the grand mean, a fixed penalty for proxy tuning."""
    matrix = as_data(data)
    return 0.5 * empirical_objective(matrix, matrix.grand_mean()[None, :])


def write_trace(path: str | Path, result: TuningResult) -> None:
    """Write every evaluated cell as CSV, one row per cell in evaluation order."""
    score_column = CRITERION_ARI if result.criterion == CRITERION_ARI else 'objective'
    frame = pd.DataFrame([asdict(trial) for trial in result.trials], columns=[f.name for f in fields(TrialRecord)])
    frame = frame.rename(columns={'lambda_': 'lambda', 'score': score_column})
    columns = ['stage', 'repeat', 'lambda', 'L', 'eta', score_column, 'k', 'runtime_ms', 'seed']
    frame[columns].to_csv(path, index=False, lineterminator='\n', float_format='%.10g')
