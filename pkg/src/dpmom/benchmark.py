"""Benchmark suites: contamination stages on synthetic and Jain data, and the labelled real datasets.

Every suite yields an :class:`~dpmom.metrics.AriTable` of median ARI values. Algorithms that are not
implemented here enter the real-data table with their published values.
"""

import logging
import math
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Union

import numpy as np
import pandas as pd
from typing_extensions import TypedDict

from .baselines import dp_means, kmeans_pp
from .clustering import ClusteringResult, DpMomConfig, fit, merge_small_clusters
from .core import Assignment, DataMatrix, Rng
from .data import DEFAULT_DATA_ROOT, gen_quadrant, inject_outliers, load_dataset, load_manifest
from .errors import ContractViolationError, DataError, MergeImpossibleError, SpawnOverflowError
from .metrics import (
    AriTable,
    FriedmanStage,
    PairedComparison,
    ari_on_inliers,
    friedman_stages,
    paired_tests,
    published_ari_table,
)
from .tuning import ProtocolConfig, ProtocolConfigLike, TuningResult, grid_stage, lambda_bounds, search

__all__ = [
    'DPMEANS',
    'DPMOM',
    'KMEANS',
    'REAL_DATA_SUITES',
    'SUITES',
    'BenchConfig',
    'BenchConfigLike',
    'BenchOverrides',
    'StatsReport',
    'SuiteResult',
    'run_suite',
    'stats_report',
    'tune_dp_means',
    'write_stage_frame',
]

_logger = logging.getLogger(__name__)

DPMOM = 'DP-MoM'
DPMEANS = 'DPM'
KMEANS = 'KM++'
SUITES = ('quadrant', 'jain-outliers', 'uci')
REAL_DATA_SUITES = ('uci', 'compcancer')


class BenchOverrides(TypedDict, total=False):
    runs: int
    seed: int
    points_per_quadrant: int
    quadrant_stages: tuple[int, ...]
    jain_stages: tuple[int, ...]
    datasets: tuple[str, ...] | None
    data_root: str
    protocol: ProtocolConfigLike | None
    include_published: bool


@dataclass(frozen=True)
class BenchConfig:
    """Settings shared by the suites.

    Attributes:
        runs: Seeded runs per dataset and stage; medians are reported.
        seed: Root seed.
        points_per_quadrant: Clean points per quadrant in the synthetic suite.
        quadrant_stages: Outliers added at each synthetic stage.
        jain_stages: Outliers added at each Jain stage.
        datasets: Manifest names for the real-data suite; ``None`` means every labelled real dataset.
        data_root: Directory holding manifest files.
        protocol: Tuning protocol used to pick the penalty and the bucket count.
        include_published: Add the published rows of algorithms not implemented here.
    """

    runs: int = 30
    seed: int = 0
    points_per_quadrant: int = 30
    quadrant_stages: tuple[int, ...] = (15, 15, 20)
    jain_stages: tuple[int, ...] = (20, 20, 20, 20)
    datasets: tuple[str, ...] | None = None
    data_root: str = str(DEFAULT_DATA_ROOT)
    protocol: ProtocolConfigLike | None = None
    include_published: bool = True

    def __post_init__(self) -> None:
        if self.runs < 1:
            raise ContractViolationError(f'runs must be at least 1, got {self.runs}')
        if any(s < 0 for s in (*self.quadrant_stages, *self.jain_stages)):
            raise ContractViolationError('outlier stages must be non-negative')
        ProtocolConfig.from_like(self.protocol)

    @classmethod
    def from_like(cls, like: 'BenchConfigLike | None') -> 'BenchConfig':
        if like is None:
            return cls()
        if isinstance(like, BenchConfig):
            return like
        try:
            return cls(**dict(like))
        except TypeError as e:
            raise ContractViolationError(f'invalid benchmark settings: {e}') from e

    @property
    def tuning(self) -> ProtocolConfig:
        return ProtocolConfig.from_like(self.protocol)


BenchConfigLike = Union[BenchConfig, BenchOverrides]


@dataclass(frozen=True)
class StatsReport:
    friedman: tuple[FriedmanStage, ...]
    paired: tuple[PairedComparison, ...]
    reference: str

    def to_dict(self) -> dict[str, Any]:
        return {
            'reference': self.reference,
            'friedman': [asdict(stage) for stage in self.friedman],
            'paired': [asdict(row) for row in self.paired],
        }


def stats_report(
    table: AriTable,
    reference: str = DPMOM,
    drop_sequence: Sequence[str] = (DPMOM, 'MoMPKM'),
) -> StatsReport:
    """Staged Friedman tests plus paired tests of ``reference`` against every other algorithm.

    Algorithms of ``drop_sequence`` missing from the table are skipped, and dropping stops while at
    least two algorithms remain.
    """
    drops: list[str] = []
    remaining = len(table.algorithms)
    for name in drop_sequence:
        if name in table.algorithms and remaining > 2:
            drops.append(name)
            remaining -= 1
    stages = friedman_stages(table, drops)
    paired = paired_tests(table, reference) if reference in table.algorithms else []
    return StatsReport(tuple(stages), tuple(paired), reference)


@dataclass(frozen=True)
class SuiteResult:
    """Median ARI table of a suite; ``tuning`` maps dataset names to the selected settings."""

    suite: str
    table: AriTable
    tuning: dict[str, TuningResult] = field(default_factory=dict)
    skipped: tuple[str, ...] = ()

    def stage_frame(self) -> pd.DataFrame:
        """Long format (dataset column, algorithm, median ARI) for line plots."""
        frame = self.table.to_frame().reset_index(names='algorithm')
        return frame.melt(id_vars='algorithm', var_name='stage', value_name='ari')

    def stats(self) -> StatsReport | None:
        if len(self.table.datasets) < 2 or len(self.table.algorithms) < 2:
            return None
        return stats_report(self.table)

    def summary(self) -> dict[str, Any]:
        report = self.stats()
        return {
            'suite': self.suite,
            'skipped': list(self.skipped),
            'tuning': {name: result.to_dict() for name, result in self.tuning.items()},
            'stats': report.to_dict() if report is not None else None,
        }


def tune_dp_means(data: DataMatrix, truth: Assignment, points: int = 21) -> float:
    """Penalty of DP-means with the best ARI on an evenly spaced grid over the pairwise-distance range."""
    best_lambda, best_score = math.nan, -math.inf
    for lam in grid_stage(lambda_bounds(data), points):
        try:
            score = ari_on_inliers(truth, dp_means(data, lam).labels)
        except SpawnOverflowError:
            continue
        if score > best_score:
            best_lambda, best_score = lam, score
    if math.isnan(best_lambda):
        raise SpawnOverflowError(data.n, lambda_bounds(data)[1])
    return best_lambda


def _merged(result: ClusteringResult, data: DataMatrix, min_size: int) -> ClusteringResult:
    try:
        return merge_small_clusters(result, data, min_size)
    except MergeImpossibleError:
        return result


def _dpmom_config(tuned: TuningResult, protocol: ProtocolConfig, seed: int, n: int) -> DpMomConfig:
    return DpMomConfig(
        lambda_=tuned.lambda_opt,
        eta=tuned.eta,
        L=min(tuned.L_opt, n),
        seed=seed,
        epsilon=protocol.epsilon,
        delta=protocol.delta,
        t_max=protocol.t_max,
        bucket_strategy=protocol.bucket_strategy,
    )


def _score_runs(
    data: DataMatrix,
    truth: Assignment,
    k: int,
    tuned: TuningResult,
    dp_lambda: float,
    protocol: ProtocolConfig,
    runs: int,
    rng: Rng,
) -> dict[str, float]:
    scores: dict[str, list[float]] = {DPMOM: [], DPMEANS: [], KMEANS: []}
    for run in range(runs):
        seed = rng.seed_for(run)
        result = fit(data, _dpmom_config(tuned, protocol, seed, data.n))
        scores[DPMOM].append(ari_on_inliers(truth, _merged(result, data, protocol.merge_min_size).labels))
        scores[KMEANS].append(ari_on_inliers(truth, kmeans_pp(data, k, Rng(seed)).labels))
    scores[DPMEANS].append(ari_on_inliers(truth, dp_means(data, dp_lambda).labels))
    return {name: float(np.median(values)) for name, values in scores.items()}


def _contamination_suite(
    name: str,
    clean: Sequence[tuple[DataMatrix, Assignment]],
    stages: Sequence[int],
    cfg: BenchConfig,
    rng: Rng,
    k: int,
) -> SuiteResult:
    """Tune on the first clean sample, then score every run at every cumulative contamination level."""
    protocol = cfg.tuning
    data0, truth0 = clean[0]
    tuned = search(data0, truth0, protocol, rng.derive(0))
    dp_lambda = tune_dp_means(data0, truth0)
    totals = list(np.cumsum([0, *stages]))
    per_stage: dict[str, list[list[float]]] = {a: [[] for _ in totals] for a in (DPMOM, DPMEANS, KMEANS)}
    for run, (data, truth) in enumerate(clean):
        box = [(-1.0, 1.0)] * data.p if name == 'quadrant' else None
        pool, pool_truth = inject_outliers(data, truth, int(totals[-1]), rng=rng.derive(1, run), bounds=box)
        for index, total in enumerate(totals):
            rows = np.arange(data.n + int(total))
            stage_data, stage_truth = pool.take(rows), Assignment(pool_truth.labels[rows])
            seed = rng.seed_for(2, run, index)
            result = fit(stage_data, _dpmom_config(tuned, protocol, seed, stage_data.n))
            merged = _merged(result, stage_data, protocol.merge_min_size)
            per_stage[DPMOM][index].append(ari_on_inliers(stage_truth, merged.labels))
            per_stage[DPMEANS][index].append(ari_on_inliers(stage_truth, dp_means(stage_data, dp_lambda).labels))
            per_stage[KMEANS][index].append(ari_on_inliers(stage_truth, kmeans_pp(stage_data, k, Rng(seed)).labels))
        _logger.debug('%s run %d done', name, run)
    columns = [str(data0.n + int(total)) for total in totals]
    values = np.array([[np.median(cell) for cell in per_stage[a]] for a in (DPMOM, DPMEANS, KMEANS)])
    table = AriTable((DPMOM, DPMEANS, KMEANS), tuple(columns), values)
    return SuiteResult(name, table, {name: tuned})


def _quadrant_suite(cfg: BenchConfig, rng: Rng) -> SuiteResult:
    clean = [gen_quadrant(cfg.points_per_quadrant, rng=rng.derive(3, run)) for run in range(cfg.runs)]
    return _contamination_suite('quadrant', clean, cfg.quadrant_stages, cfg, rng, 4)


def _jain_suite(cfg: BenchConfig, rng: Rng) -> SuiteResult:
    spec = load_manifest()['jain']
    try:
        data, truth = load_dataset(spec, cfg.data_root)
    except DataError as e:
        _logger.warning('skipping jain: %s', e)
        empty = AriTable((DPMOM, DPMEANS, KMEANS), (), np.empty((3, 0)))
        return SuiteResult('jain-outliers', empty, skipped=('jain',))
    # One data set, so runs differ only by outliers and bucket seeds.
    return _contamination_suite('jain-outliers', [(data, truth)] * cfg.runs, cfg.jain_stages, cfg, rng, spec.k)


def _uci_suite(cfg: BenchConfig, rng: Rng) -> SuiteResult:
    manifest = load_manifest()
    default = tuple(n for n, s in manifest.items() if s.suite in REAL_DATA_SUITES)
    names = cfg.datasets if cfg.datasets is not None else default
    protocol = cfg.tuning
    columns: list[str] = []
    computed: list[dict[str, float]] = []
    tuning: dict[str, TuningResult] = {}
    skipped: list[str] = []
    for index, name in enumerate(names):
        if name not in manifest:
            raise ContractViolationError(f'unknown dataset {name!r}; known: {sorted(manifest)}')
        spec = manifest[name]
        try:
            data, truth = load_dataset(spec, cfg.data_root)
        except DataError as e:
            _logger.warning('skipping %s: %s', name, e)
            skipped.append(name)
            continue
        cell_rng = rng.derive(4, index)
        tuned = search(data, truth, protocol, cell_rng.derive(0))
        dp_lambda = tune_dp_means(data, truth)
        computed.append(_score_runs(data, truth, spec.k, tuned, dp_lambda, protocol, cfg.runs, cell_rng.derive(1)))
        columns.append(spec.title)
        tuning[spec.title] = tuned
        _logger.info('%s: DP-MoM median ARI %.4f', spec.title, computed[-1][DPMOM])
    algorithms = (DPMOM, DPMEANS, KMEANS)
    values = np.array([[row[a] for row in computed] for a in algorithms]).reshape(len(algorithms), len(columns))
    table = AriTable(algorithms, tuple(columns), values)
    if cfg.include_published and columns:
        published = published_ari_table()
        missing = sorted(set(columns) - set(published.datasets))
        if missing:
            _logger.warning('no published values for %s; left out of the merged table', missing)
        if len(missing) < len(columns):
            table = published.merged(table)
    return SuiteResult('uci', table, tuning, tuple(skipped))


def run_suite(suite: str, config: BenchConfigLike | None = None, rng: Rng | None = None) -> SuiteResult:
    """Run one suite by name: ``'quadrant'``, ``'jain-outliers'`` or ``'uci'``.

    Missing external datasets are skipped with a warning.
    """
    cfg = BenchConfig.from_like(config)
    rng = rng if rng is not None else Rng(cfg.seed)
    if suite == 'quadrant':
        return _quadrant_suite(cfg, rng)
    if suite == 'jain-outliers':
        return _jain_suite(cfg, rng)
    if suite == 'uci':
        return _uci_suite(cfg, rng)
    raise ContractViolationError(f'unknown suite {suite!r}, expected one of {SUITES}')


def write_stage_frame(path: str | Path, result: SuiteResult) -> None:
    result.stage_frame().to_csv(path, index=False, lineterminator='\n', float_format='%.10g')
