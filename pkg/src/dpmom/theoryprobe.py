"""Empirical probes of the robustness and convergence guarantees.

The guarantees carry unknown constants, so these probes check directions only: the fitted clustering
should barely move while contamination stays below half the bucket count, and the excess objective should
shrink as the sample grows.
"""

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy import stats

from .baselines import dp_means
from .clustering import DpMomConfig, fit
from .core import Assignment, CentroidSet, DataMatrix, FloatArray, Rng, divergence, empirical_objective
from .data import OUTLIER_LABEL, GaussianMixture, gen_quadrant, inject_outliers
from .errors import AssumptionViolationError, ContractViolationError
from .metrics import ari_on_inliers

__all__ = [
    'CONTAMINATION_MARGIN',
    'ContaminationLevel',
    'ContaminationReport',
    'RateLevel',
    'RateReport',
    'contamination_sweep',
    'default_L_rule',
    'quadrant_generator',
    'rate_trend',
    'write_report_csv',
]

_logger = logging.getLogger(__name__)

CONTAMINATION_MARGIN = 0.5
"""Buckets must exceed ``(2 + CONTAMINATION_MARGIN)`` times the number of outliers."""

Generator = Callable[[Rng], tuple[DataMatrix, Assignment]]
LRule = Callable[[int, int], int]


def quadrant_generator(points_per_quadrant: int = 30) -> Generator:
    def generate(rng: Rng) -> tuple[DataMatrix, Assignment]:
        return gen_quadrant(points_per_quadrant, rng=rng)

    return generate


def default_L_rule(n: int, outliers: int) -> int:
    """Smallest bucket count above ``(2 + margin) * outliers``, never below 3."""
    return max(3, math.floor((2.0 + CONTAMINATION_MARGIN) * outliers) + 1)


def _check_L(L: int, n: int, outliers: int) -> None:
    if not L > (2.0 + CONTAMINATION_MARGIN) * outliers:
        raise AssumptionViolationError(
            f'L={L} does not exceed {2.0 + CONTAMINATION_MARGIN:g} x {outliers} outliers; '
            'the contamination guarantee does not apply'
        )
    if not 2 < L <= n:
        raise AssumptionViolationError(f'L={L} must lie in (2, n={n}] to hold {outliers} outliers')


def _displacement(reference: CentroidSet, moved: CentroidSet) -> float:
    # Mean distance from each reference centroid to the closest moved one.
    return float(np.sqrt(divergence(reference.values, moved.values).min(axis=1)).mean())


@dataclass(frozen=True)
class ContaminationLevel:
    outliers: int
    L: int
    median_displacement: float
    median_ari: float
    median_k: float
    median_ari_dp_means: float | None = None


@dataclass(frozen=True)
class ContaminationReport:
    lambda_: float
    eta: float
    seeds: tuple[int, ...]
    levels: tuple[ContaminationLevel, ...]

    @property
    def clean_ari(self) -> float:
        return self.levels[0].median_ari

    def ari_drop(self, level: int = -1, dp_means: bool = False) -> float:
        """ARI lost between the clean run and ``levels[level]``."""
        if dp_means:
            first, last = self.levels[0].median_ari_dp_means, self.levels[level].median_ari_dp_means
            if first is None or last is None:
                raise ContractViolationError('the sweep ran without the DP-means comparison')
            return first - last
        return self.levels[0].median_ari - self.levels[level].median_ari

    def to_dict(self) -> dict[str, Any]:
        return {
            'lambda': self.lambda_,
            'eta': self.eta,
            'seeds': list(self.seeds),
            'levels': [asdict(level) for level in self.levels],
        }

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(level) for level in self.levels])


def _contamination_run(
    generator: Generator,
    counts: Sequence[int],
    Ls: Sequence[int],
    seed: int,
    lambda_: float,
    eta: float,
    t_max: int,
    dp_lambda: float | None,
) -> list[tuple[float, float, int, float | None]]:
    rng = Rng(seed)
    clean, truth = generator(rng.derive(0))
    pool, _ = inject_outliers(clean, truth, max(counts), rng=rng.derive(1), bounds=_box(clean))
    reference: CentroidSet | None = None
    rows: list[tuple[float, float, int, float | None]] = []
    for count, L in zip(counts, Ls):
        data = pool.take(np.arange(clean.n + count))
        labels = Assignment(np.concatenate([truth.labels, np.full(count, OUTLIER_LABEL, dtype=np.int64)]))
        config = DpMomConfig(lambda_=lambda_, eta=eta, L=L, seed=rng.seed_for(2, count), t_max=t_max)
        result = fit(data, config)
        if reference is None:
            reference = result.centroids
        score = ari_on_inliers(labels, result.labels)
        baseline = None
        if dp_lambda is not None:
            baseline = ari_on_inliers(labels, dp_means(data, dp_lambda).labels)
        rows.append((_displacement(reference, result.centroids), score, result.k, baseline))
    return rows


def _box(data: DataMatrix) -> list[tuple[float, float]]:
    low, high = data.values.min(axis=0), data.values.max(axis=0)
    return [(float(lo), float(hi)) for lo, hi in zip(low, high)]


def contamination_sweep(
    outlier_counts: Sequence[int],
    seeds: Sequence[int],
    *,
    lambda_: float,
    eta: float,
    generator: Generator | None = None,
    L_rule: LRule = default_L_rule,
    t_max: int = 200,
    dp_means_lambda: float | None = None,
    n_jobs: int = 1,
) -> ContaminationReport:
    """Fit DP-MoM on increasingly contaminated copies of the same clean sample.

    Outliers are drawn uniformly over the clean data's bounding box and are nested: each level
    keeps the previous level's outliers and adds more. The first level is the clean baseline, so
    its displacement is zero.

    Args:
        outlier_counts: Cumulative outlier totals; a leading 0 is added when missing.
        seeds: One clean sample per seed; level statistics are medians over seeds.
        lambda_: Penalty for every fit.
        eta: Learning rate for every fit.
        generator: Clean-sample generator; the four-quadrant sample by default.
        L_rule: Maps (n, outliers) to the bucket count of a level.
        t_max: Iteration cap per fit.
        dp_means_lambda: Also run DP-means with this penalty for comparison.
        n_jobs: joblib workers across seeds.

    Raises:
        AssumptionViolationError: If the rule yields ``L <= 2.5 * outliers`` for some level.
    """
    if not seeds:
        raise ContractViolationError('at least one seed is required')
    counts = sorted(set(int(c) for c in outlier_counts) | {0})
    if counts[0] < 0:
        raise ContractViolationError(f'outlier counts must be non-negative, got {counts[0]}')
    generator = generator if generator is not None else quadrant_generator()
    n_clean = generator(Rng(seeds[0]))[0].n
    Ls = [L_rule(n_clean + c, c) for c in counts]
    for count, L in zip(counts, Ls):
        _check_L(L, n_clean + count, count)
    runs = Parallel(n_jobs=n_jobs)(
        delayed(_contamination_run)(generator, counts, Ls, seed, lambda_, eta, t_max, dp_means_lambda) for seed in seeds
    )
    levels = []
    for index, (count, L) in enumerate(zip(counts, Ls)):
        column = [run[index] for run in runs]
        dp_scores = [row[3] for row in column if row[3] is not None]
        levels.append(
            ContaminationLevel(
                outliers=count,
                L=L,
                median_displacement=float(np.median([row[0] for row in column])),
                median_ari=float(np.median([row[1] for row in column])),
                median_k=float(np.median([row[2] for row in column])),
                median_ari_dp_means=float(np.median(dp_scores)) if dp_scores else None,
            )
        )
        _logger.info('contamination %d (L=%d): median ARI %.4f', count, L, levels[-1].median_ari)
    return ContaminationReport(lambda_, eta, tuple(int(s) for s in seeds), tuple(levels))


@dataclass(frozen=True)
class RateLevel:
    n: int
    median_gap: float
    iqr: tuple[float, float]
    gaps: tuple[float, ...] = field(repr=False)


@dataclass(frozen=True)
class RateReport:
    levels: tuple[RateLevel, ...]
    slope: float
    oracle_objective: float

    def medians(self) -> FloatArray:
        return np.array([level.median_gap for level in self.levels], dtype=np.float64)

    def is_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.medians()) < 0))

    def to_dict(self) -> dict[str, Any]:
        return {
            'slope': self.slope,
            'oracle_objective': self.oracle_objective,
            'levels': [
                {'n': lv.n, 'median_gap': lv.median_gap, 'iqr': list(lv.iqr), 'gaps': list(lv.gaps)}
                for lv in self.levels
            ],
        }

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [{'n': lv.n, 'seed_index': i, 'gap': gap} for lv in self.levels for i, gap in enumerate(lv.gaps)]
        )


def _rate_run(
    mixture: GaussianMixture,
    n: int,
    seed: int,
    lambda_: float,
    eta: float,
    L: int,
    t_max: int,
    holdout: int,
) -> float:
    rng = Rng(seed)
    data, _ = mixture.sample(n, rng.derive(n, 0))
    test, _ = mixture.sample(holdout, rng.derive(n, 1))
    result = fit(data, DpMomConfig(lambda_=lambda_, eta=eta, L=L, seed=rng.seed_for(n, 2), t_max=t_max))
    # Both risks on the same held-out sample, so its noise largely cancels.
    gap = empirical_objective(test, result.centroids) - empirical_objective(test, mixture.true_centroids)
    return max(gap, 0.0)


def rate_trend(
    n_values: Sequence[int],
    seeds: Sequence[int],
    *,
    lambda_: float,
    eta: float,
    mixture: GaussianMixture | None = None,
    L: int = 5,
    t_max: int = 400,
    holdout: int = 20_000,
    n_jobs: int = 1,
) -> RateReport:
    """Excess risk of DP-MoM fits at growing sample sizes, against the generating means.

    The gap of one fit is its average loss on a fresh held-out sample minus the average loss of the
    true component means on that sample. The slope is the least-squares fit of log median gap on
    log n.

    Args:
        n_values: Strictly increasing sample sizes, at least three.
        seeds: One fit per seed and sample size.
        lambda_: Penalty for every fit.
        eta: Learning rate for every fit.
        mixture: Generating mixture; two unit-variance components 20 apart by default.
        L: Bucket count for every fit.
        t_max: Iteration cap per fit.
        holdout: Size of the held-out sample.
        n_jobs: joblib workers across (n, seed) pairs.
    """
    sizes = [int(n) for n in n_values]
    if len(sizes) < 3 or any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ContractViolationError(f'n values must be strictly increasing with at least 3 levels, got {sizes}')
    if not seeds:
        raise ContractViolationError('at least one seed is required')
    if L > sizes[0]:
        raise ContractViolationError(f'L={L} exceeds the smallest sample size {sizes[0]}')
    mixture = mixture if mixture is not None else GaussianMixture.two_component()
    gaps = Parallel(n_jobs=n_jobs)(
        delayed(_rate_run)(mixture, n, seed, lambda_, eta, L, t_max, holdout) for n in sizes for seed in seeds
    )
    levels = []
    for index, n in enumerate(sizes):
        own = np.asarray(gaps[index * len(seeds) : (index + 1) * len(seeds)], dtype=np.float64)
        q1, q3 = np.percentile(own, [25, 75])
        levels.append(RateLevel(n, float(np.median(own)), (float(q1), float(q3)), tuple(float(g) for g in own)))
    medians = np.array([level.median_gap for level in levels], dtype=np.float64)
    fit_line = stats.linregress(np.log(sizes), np.log(np.maximum(medians, np.finfo(np.float64).tiny)))
    oracle = float(mixture.means.shape[1] * mixture.sigma**2)
    _logger.info('rate trend over n=%s: slope %.3f', sizes, fit_line.slope)
    return RateReport(tuple(levels), float(fit_line.slope), oracle)


def write_report_csv(path: str | Path, report: ContaminationReport | RateReport) -> None:
    """Write the per-level (contamination) or per-fit (rate) trace as CSV."""
    report.to_frame().to_csv(path, index=False, lineterminator='\n', float_format='%.10g')
