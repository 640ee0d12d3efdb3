from pathlib import Path
from typing import Any

from robot.api import logger
from robot.api.deco import library

from ..__version__ import __version__
from .._assertable import assertable
from .._our_libcore import ClusteringCore, keyword
from ..baselines import dp_means, kmeans_pp
from ..clustering import ClusteringResult, DpMomConfig, default_learning_rate, fit, merge_small_clusters
from ..core import Assignment, DataMatrix, Rng
from ..data import gen_quadrant, gen_two_gaussians, inject_outliers, load_csv
from ..metrics import ari_on_inliers, sign_test, wilcoxon_signed_rank

__all__ = ['ClusteringLibrary', 'ClusteringLibraryError', 'NoDataError', 'NoResultError']


class ClusteringLibraryError(Exception):
    """Base exception for ClusteringLibrary errors."""


class NoDataError(ClusteringLibraryError):
    """Raised when a keyword needs a dataset but none has been generated or loaded."""


class NoResultError(ClusteringLibraryError):
    """Raised when a keyword needs a clustering result but nothing has been fitted yet."""


@library(scope='SUITE', version=__version__, doc_format='ROBOT')
class ClusteringLibrary(ClusteringCore):
    """Robot Framework library for DP-MoM clustering experiments.

    The library keeps a current dataset (with its ground truth, if known) and the most recent
    clustering result. Data keywords replace the dataset and forget the result; fit keywords
    replace the result.

    Getter keywords accept the usual assertion arguments, for example:
    | Get Cluster Count | == | 4 |
    | Get Adjusted Rand Index | >= | 0.9 |
    """

    def __init__(self, seed: int = 0) -> None:
        super().__init__([])
        self.seed = seed
        self._data: DataMatrix | None = None
        self._truth: Assignment | None = None
        self._result: ClusteringResult | None = None

    @property
    def data(self) -> DataMatrix:
        if self._data is None:
            raise NoDataError('no dataset: use Generate Quadrant Data, Generate Two Gaussians or Load Dataset first')
        return self._data

    @property
    def result(self) -> ClusteringResult:
        if self._result is None:
            raise NoResultError('no clustering result: use one of the Fit keywords first')
        return self._result

    def _set_data(self, data: DataMatrix, truth: Assignment | None) -> None:
        self._data, self._truth, self._result = data, truth, None
        logger.info(f'dataset: n={data.n}, p={data.p}')

    def _rng(self, seed: int | None) -> Rng:
        return Rng(self.seed if seed is None else seed)

    @keyword
    def generate_quadrant_data(self, points_per_quadrant: int = 30, seed: int | None = None) -> int:
        """Generate four clusters, one per quadrant of the unit disc, and make them the current dataset.

        Returns the number of rows.

        Examples:
        | ${n}= | Generate Quadrant Data | 30 | seed=7 |
        """
        data, truth = gen_quadrant(points_per_quadrant, rng=self._rng(seed))
        self._set_data(data, truth)
        return data.n

    @keyword
    def generate_two_gaussians(self, n: int = 200, separation: float = 20.0, seed: int | None = None) -> int:
        """Generate two unit-variance Gaussian clusters ``separation`` apart."""
        data, truth, _ = gen_two_gaussians(n, rng=self._rng(seed), separation=separation)
        self._set_data(data, truth)
        return data.n

    @keyword
    def load_dataset(self, path: Path, has_header: bool = False, label_column: int | None = None) -> int:
        """Load a CSV file as the current dataset.

        ``label_column`` is 0-based; negative values count from the end. Returns the number of rows.
        """
        data, truth = load_csv(path, has_header=has_header, label_column=label_column)
        self._set_data(data, truth)
        return data.n

    @keyword
    def inject_outliers(
        self,
        count: int,
        low: float | None = None,
        high: float | None = None,
        seed: int | None = None,
    ) -> int:
        """Append ``count`` uniform outliers to the current dataset.

        The box is ``[low, high]`` in every dimension when both are given, the data range otherwise.
        Returns the new number of rows.

        Examples:
        | Inject Outliers | 15 | low=-1 | high=1 |
        """
        data = self.data
        truth = self._truth if self._truth is not None else Assignment([0] * data.n)
        bounds = None if low is None or high is None else [(low, high)] * data.p
        combined, labels = inject_outliers(data, truth, count, rng=self._rng(seed).derive(1), bounds=bounds)
        self._set_data(combined, labels if self._truth is not None else None)
        return combined.n

    @keyword('Fit DP-MoM')
    def fit_dp_mom(
        self,
        penalty: float,
        buckets: int,
        eta: float | None = None,
        seed: int | None = None,
        t_max: int = 200,
        delta: float = 1e-4,
        bucket_strategy: str = 'kmeanspp',
    ) -> int:
        """Fit DP-MoM with cluster penalty ``penalty`` and ``buckets`` MoM buckets.

        ``eta`` defaults to the larger learning-rate candidate derived from the data. Returns the
        number of clusters.

        Examples:
        | ${k}= | Fit DP-MoM | penalty=1.0 | buckets=5 | eta=0.5 |
        """
        data = self.data
        rate = eta if eta is not None else default_learning_rate(data)[0]
        config = DpMomConfig(
            lambda_=penalty,
            eta=rate,
            L=buckets,
            seed=self.seed if seed is None else seed,
            t_max=t_max,
            delta=delta,
            bucket_strategy=bucket_strategy,
        )
        self._result = fit(data, config)
        logger.info(f'DP-MoM: k={self._result.k} after {self._result.iterations} iterations')
        return self._result.k

    @keyword('Fit DP-Means')
    def fit_dp_means(self, penalty: float, t_max: int = 100) -> int:
        """Fit DP-means with cluster penalty ``penalty``; returns the number of clusters."""
        self._result = dp_means(self.data, penalty, t_max=t_max)
        return self._result.k

    @keyword('Fit K-Means')
    def fit_k_means(self, k: int, seed: int | None = None) -> int:
        """Fit Lloyd's k-means from k-means++ seeds; returns ``k``."""
        self._result = kmeans_pp(self.data, k, self._rng(seed))
        return self._result.k

    @keyword
    def merge_small_clusters(self, min_size: int = 3) -> int:
        """Fold clusters with fewer than ``min_size`` members into their nearest large cluster."""
        before = self.result.k
        self._result = merge_small_clusters(self.result, self.data, min_size)
        logger.info(f'merged {before} clusters into {self._result.k}')
        return self._result.k

    @keyword
    @assertable
    def get_cluster_count(self) -> Any:
        """Number of clusters of the current result."""
        return self.result.k

    @keyword
    @assertable
    def get_adjusted_rand_index(self) -> Any:
        """ARI of the current result against the ground truth, outlier rows excluded."""
        if self._truth is None:
            raise ClusteringLibraryError('the current dataset has no ground-truth labels')
        return ari_on_inliers(self._truth, self.result.labels)

    @keyword
    @assertable
    def get_sign_test_p_value(self, wins: int, trials: int) -> Any:
        """One-sided exact sign test p-value for ``wins`` out of ``trials``.

        Examples:
        | Get Sign Test P Value | 15 | 16 | < | 0.001 |
        """
        return sign_test(wins, trials).p_value

    @keyword
    @assertable
    def get_wilcoxon_p_value(self, differences: list[float]) -> Any:
        """One-sided Wilcoxon signed-rank p-value for paired differences (reference minus other)."""
        return wilcoxon_signed_rank(differences).p_value
