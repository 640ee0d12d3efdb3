"""DP-MoM: Dirichlet-process penalised clustering fitted on the median bucket of the loss.

The subpackage :mod:`dpmom.ClusteringLibrary` exposes the same operations as Robot Framework keywords.
"""

from .__version__ import __version__
from .baselines import dp_means, kmeans_pp, kmeans_pp_seed, lloyd
from .clustering import (
    ClusteringResult,
    DpMomConfig,
    DpMomConfigLike,
    OptimizerState,
    adagrad_step,
    assign_and_spawn,
    default_learning_rate,
    fit,
    gradient,
    merge_small_clusters,
)
from .core import (
    Assignment,
    CentroidSet,
    DataMatrix,
    Rng,
    assign,
    divergence,
    empirical_objective,
    point_loss,
    sq_euclidean,
)
from .data import OUTLIER_LABEL, gen_quadrant, gen_two_gaussians, inject_outliers, load_csv
from .errors import (
    AssumptionViolationError,
    ContractViolationError,
    DataError,
    DataParseError,
    DatasetUnavailableError,
    DegenerateDataError,
    DpMomError,
    EmptyDataError,
    MergeImpossibleError,
    NoEvidenceError,
    NumericFaultError,
    SpawnOverflowError,
)
from .metrics import AriTable, ari, friedman_test, paired_tests, sign_test, wilcoxon_signed_rank
from .mom import BucketPartition, mom_estimate, mom_objective
from .partition import build_buckets, kmeanspp_buckets, random_buckets
from .tuning import ProtocolConfig, TuningResult, default_proxy_penalty, search, unsupervised_proxy_search

__all__ = [
    'OUTLIER_LABEL',
    'AriTable',
    'Assignment',
    'AssumptionViolationError',
    'BucketPartition',
    'CentroidSet',
    'ClusteringResult',
    'ContractViolationError',
    'DataError',
    'DataMatrix',
    'DataParseError',
    'DatasetUnavailableError',
    'DegenerateDataError',
    'DpMomConfig',
    'DpMomConfigLike',
    'DpMomError',
    'EmptyDataError',
    'MergeImpossibleError',
    'NoEvidenceError',
    'NumericFaultError',
    'OptimizerState',
    'ProtocolConfig',
    'Rng',
    'SpawnOverflowError',
    'TuningResult',
    '__version__',
    'adagrad_step',
    'ari',
    'assign',
    'assign_and_spawn',
    'build_buckets',
    'default_learning_rate',
    'default_proxy_penalty',
    'divergence',
    'dp_means',
    'empirical_objective',
    'fit',
    'friedman_test',
    'gen_quadrant',
    'gen_two_gaussians',
    'gradient',
    'inject_outliers',
    'kmeans_pp',
    'kmeans_pp_seed',
    'kmeanspp_buckets',
    'lloyd',
    'load_csv',
    'merge_small_clusters',
    'mom_estimate',
    'mom_objective',
    'paired_tests',
    'point_loss',
    'random_buckets',
    'search',
    'sign_test',
    'sq_euclidean',
    'unsupervised_proxy_search',
    'wilcoxon_signed_rank',
]
