"""Partition agreement and the rank tests used to compare algorithms across datasets.

Sign and signed-rank tests are one-sided: the alternative is that the reference algorithm scores
higher. Small signed-rank samples use the exact null distribution, so tail probabilities come
out as exact fractions of ``2 ** n``.
"""

from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from importlib.resources import files
from pathlib import Path
from typing import NamedTuple

import numpy as np
import numpy.typing as npt
import pandas as pd
from scipy import stats
from scipy.sparse import coo_matrix

from .core import AssignmentLike, FloatArray, IntArray, as_assignment
from .errors import ContractViolationError, DataParseError, NoEvidenceError

__all__ = [
    'EXACT_WSR_LIMIT',
    'PUBLISHED_ARI_RESOURCE',
    'AriTable',
    'FriedmanStage',
    'PairedComparison',
    'StatOutcome',
    'ari',
    'ari_from_pair_counts',
    'ari_on_inliers',
    'contingency_table',
    'friedman_stages',
    'friedman_test',
    'load_ari_table',
    'pair_counts',
    'paired_tests',
    'published_ari_table',
    'save_ari_table',
    'sign_test',
    'wilcoxon_signed_rank',
]

EXACT_WSR_LIMIT = 20
PUBLISHED_ARI_RESOURCE = 'resources/published_ari.csv'


class StatOutcome(NamedTuple):
    statistic: float
    p_value: float


def _labels(a: AssignmentLike) -> IntArray:
    return as_assignment(a).labels


def contingency_table(a: AssignmentLike, b: AssignmentLike) -> IntArray:
    """Counts of rows per (label in ``a``, label in ``b``) pair."""
    la, lb = _labels(a), _labels(b)
    if la.shape != lb.shape:
        raise ContractViolationError(f'labelings differ in length: {la.size} != {lb.size}')
    classes_a, index_a = np.unique(la, return_inverse=True)
    classes_b, index_b = np.unique(lb, return_inverse=True)
    table = coo_matrix(
        (np.ones(la.size, dtype=np.int64), (index_a.ravel(), index_b.ravel())),
        shape=(classes_a.size, classes_b.size),
    )
    return np.asarray(table.toarray(), dtype=np.int64)


def _pairs(counts: npt.NDArray[np.int64]) -> int:
    return int((counts * (counts - 1) // 2).sum())


def _same_partition(table: IntArray) -> bool:
    nonzero = int(np.count_nonzero(table))
    return nonzero == table.shape[0] == table.shape[1]


def ari(a: AssignmentLike, b: AssignmentLike) -> float:
    """Adjusted Rand Index of two labelings of the same rows.

    When the chance-corrected denominator vanishes the result is 1 for identical partitions and 0
    otherwise.
    """
    table = contingency_table(a, b)
    n = int(table.sum())
    if n < 2:
        raise ContractViolationError(f'ARI needs at least two rows, got {n}')
    together = _pairs(table)
    rows = _pairs(table.sum(axis=1))
    cols = _pairs(table.sum(axis=0))
    total = n * (n - 1) // 2
    expected = rows * cols / total
    maximum = (rows + cols) / 2.0
    if maximum == expected:
        return 1.0 if _same_partition(table) else 0.0
    return float((together - expected) / (maximum - expected))


def pair_counts(a: AssignmentLike, b: AssignmentLike) -> tuple[int, int, int, int]:
    """Brute-force pair tally ``(both same, same in a only, same in b only, both different)``."""
    la, lb = _labels(a), _labels(b)
    if la.shape != lb.shape:
        raise ContractViolationError(f'labelings differ in length: {la.size} != {lb.size}')
    n11 = n10 = n01 = n00 = 0
    for i in range(la.size):
        for j in range(i + 1, la.size):
            same_a, same_b = la[i] == la[j], lb[i] == lb[j]
            if same_a and same_b:
                n11 += 1
            elif same_a:
                n10 += 1
            elif same_b:
                n01 += 1
            else:
                n00 += 1
    return n11, n10, n01, n00


def ari_from_pair_counts(n11: int, n10: int, n01: int, n00: int) -> float:
    """ARI written in terms of pair counts, for cross-checking :func:`ari`."""
    denominator = (n00 + n01) * (n01 + n11) + (n00 + n10) * (n10 + n11)
    if denominator == 0:
        return 1.0 if n10 == 0 and n01 == 0 else 0.0
    return float(2.0 * (n00 * n11 - n01 * n10) / denominator)


def ari_on_inliers(truth: AssignmentLike, predicted: AssignmentLike) -> float:
    """ARI over the rows whose ground truth is not the outlier sentinel."""
    lt, lp = _labels(truth), _labels(predicted)
    if lt.shape != lp.shape:
        raise ContractViolationError(f'labelings differ in length: {lt.size} != {lp.size}')
    mask = lt >= 0
    return ari(lt[mask], lp[mask])


@dataclass(frozen=True, eq=False)
class AriTable:
    """ARI matrix with one row per algorithm and one column per dataset."""

    algorithms: tuple[str, ...]
    datasets: tuple[str, ...]
    values: FloatArray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64, copy=True)
        algorithms, datasets = tuple(str(a) for a in self.algorithms), tuple(str(d) for d in self.datasets)
        if values.shape != (len(algorithms), len(datasets)):
            raise ContractViolationError(
                f'ARI matrix shape {values.shape} does not match '
                f'{len(algorithms)} algorithms x {len(datasets)} datasets'
            )
        if not np.isfinite(values).all():
            raise ContractViolationError('ARI table has missing or non-finite cells')
        if values.size and (values.min() < -1.0 or values.max() > 1.0):
            raise ContractViolationError('ARI values must lie in [-1, 1]')
        if len(set(algorithms)) != len(algorithms) or len(set(datasets)) != len(datasets):
            raise ContractViolationError('algorithm and dataset names must be unique')
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)
        object.__setattr__(self, 'algorithms', algorithms)
        object.__setattr__(self, 'datasets', datasets)

    def row(self, algorithm: str) -> FloatArray:
        try:
            return self.values[self.algorithms.index(algorithm)]
        except ValueError:
            msg = f'unknown algorithm {algorithm!r}; table has {list(self.algorithms)}'
            raise ContractViolationError(msg) from None

    def without(self, *algorithms: str) -> 'AriTable':
        for name in algorithms:
            self.row(name)
        keep = [i for i, name in enumerate(self.algorithms) if name not in algorithms]
        return AriTable(tuple(self.algorithms[i] for i in keep), self.datasets, self.values[keep])

    def merged(self, other: 'AriTable') -> 'AriTable':
        """Rows of both tables over the datasets they share; rows of ``other`` win on name clashes."""
        shared = [d for d in self.datasets if d in other.datasets]
        if not shared:
            raise ContractViolationError('tables share no dataset')
        frame = self.to_frame()[shared]
        extra = other.to_frame()[shared]
        frame = pd.concat([frame.drop(index=[a for a in extra.index if a in frame.index]), extra])
        return AriTable.from_frame(frame)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.values, index=list(self.algorithms), columns=list(self.datasets))
        frame.index.name = 'algorithm'
        return frame

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> 'AriTable':
        try:
            values = frame.to_numpy(dtype=np.float64)
        except (TypeError, ValueError) as e:
            raise DataParseError(f'ARI table has non-numeric cells: {e}') from e
        return cls(tuple(str(i) for i in frame.index), tuple(str(c) for c in frame.columns), values)


def load_ari_table(path: str | Path) -> AriTable:
    """Read an ARI table: header row of dataset names, first column of algorithm names."""
    try:
        frame = pd.read_csv(path, index_col=0, comment='#')
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataParseError(f'{path}: cannot parse ARI table: {e}') from e
    return AriTable.from_frame(frame)


def save_ari_table(table: AriTable, path: str | Path, note: str | None = None) -> None:
    with open(path, 'w', encoding='utf-8', newline='') as handle:
        if note:
            handle.write(f'# {note}\n')
        table.to_frame().to_csv(handle, float_format='%.6g', lineterminator='\n')


def published_ari_table() -> AriTable:
    """The published benchmark ARI values (10 algorithms x 16 datasets), shipped as package data."""
    resource = files('dpmom').joinpath(PUBLISHED_ARI_RESOURCE)
    with resource.open('r', encoding='utf-8') as handle:
        frame = pd.read_csv(handle, index_col=0, comment='#')
    return AriTable.from_frame(frame)


def _average_ranks(table: AriTable) -> FloatArray:
    # Rank 1 is the best (largest) ARI within each dataset; ties share the average rank.
    return np.asarray(stats.rankdata(-table.values, axis=0), dtype=np.float64)


def friedman_test(table: AriTable) -> StatOutcome:
    """Friedman rank test in its classic chi-square form, ``algorithms - 1`` degrees of freedom."""
    k, n = table.values.shape
    if k < 2 or n < 2:
        raise ContractViolationError(f'the Friedman test needs at least 2 algorithms and 2 datasets, got {k} x {n}')
    rank_sums = _average_ranks(table).sum(axis=1)
    statistic = 12.0 / (n * k * (k + 1)) * float(np.sum(rank_sums**2)) - 3.0 * n * (k + 1)
    statistic = max(statistic, 0.0)
    return StatOutcome(statistic, float(stats.chi2.sf(statistic, k - 1)))


def sign_test(wins: int, trials: int) -> StatOutcome:
    """Exact one-sided sign test: ``P(Bin(trials, 1/2) >= wins)``."""
    if trials < 1 or not 0 <= wins <= trials:
        raise ContractViolationError(f'need 0 <= wins <= trials and trials >= 1, got wins={wins}, trials={trials}')
    outcome = stats.binomtest(wins, trials, 0.5, alternative='greater')
    return StatOutcome(float(wins), float(outcome.pvalue))


def _exact_upper_tail(doubled_ranks: IntArray, doubled_statistic: int) -> float:
    # Count sign patterns by their positive rank sum; ranks are doubled so tied half-ranks stay integral.
    counts = np.zeros(int(doubled_ranks.sum()) + 1, dtype=np.int64)
    counts[0] = 1
    for rank in doubled_ranks:
        shifted = np.zeros_like(counts)
        shifted[rank:] = counts[: counts.size - rank]
        counts = counts + shifted
    return float(counts[doubled_statistic:].sum() / 2.0**doubled_ranks.size)


def wilcoxon_signed_rank(differences: npt.ArrayLike) -> StatOutcome:
    """One-sided Wilcoxon signed-rank test of positive location shift.

    Zero differences are dropped before ranking. ``W`` is the sum of the ranks of positive
    differences. For at most 20 non-zero differences the p-value is the exact upper tail of the
    signed-rank distribution, otherwise a tie-corrected normal approximation.

    Raises:
        NoEvidenceError: If every difference is zero.
    """
    d = np.asarray(differences, dtype=np.float64).ravel()
    if d.size < 1:
        raise ContractViolationError('differences must be non-empty')
    if not np.isfinite(d).all():
        raise ContractViolationError('differences contain NaN or infinite values')
    d = d[d != 0.0]
    if d.size == 0:
        raise NoEvidenceError('every paired difference is zero; the signed-rank test has nothing to rank')
    ranks = stats.rankdata(np.abs(d))
    statistic = float(ranks[d > 0].sum())
    n = d.size
    if n <= EXACT_WSR_LIMIT:
        doubled = np.rint(2.0 * ranks).astype(np.int64)
        return StatOutcome(statistic, _exact_upper_tail(doubled, int(round(2.0 * statistic))))
    _, tie_sizes = np.unique(ranks, return_counts=True)
    mean = n * (n + 1) / 4.0
    variance = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(tie_sizes**3 - tie_sizes)) / 48.0
    z = (statistic - mean) / np.sqrt(variance)
    return StatOutcome(statistic, float(stats.norm.sf(z)))


@dataclass(frozen=True)
class FriedmanStage:
    algorithms: tuple[str, ...]
    average_ranks: tuple[float, ...]
    statistic: float
    p_value: float
    dropped: tuple[str, ...] = ()


def friedman_stages(table: AriTable, drop_sequence: Sequence[str] = ('DP-MoM', 'MoMPKM')) -> list[FriedmanStage]:
    """Friedman test on the full table, then again after dropping each named algorithm in turn."""
    stages: list[FriedmanStage] = []
    dropped: list[str] = []
    for name in [None, *drop_sequence]:
        if name is not None:
            dropped.append(name)
        current = table.without(*dropped)
        outcome = friedman_test(current)
        ranks = _average_ranks(current).mean(axis=1)
        stages.append(
            FriedmanStage(
                algorithms=current.algorithms,
                average_ranks=tuple(float(r) for r in ranks),
                statistic=outcome.statistic,
                p_value=outcome.p_value,
                dropped=tuple(dropped),
            )
        )
    return stages


@dataclass(frozen=True)
class PairedComparison:
    algorithm: str
    wins: int
    trials: int
    sign_p: float
    wsr_statistic: float
    wsr_p: float


def paired_tests(
    table: AriTable,
    reference: str = 'DP-MoM',
    others: Iterable[str] | None = None,
) -> list[PairedComparison]:
    """Sign and signed-rank tests of ``reference`` against every other algorithm.

    A dataset counts as a win only when the reference scores strictly higher; ties count against it.
    """
    ref = table.row(reference)
    names = [a for a in table.algorithms if a != reference] if others is None else list(others)
    report: list[PairedComparison] = []
    for name in names:
        other = table.row(name)
        wins = int(np.sum(ref > other))
        sign = sign_test(wins, table.values.shape[1])
        try:
            wsr = wilcoxon_signed_rank(np.round(ref - other, 10))
        except NoEvidenceError:
            wsr = StatOutcome(float('nan'), float('nan'))
        report.append(PairedComparison(name, wins, table.values.shape[1], sign.p_value, wsr.statistic, wsr.p_value))
    return report
