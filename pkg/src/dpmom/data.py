"""Dataset ingestion, synthetic generators and outlier injection.

Contaminating rows carry the label :data:`OUTLIER_LABEL` in ground-truth assignments so scores can
be computed on the original rows only.
"""

import hashlib
import logging
import math
import sys
from collections.abc import Sequence
from dataclasses import dataclass, field
from importlib.resources import files
from pathlib import Path
from typing import Any

import numpy as np
import numpy.typing as npt
import pandas as pd

from .core import Assignment, AssignmentLike, CentroidSet, DataLike, DataMatrix, FloatArray, Rng, as_assignment, as_data
from .errors import ContractViolationError, DataError, DataParseError, DatasetUnavailableError, EmptyDataError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = [
    'DEFAULT_DATA_ROOT',
    'MANIFEST_RESOURCE',
    'OUTLIER_LABEL',
    'DatasetSpec',
    'GaussianMixture',
    'fetch_dataset',
    'gen_quadrant',
    'gen_two_gaussians',
    'inject_outliers',
    'load_csv',
    'load_dataset',
    'load_manifest',
    'save_csv',
]

_logger = logging.getLogger(__name__)

OUTLIER_LABEL = -1
MANIFEST_RESOURCE = 'resources/datasets.toml'
DEFAULT_DATA_ROOT = Path('datasets')

_WHITESPACE = 'whitespace'


def _column_index(index: int, width: int, what: str) -> int:
    resolved = index + width if index < 0 else index
    if not 0 <= resolved < width:
        raise ContractViolationError(f'{what} {index} is outside the {width} columns of the file')
    return resolved


def _row_numbers(mask: npt.NDArray[np.bool_], offset: int, limit: int = 5) -> str:
    rows = [str(int(i) + offset) for i in np.flatnonzero(mask)[:limit]]
    more = int(mask.sum()) - len(rows)
    return ', '.join(rows) + (f' and {more} more' if more > 0 else '')


def load_csv(
    path: str | Path,
    has_header: bool = False,
    label_column: int | None = None,
    *,
    outlier_column: int | None = None,
    drop_columns: Sequence[int] = (),
    delimiter: str = ',',
) -> tuple[DataMatrix, Assignment | None]:
    """Read a delimited numeric file into a data matrix and optional ground truth.

    Args:
        path: File to read.
        has_header: Whether the first line names the columns.
        label_column: Index of the categorical class column; classes are numbered 0.. in order of first
            appearance.
        outlier_column: Index of a 0/1 column marking contaminating rows; flagged rows get
            :data:`OUTLIER_LABEL`.
        drop_columns: Further non-feature columns such as row identifiers.
        delimiter: Field separator, or ``'whitespace'`` for runs of blanks.

    Returns:
        The feature matrix and, if ``label_column`` is given, the ground-truth assignment.

    Raises:
        DataError: If the file does not exist.
        EmptyDataError: If the file holds no data rows.
        DataParseError: If rows are ragged or feature cells are not numeric; the message names the rows.
    """
    source = Path(path)
    if not source.is_file():
        raise DataError(f'input file not found: {source}')
    sep = r'\s+' if delimiter == _WHITESPACE else delimiter
    try:
        frame = pd.read_csv(
            source,
            sep=sep,
            header=0 if has_header else None,
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=True,
        )
    except pd.errors.EmptyDataError as e:
        raise EmptyDataError(f'{source}: file is empty') from e
    except pd.errors.ParserError as e:
        raise DataParseError(f'{source}: ragged rows: {e}') from e
    if frame.shape[0] == 0:
        raise EmptyDataError(f'{source}: no data rows')
    offset = 2 if has_header else 1
    ragged = frame.isna().any(axis=1).to_numpy()
    if ragged.any():
        raise DataParseError(f'{source}: ragged rows (missing fields) at line(s) {_row_numbers(ragged, offset)}')

    width = frame.shape[1]
    special: dict[int, str] = {}
    if label_column is not None:
        special[_column_index(label_column, width, 'label column')] = 'label'
    if outlier_column is not None:
        special[_column_index(outlier_column, width, 'outlier column')] = 'outlier'
    for column in drop_columns:
        special.setdefault(_column_index(column, width, 'dropped column'), 'drop')
    features = [c for c in range(width) if c not in special]
    if not features:
        raise DataParseError(f'{source}: no feature columns left')

    numeric = frame.iloc[:, features].apply(lambda col: pd.to_numeric(col.str.strip(), errors='coerce'))
    invalid = (~np.isfinite(numeric.to_numpy(dtype=np.float64))).any(axis=1)
    if invalid.any():
        raise DataParseError(f'{source}: non-numeric feature cells at line(s) {_row_numbers(invalid, offset)}')
    matrix = DataMatrix(numeric.to_numpy(dtype=np.float64))

    outliers = np.zeros(matrix.n, dtype=bool)
    if outlier_column is not None:
        flags = pd.to_numeric(frame.iloc[:, _special_index(special, 'outlier')].str.strip(), errors='coerce')
        if flags.isna().any():
            raise DataParseError(f'{source}: outlier column must hold 0 or 1 at line(s) '
                                 f'{_row_numbers(flags.isna().to_numpy(), offset)}')
        outliers = flags.to_numpy() != 0
    if label_column is None:
        return matrix, None
    raw = frame.iloc[:, _special_index(special, 'label')].str.strip()
    codes, _ = pd.factorize(raw[~outliers], sort=False)
    labels = np.full(matrix.n, OUTLIER_LABEL, dtype=np.int64)
    labels[~outliers] = codes
    _logger.debug('loaded %s: n=%d p=%d classes=%d', source, matrix.n, matrix.p, int(codes.max(initial=-1)) + 1)
    return matrix, Assignment(labels)


def _special_index(special: dict[int, str], role: str) -> int:
    return next(c for c, r in special.items() if r == role)


def save_csv(path: str | Path, data: DataLike, labels: AssignmentLike | None = None) -> None:
    """Write features, then ``label`` and ``outlier`` columns when labels are given."""
    matrix = as_data(data)
    frame = pd.DataFrame(matrix.values, columns=[f'x{j + 1}' for j in range(matrix.p)])
    if labels is not None:
        truth = as_assignment(labels)
        if truth.n != matrix.n:
            raise ContractViolationError(f'{truth.n} labels for {matrix.n} rows')
        frame['label'] = truth.labels
        frame['outlier'] = (truth.labels == OUTLIER_LABEL).astype(np.int64)
    frame.to_csv(path, index=False, float_format='%.17g', lineterminator='\n')


def gen_quadrant(points_per_quadrant: int = 30, *, rng: Rng) -> tuple[DataMatrix, Assignment]:
    """Four clusters, one per quadrant of the unit disc.

    Radii are uniform on (0, 1]; angles in quadrant j are uniform on
    ``((j - 1) pi/2 + pi/36, j pi/2 - pi/36)``, keeping every point off the axes.
    """
    if points_per_quadrant < 1:
        raise ContractViolationError(f'points_per_quadrant must be at least 1, got {points_per_quadrant}')
    generator = rng.generator()
    margin = math.pi / 36.0
    blocks, labels = [], []
    for quadrant in range(4):
        low = quadrant * math.pi / 2.0 + margin
        high = (quadrant + 1) * math.pi / 2.0 - margin
        radius = 1.0 - generator.random(points_per_quadrant)
        angle = generator.uniform(low, high, points_per_quadrant)
        blocks.append(np.column_stack([radius * np.cos(angle), radius * np.sin(angle)]))
        labels.append(np.full(points_per_quadrant, quadrant, dtype=np.int64))
    return DataMatrix(np.vstack(blocks)), Assignment(np.concatenate(labels))


def inject_outliers(
    data: DataLike,
    labels: AssignmentLike,
    count: int,
    *,
    rng: Rng,
    bounds: Sequence[tuple[float, float]] | None = None,
) -> tuple[DataMatrix, Assignment]:
    """Append ``count`` points drawn uniformly from a box, labelled with the outlier sentinel.

    Args:
        data: Original rows; they are never modified.
        labels: Ground truth of the original rows.
        count: Number of points to append.
        rng: Random stream.
        bounds: Per-dimension ``(low, high)``; defaults to the per-dimension range of ``data``.
    """
    matrix, truth = as_data(data), as_assignment(labels)
    if truth.n != matrix.n:
        raise ContractViolationError(f'{truth.n} labels for {matrix.n} rows')
    if count < 0:
        raise ContractViolationError(f'outlier count must be non-negative, got {count}')
    if count == 0:
        return matrix, truth
    if bounds is None:
        low, high = matrix.values.min(axis=0), matrix.values.max(axis=0)
    else:
        box = np.asarray(bounds, dtype=np.float64)
        if box.shape != (matrix.p, 2) or not np.isfinite(box).all():
            raise ContractViolationError(f'bounds must be {matrix.p} finite (low, high) pairs')
        low, high = box[:, 0], box[:, 1]
    extra = rng.generator().uniform(low, high, size=(count, matrix.p))
    combined = np.vstack([matrix.values, extra])
    combined_labels = np.concatenate([truth.labels, np.full(count, OUTLIER_LABEL, dtype=np.int64)])
    return DataMatrix(combined), Assignment(combined_labels)


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """Equal-weight isotropic Gaussian mixture with known component means."""

    means: FloatArray
    sigma: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, 'means', CentroidSet(self.means).values)
        if not self.sigma > 0:
            raise ContractViolationError(f'sigma must be positive, got {self.sigma}')

    @classmethod
    def two_component(cls, separation: float = 20.0, p: int = 2, sigma: float = 1.0) -> 'GaussianMixture':
        """Two components at ``+-separation/2`` along the first axis."""
        means = np.zeros((2, p), dtype=np.float64)
        means[0, 0], means[1, 0] = -separation / 2.0, separation / 2.0
        return cls(means, sigma)

    @property
    def true_centroids(self) -> CentroidSet:
        return CentroidSet(self.means)

    def sample(self, n: int, rng: Rng) -> tuple[DataMatrix, Assignment]:
        if n < 1:
            raise ContractViolationError(f'sample size must be at least 1, got {n}')
        generator = rng.generator()
        labels = generator.integers(self.means.shape[0], size=n).astype(np.int64)
        noise = generator.normal(0.0, self.sigma, size=(n, self.means.shape[1]))
        return DataMatrix(self.means[labels] + noise), Assignment(labels)

    def to_dict(self) -> dict[str, Any]:
        return {'means': [[float(v) for v in row] for row in self.means], 'sigma': self.sigma}


def gen_two_gaussians(
    n: int,
    *,
    rng: Rng,
    separation: float = 20.0,
    p: int = 2,
    sigma: float = 1.0,
) -> tuple[DataMatrix, Assignment, CentroidSet]:
    """Sample the two-component mixture; also returns its true means."""
    mixture = GaussianMixture.two_component(separation, p, sigma)
    data, labels = mixture.sample(n, rng)
    return data, labels, mixture.true_centroids


@dataclass(frozen=True)
class DatasetSpec:
    """One manifest entry describing where a benchmark dataset lives and how to parse it."""

    name: str
    title: str
    suite: str
    file: str
    n: int
    p: int
    k: int
    delimiter: str = ','
    has_header: bool = False
    label_column: int = -1
    drop_columns: tuple[int, ...] = ()
    url: str | None = None
    sha256: str | None = None
    lambda_range: tuple[float, float] | None = None
    estimated_clusters: int | None = None
    extra: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_mapping(cls, name: str, values: dict[str, Any]) -> 'DatasetSpec':
        known = {f for f in cls.__dataclass_fields__ if f not in ('name', 'extra')}
        try:
            spec = cls(
                name=name,
                title=str(values.get('title', name)),
                suite=str(values['suite']),
                file=str(values['file']),
                n=int(values['n']),
                p=int(values['p']),
                k=int(values['k']),
                delimiter=str(values.get('delimiter', ',')),
                has_header=bool(values.get('has_header', False)),
                label_column=int(values.get('label_column', -1)),
                drop_columns=tuple(int(c) for c in values.get('drop_columns', ())),
                url=values.get('url'),
                sha256=values.get('sha256'),
                lambda_range=_pair(values['lambda_range']) if 'lambda_range' in values else None,
                estimated_clusters=values.get('estimated_clusters'),
                extra={k: v for k, v in values.items() if k not in known},
            )
        except (KeyError, TypeError, ValueError) as e:
            raise DataParseError(f'manifest entry {name!r} is invalid: {e}') from e
        return spec

    def path(self, root: str | Path = DEFAULT_DATA_ROOT) -> Path:
        return Path(root) / self.file


def load_manifest(path: str | Path | None = None) -> dict[str, DatasetSpec]:
    """Read the dataset manifest; the packaged one unless ``path`` is given."""
    try:
        if path is None:
            with files('dpmom').joinpath(MANIFEST_RESOURCE).open('rb') as handle:
                document = tomllib.load(handle)
        else:
            with open(path, 'rb') as handle:
                document = tomllib.load(handle)
    except tomllib.TOMLDecodeError as e:
        raise DataParseError(f'cannot parse dataset manifest: {e}') from e
    entries = document.get('datasets', {})
    return {name: DatasetSpec.from_mapping(name, values) for name, values in entries.items()}


def _pair(values: Sequence[Any]) -> tuple[float, float]:
    low, high = values
    return float(low), float(high)


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open('rb') as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b''):
            digest.update(chunk)
    return digest.hexdigest()


def load_dataset(spec: DatasetSpec, root: str | Path = DEFAULT_DATA_ROOT) -> tuple[DataMatrix, Assignment]:
    """Load a manifest dataset from ``root``, verifying its checksum when one is pinned.

    Raises:
        DatasetUnavailableError: If the file is missing or its checksum differs.
    """
    source = spec.path(root)
    if not source.is_file():
        raise DatasetUnavailableError(f'dataset {spec.name!r} not found at {source}')
    if spec.sha256 is not None and _sha256(source) != spec.sha256.lower():
        raise DatasetUnavailableError(f'dataset {spec.name!r} at {source} does not match its pinned sha256')
    data, labels = load_csv(
        source,
        has_header=spec.has_header,
        label_column=spec.label_column,
        drop_columns=spec.drop_columns,
        delimiter=spec.delimiter,
    )
    if labels is None:
        raise DataParseError(f'dataset {spec.name!r} has no label column')
    if (data.n, data.p) != (spec.n, spec.p):
        _logger.warning(
            'dataset %s has shape %dx%d, manifest expects %dx%d', spec.name, data.n, data.p, spec.n, spec.p
        )
    return data, labels


def fetch_dataset(spec: DatasetSpec, root: str | Path = DEFAULT_DATA_ROOT, timeout: float = 60.0) -> Path:
    """Download a manifest dataset into ``root`` unless it is already present.

    Raises:
        DatasetUnavailableError: If the entry has no URL, the download fails or the checksum differs.
    """
    import requests

    target = spec.path(root)
    if target.is_file():
        return target
    if spec.url is None:
        raise DatasetUnavailableError(f'dataset {spec.name!r} has no download URL; place it at {target}')
    try:
        response = requests.get(spec.url, timeout=timeout)
        response.raise_for_status()
    except requests.RequestException as e:
        raise DatasetUnavailableError(f'cannot download {spec.name!r} from {spec.url}: {e}') from e
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_bytes(response.content)
    if spec.sha256 is not None and _sha256(target) != spec.sha256.lower():
        target.unlink()
        raise DatasetUnavailableError(f'downloaded {spec.name!r} does not match its pinned sha256')
    _logger.info('fetched %s into %s', spec.name, target)
    return target
