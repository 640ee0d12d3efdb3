import hashlib
import math
from pathlib import Path

import numpy as np
import pytest

from dpmom.core import Assignment, DataMatrix, Rng
from dpmom.data import (
    OUTLIER_LABEL,
    DatasetSpec,
    GaussianMixture,
    fetch_dataset,
    gen_quadrant,
    gen_two_gaussians,
    inject_outliers,
    load_csv,
    load_dataset,
    load_manifest,
    save_csv,
)
from dpmom.errors import ContractViolationError, DataError, DataParseError, DatasetUnavailableError, EmptyDataError

SPECIES = ('Iris-setosa', 'Iris-versicolor', 'Iris-virginica')


def _write(path: Path, text: str) -> Path:
    path.write_text(text, encoding='utf-8')
    return path


def _iris_like(path: Path) -> Path:
    generator = Rng(21).generator()
    lines = []
    for index in range(150):
        features = ','.join(f'{v:.1f}' for v in generator.uniform(0.1, 7.9, size=4))
        lines.append(f'{features},{SPECIES[index // 50]}')
    return _write(path, '\n'.join(lines) + '\n\n')


def test_load_csv_plain_matrix(tmp_path: Path) -> None:
    data, labels = load_csv(_write(tmp_path / 'm.csv', '1,2\n3,4\n5,6\n'))
    assert (data.n, data.p) == (3, 2)
    assert labels is None
    assert data.values[2].tolist() == [5.0, 6.0]


def test_load_csv_iris_like_file(tmp_path: Path) -> None:
    data, labels = load_csv(_iris_like(tmp_path / 'iris.data'), label_column=4)
    assert (data.n, data.p) == (150, 4)
    assert labels is not None
    assert labels.n_clusters == 3
    assert labels.sizes(3).tolist() == [50, 50, 50]


def test_load_csv_negative_label_column(tmp_path: Path) -> None:
    _, labels = load_csv(_iris_like(tmp_path / 'iris.data'), label_column=-1)
    assert labels is not None
    assert labels.labels[:3].tolist() == [0, 0, 0]
    assert labels.labels[-1] == 2


def test_load_csv_header_and_outlier_column(tmp_path: Path) -> None:
    path = _write(tmp_path / 'h.csv', 'x1,x2,label,outlier\n0,0,a,0\n1,1,b,0\n9,9,a,1\n')
    data, labels = load_csv(path, has_header=True, label_column=2, outlier_column=3)
    assert data.p == 2
    assert labels is not None
    assert labels.to_list() == [0, 1, OUTLIER_LABEL]


def test_load_csv_whitespace_and_dropped_columns(tmp_path: Path) -> None:
    path = _write(tmp_path / 'ecoli.data', 'AAT_ECOLI  0.49  0.29  cp\nACEA_ECOLI   0.07 0.40 im\n')
    data, labels = load_csv(path, label_column=-1, drop_columns=(0,), delimiter='whitespace')
    assert data.values.tolist() == [[0.49, 0.29], [0.07, 0.40]]
    assert labels is not None
    assert labels.to_list() == [0, 1]


def test_save_csv_round_trip(tmp_path: Path, quadrant: tuple[DataMatrix, Assignment]) -> None:
    data, truth = inject_outliers(*quadrant, 5, rng=Rng(1))
    path = tmp_path / 'q.csv'
    save_csv(path, data, truth)
    assert path.read_text(encoding='utf-8').splitlines()[0] == 'x1,x2,label,outlier'
    loaded, labels = load_csv(path, has_header=True, label_column=2, outlier_column=3)
    np.testing.assert_allclose(loaded.values, data.values, rtol=1e-15)
    assert labels is not None
    assert int(np.sum(labels.labels == OUTLIER_LABEL)) == 5


@pytest.mark.parametrize(
    ('text', 'has_header', 'error', 'message'),
    [
        ('', False, EmptyDataError, 'empty'),
        ('x1,x2,label\n', True, EmptyDataError, 'no data rows'),
        ('1,2\n3\n5,6\n', False, DataParseError, r'ragged rows .* line\(s\) 2'),
        ('1,2\n3,4,5\n', False, DataParseError, 'ragged rows'),
        ('1,2\n3,abc\n5,6\n7,?\n', False, DataParseError, r'non-numeric feature cells at line\(s\) 2, 4'),
        ('a,b\n1,2\nx,2\n', True, DataParseError, r'line\(s\) 3'),
    ],
)
def test_load_csv_rejects_bad_files(
    tmp_path: Path, text: str, has_header: bool, error: type[Exception], message: str
) -> None:
    with pytest.raises(error, match=message):
        load_csv(_write(tmp_path / 'bad.csv', text), has_header=has_header)


def test_load_csv_missing_file(tmp_path: Path) -> None:
    missing = tmp_path / 'nowhere.csv'
    with pytest.raises(DataError, match='input file not found') as excinfo:
        load_csv(missing)
    assert str(missing) in str(excinfo.value)


def test_load_csv_label_column_out_of_range(tmp_path: Path) -> None:
    with pytest.raises(ContractViolationError, match='label column 5'):
        load_csv(_write(tmp_path / 'm.csv', '1,2\n3,4\n'), label_column=5)


def test_gen_quadrant_geometry(quadrant: tuple[DataMatrix, Assignment]) -> None:
    data, labels = quadrant
    assert data.n == 120
    assert labels.sizes(4).tolist() == [30, 30, 30, 30]
    x, y = data.values[:, 0], data.values[:, 1]
    assert (np.hypot(x, y) <= 1.0).all()
    assert (np.abs(data.values) <= 1.0).all()
    signs = {0: (1, 1), 1: (-1, 1), 2: (-1, -1), 3: (1, -1)}
    for quadrant_index, (sx, sy) in signs.items():
        mask = labels.labels == quadrant_index
        assert (sx * x[mask] > 0).all()
        assert (sy * y[mask] > 0).all()
    angles = np.mod(np.arctan2(y, x), 2 * math.pi) - labels.labels * math.pi / 2
    assert (angles >= math.pi / 36 - 1e-12).all()
    assert (angles <= math.pi / 2 - math.pi / 36 + 1e-12).all()


def test_gen_quadrant_is_seeded() -> None:
    first, _ = gen_quadrant(10, rng=Rng(5))
    second, _ = gen_quadrant(10, rng=Rng(5))
    assert np.array_equal(first.values, second.values)
    with pytest.raises(ContractViolationError, match='at least 1'):
        gen_quadrant(0, rng=Rng(5))


def test_inject_outliers_staged_totals(quadrant: tuple[DataMatrix, Assignment]) -> None:
    data, labels = quadrant
    totals = []
    for stage, count in enumerate((15, 15, 20)):
        data, labels = inject_outliers(data, labels, count, rng=Rng(7).derive(stage), bounds=[(-1, 1), (-1, 1)])
        totals.append(data.n)
    assert totals == [135, 150, 170]
    assert int(np.sum(labels.labels == OUTLIER_LABEL)) == 50
    extra = data.values[120:]
    assert (np.abs(extra) <= 1.0).all()


def test_inject_outliers_keeps_original_rows(quadrant: tuple[DataMatrix, Assignment]) -> None:
    data, labels = quadrant
    before = data.values.copy()
    dirty, truth = inject_outliers(data, labels, 10, rng=Rng(3))
    assert np.array_equal(dirty.values[: data.n], before)
    assert np.array_equal(truth.labels[: data.n], labels.labels)
    low, high = before.min(axis=0), before.max(axis=0)
    assert ((dirty.values[data.n :] >= low) & (dirty.values[data.n :] <= high)).all()


def test_inject_outliers_edge_cases(quadrant: tuple[DataMatrix, Assignment]) -> None:
    data, labels = quadrant
    same, same_labels = inject_outliers(data, labels, 0, rng=Rng(3))
    assert np.array_equal(same.values, data.values)
    assert same_labels.to_list() == labels.to_list()
    with pytest.raises(ContractViolationError, match='non-negative'):
        inject_outliers(data, labels, -1, rng=Rng(3))
    with pytest.raises(ContractViolationError, match='bounds'):
        inject_outliers(data, labels, 3, rng=Rng(3), bounds=[(-1, 1)])


def test_two_gaussians() -> None:
    data, labels, centroids = gen_two_gaussians(400, rng=Rng(9), separation=20.0, p=3)
    assert (data.n, data.p) == (400, 3)
    assert centroids.to_list() == [[-10.0, 0.0, 0.0], [10.0, 0.0, 0.0]]
    assert np.all((data.values[:, 0] > 0) == (labels.labels == 1))
    mixture = GaussianMixture.two_component(separation=4.0)
    assert mixture.to_dict() == {'means': [[-2.0, 0.0], [2.0, 0.0]], 'sigma': 1.0}
    with pytest.raises(ContractViolationError, match='sigma'):
        GaussianMixture(np.zeros((2, 2)), sigma=0.0)


def test_packaged_manifest() -> None:
    manifest = load_manifest()
    iris = manifest['iris']
    assert (iris.n, iris.p, iris.k) == (150, 4, 3)
    assert iris.label_column == -1
    assert iris.lambda_range is not None
    assert manifest['ecoli'].delimiter == 'whitespace'
    assert {spec.suite for spec in manifest.values()} == {'uci', 'jain', 'compcancer'}
    assert sum(spec.suite == 'uci' for spec in manifest.values()) == 8


def test_manifest_entry_validation(tmp_path: Path) -> None:
    path = _write(tmp_path / 'm.toml', '[datasets.toy]\nsuite = "uci"\nfile = "toy.csv"\nn = 3\n')
    with pytest.raises(DataParseError, match="'toy' is invalid"):
        load_manifest(path)


def _toy_spec(**overrides: object) -> DatasetSpec:
    values: dict[str, object] = {'suite': 'uci', 'file': 'toy.csv', 'n': 3, 'p': 2, 'k': 2, 'label_column': 2}
    values.update(overrides)
    return DatasetSpec.from_mapping('toy', values)


def test_load_dataset_from_root(tmp_path: Path) -> None:
    path = _write(tmp_path / 'toy.csv', '0,0,a\n0,1,a\n9,9,b\n')
    digest = hashlib.sha256(path.read_bytes()).hexdigest()
    data, labels = load_dataset(_toy_spec(sha256=digest), tmp_path)
    assert (data.n, data.p) == (3, 2)
    assert labels.to_list() == [0, 0, 1]
    with pytest.raises(DatasetUnavailableError, match='sha256'):
        load_dataset(_toy_spec(sha256='0' * 64), tmp_path)


def test_load_dataset_missing_file(tmp_path: Path) -> None:
    with pytest.raises(DatasetUnavailableError, match="'toy' not found"):
        load_dataset(_toy_spec(), tmp_path)


def test_fetch_dataset_without_network(tmp_path: Path) -> None:
    with pytest.raises(DatasetUnavailableError, match='no download URL'):
        fetch_dataset(_toy_spec(), tmp_path)
    present = _write(tmp_path / 'toy.csv', '0,0,a\n')
    assert fetch_dataset(_toy_spec(url='https://example.invalid/toy.csv'), tmp_path) == present
