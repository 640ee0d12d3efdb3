from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from dpmom.core import Assignment, DataMatrix
from dpmom.errors import ContractViolationError
from dpmom.plotting import plot_lines, plot_scatter

STAGES = pd.DataFrame(
    {
        'algorithm': ['DP-MoM', 'DP-MoM', 'DPM', 'DPM'],
        'stage': [150, 120, 120, 150],
        'ari': [0.95, 0.97, 0.9, 0.6],
    }
)


def test_scatter_writes_svg(tmp_path: Path, blobs: tuple[DataMatrix, Assignment]) -> None:
    data, truth = blobs
    path = tmp_path / 'scatter.svg'
    figure = plot_scatter(data, truth, path, centroids=[(-10, 0), (10, 0)], title='blobs')
    assert path.read_text(encoding='utf-8').lstrip().startswith('<?xml')
    labels = [text.get_text() for text in figure.axes[0].get_legend().get_texts()]
    assert labels == ['cluster 0', 'cluster 1', 'centroid']


def test_scatter_marks_outliers(tmp_path: Path, blobs: tuple[DataMatrix, Assignment]) -> None:
    data, truth = blobs
    mask = np.zeros(data.n, dtype=bool)
    mask[:3] = True
    figure = plot_scatter(data, truth, tmp_path / 'o.svg', outliers=mask)
    labels = [text.get_text() for text in figure.axes[0].get_legend().get_texts()]
    assert labels[-1] == 'outlier'


def test_scatter_is_byte_identical(tmp_path: Path, blobs: tuple[DataMatrix, Assignment]) -> None:
    data, truth = blobs
    plot_scatter(data, truth, tmp_path / 'a.svg')
    plot_scatter(data, truth, tmp_path / 'b.svg')
    assert (tmp_path / 'a.svg').read_bytes() == (tmp_path / 'b.svg').read_bytes()


def test_scatter_needs_two_columns(tmp_path: Path) -> None:
    points = np.arange(12.0).reshape(4, 3)
    with pytest.raises(ContractViolationError, match='--dims 1 --dims 2'):
        plot_scatter(points, [0, 0, 1, 1], tmp_path / 'x.svg')
    with pytest.raises(ContractViolationError, match='two of the 3 columns'):
        plot_scatter(points, [0, 0, 1, 1], tmp_path / 'x.svg', dims=(0, 3))
    plot_scatter(points, [0, 0, 1, 1], tmp_path / 'x.svg', dims=(0, 2))
    assert (tmp_path / 'x.svg').is_file()


def test_scatter_checks_sizes(tmp_path: Path, blobs: tuple[DataMatrix, Assignment]) -> None:
    data, truth = blobs
    with pytest.raises(ContractViolationError, match='labels for'):
        plot_scatter(data, truth.labels[:-1], tmp_path / 'x.svg')
    with pytest.raises(ContractViolationError, match='outlier mask'):
        plot_scatter(data, truth, tmp_path / 'x.svg', outliers=[True, False])


def test_lines_one_per_series(tmp_path: Path) -> None:
    path = tmp_path / 'lines.svg'
    figure = plot_lines(STAGES, path, x='stage', y='ari', series='algorithm')
    lines = figure.axes[0].get_lines()
    assert [line.get_label() for line in lines] == ['DP-MoM', 'DPM']
    assert lines[0].get_xdata().tolist() == [120, 150]
    assert path.is_file()


def test_lines_without_series(tmp_path: Path) -> None:
    figure = plot_lines(STAGES, tmp_path / 'single.svg', x='stage', y='ari')
    assert len(figure.axes[0].get_lines()) == 1


def test_lines_rejects_bad_frames(tmp_path: Path) -> None:
    path = tmp_path / 'never.svg'
    with pytest.raises(ContractViolationError, match='nothing to plot'):
        plot_lines(pd.DataFrame(), path, x='stage', y='ari')
    with pytest.raises(ContractViolationError, match='lacks column'):
        plot_lines(STAGES, path, x='n', y='ari')
    assert not path.exists()
