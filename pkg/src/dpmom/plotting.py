"""SVG figures: clustered scatter plots and ARI-versus-contamination lines."""

import logging
from collections.abc import Sequence
from pathlib import Path

import matplotlib
import numpy as np
import numpy.typing as npt
import pandas as pd
from matplotlib.figure import Figure

from .core import AssignmentLike, CentroidsLike, DataLike, as_assignment, as_centroids, as_data
from .errors import ContractViolationError

__all__ = ['plot_lines', 'plot_scatter']

_logger = logging.getLogger(__name__)

# Fixed hash salt and no date keep the SVG output identical across runs.
_SVG_STYLE = {'svg.hashsalt': 'dpmom', 'svg.fonttype': 'none'}
_SVG_METADATA = {'Date': None, 'Creator': None}


def _save(figure: Figure, path: str | Path) -> None:
    with matplotlib.rc_context(_SVG_STYLE):
        figure.savefig(path, format='svg', metadata=_SVG_METADATA, bbox_inches='tight')
    _logger.debug('wrote %s', path)


def plot_scatter(
    data: DataLike,
    labels: AssignmentLike,
    path: str | Path,
    *,
    outliers: npt.ArrayLike | None = None,
    centroids: CentroidsLike | None = None,
    dims: Sequence[int] | None = None,
    title: str | None = None,
) -> Figure:
    """Scatter two columns of the data coloured by cluster; outlier rows get a cross marker.

    Args:
        data: Observations.
        labels: Cluster of every row.
        path: Output SVG file.
        outliers: Boolean mask of rows to draw as outliers.
        centroids: Centroids to overlay.
        dims: The two columns to draw; required when the data is not two-dimensional.
        title: Axes title.

    Raises:
        ContractViolationError: If no two columns are selected or the inputs disagree in size.
    """
    matrix, assignment = as_data(data), as_assignment(labels)
    if assignment.n != matrix.n:
        raise ContractViolationError(f'{assignment.n} labels for {matrix.n} rows')
    if dims is None:
        if matrix.p != 2:
            raise ContractViolationError(
                f'data has {matrix.p} columns; choose two of them with --dims, e.g. --dims 1 --dims 2'
            )
        dims = (0, 1)
    if len(dims) != 2 or not all(0 <= d < matrix.p for d in dims):
        raise ContractViolationError(f'dims must name two of the {matrix.p} columns, got {list(dims)}')
    mask = np.zeros(matrix.n, dtype=bool) if outliers is None else np.asarray(outliers, dtype=bool)
    if mask.shape != (matrix.n,):
        raise ContractViolationError(f'outlier mask has shape {mask.shape}, expected ({matrix.n},)')

    x, y = matrix.values[:, dims[0]], matrix.values[:, dims[1]]
    figure = Figure(figsize=(6.0, 6.0))
    axes = figure.add_subplot()
    palette = matplotlib.colormaps['tab10']
    for index, cluster in enumerate(np.unique(assignment.labels[~mask])):
        members = (assignment.labels == cluster) & ~mask
        axes.scatter(x[members], y[members], s=14, color=palette(index % 10), label=f'cluster {int(cluster)}')
    if mask.any():
        axes.scatter(x[mask], y[mask], s=18, marker='x', color='black', label='outlier')
    if centroids is not None:
        theta = as_centroids(centroids)
        axes.scatter(
            theta.values[:, dims[0]], theta.values[:, dims[1]], s=90, marker='*', color='red', label='centroid'
        )
    axes.set_xlabel(f'x{dims[0] + 1}')
    axes.set_ylabel(f'x{dims[1] + 1}')
    if title:
        axes.set_title(title)
    axes.legend(loc='best', fontsize='small')
    _save(figure, path)
    return figure


def plot_lines(
    frame: pd.DataFrame,
    path: str | Path,
    *,
    x: str,
    y: str,
    series: str | None = None,
    title: str | None = None,
) -> Figure:
    """One line per value of ``series`` (a single line without it), points ordered by ``x``.

    Raises:
        ContractViolationError: If the frame is empty or misses a column; nothing is written then.
    """
    if frame.empty:
        raise ContractViolationError('nothing to plot: the trace is empty')
    missing = [c for c in (x, y, series) if c is not None and c not in frame.columns]
    if missing:
        raise ContractViolationError(f'trace lacks column(s) {missing}; it has {list(frame.columns)}')
    figure = Figure(figsize=(7.0, 4.5))
    axes = figure.add_subplot()
    groups = [(None, frame)] if series is None else list(frame.groupby(series, sort=False))
    for name, group in groups:
        ordered = group.sort_values(x, kind='stable')
        axes.plot(ordered[x].to_numpy(), ordered[y].to_numpy(), marker='o', label=None if name is None else str(name))
    axes.set_xlabel(x)
    axes.set_ylabel(y)
    if title:
        axes.set_title(title)
    if series is not None:
        axes.legend(loc='best', fontsize='small')
    _save(figure, path)
    return figure
