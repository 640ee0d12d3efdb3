"""Command-line interface ``dpmom``.

Exit codes: 0 success, 1 usage error, 2 bad input data, 3 any other failure.
"""

import json
import logging
import sys
import time
from collections.abc import Sequence
from pathlib import Path
from typing import Annotated, Any

import click
import pandas as pd
import typer

from .__version__ import __version__
from .baselines import dp_means, kmeans_pp
from .benchmark import SUITES, BenchConfig, run_suite, stats_report, write_stage_frame
from .clustering import ClusteringResult, DpMomConfig, default_learning_rate, fit, merge_small_clusters
from .core import Assignment, DataMatrix, Rng
from .data import (
    DEFAULT_DATA_ROOT,
    OUTLIER_LABEL,
    fetch_dataset,
    gen_quadrant,
    gen_two_gaussians,
    inject_outliers,
    load_csv,
    load_manifest,
    save_csv,
)
from .errors import ContractViolationError, DataError, DegenerateDataError, DpMomError, MergeImpossibleError
from .metrics import load_ari_table, published_ari_table, save_ari_table
from .plotting import plot_lines, plot_scatter
from .tuning import ProtocolConfig, search, unsupervised_proxy_search, write_trace

__all__ = ['app', 'main', 'run']

_logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_FAULT = 3

ALGORITHMS = ('dpmom', 'dpmeans', 'kmeans')

app = typer.Typer(name='dpmom', help='Robust nonparametric clustering with DP-MoM.', no_args_is_help=True)
gen_app = typer.Typer(help='Generate synthetic data sets.', no_args_is_help=True)
plot_app = typer.Typer(help='Render SVG figures.', no_args_is_help=True)
datasets_app = typer.Typer(help='Inspect and download manifest datasets.', no_args_is_help=True)
app.add_typer(gen_app, name='gen')
app.add_typer(plot_app, name='plot')
app.add_typer(datasets_app, name='datasets')

InputOption = Annotated[Path, typer.Option('--in', help='Input CSV file.')]
HeaderOption = Annotated[bool, typer.Option('--has-header', help='First line holds column names.')]
LabelsOption = Annotated[
    int | None,
    typer.Option('--labels-col', min=1, help='1-based label column; a "label" header is picked up by itself.'),
]
OutlierOption = Annotated[
    int | None,
    typer.Option('--outlier-col', min=1, help='1-based 0/1 outlier column (auto-detected from an "outlier" header).'),
]
SeedOption = Annotated[int, typer.Option('--seed', min=0, help='Root seed.')]


def _version(value: bool) -> None:
    if value:
        typer.echo(f'dpmom {__version__}')
        raise typer.Exit()


@app.callback()
def _configure(
    verbose: Annotated[int, typer.Option('--verbose', '-v', count=True, help='-v for INFO, -vv for DEBUG.')] = 0,
    version: Annotated[
        bool, typer.Option('--version', callback=_version, is_eager=True, help='Show the version and exit.')
    ] = False,
) -> None:
    level = logging.WARNING if verbose == 0 else logging.INFO if verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format='%(levelname)s %(name)s: %(message)s', force=True)


def _write_json(path: Path, payload: dict[str, Any]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2) + '\n', encoding='utf-8')


def _header_columns(path: Path) -> list[str]:
    try:
        return [str(c).strip().lower() for c in pd.read_csv(path, nrows=0).columns]
    except (pd.errors.ParserError, pd.errors.EmptyDataError, OSError):
        return []


def _read_input(
    path: Path,
    has_header: bool,
    labels_col: int | None,
    outlier_col: int | None,
) -> tuple[DataMatrix, Assignment | None]:
    if not path.is_file():
        raise DataError(f'input file not found: {path}')
    if has_header:
        names = _header_columns(path)
        if labels_col is None and 'label' in names:
            labels_col = names.index('label') + 1
        if outlier_col is None and 'outlier' in names:
            outlier_col = names.index('outlier') + 1
    return load_csv(
        path,
        has_header=has_header,
        label_column=None if labels_col is None else labels_col - 1,
        outlier_column=None if outlier_col is None else outlier_col - 1,
    )


@gen_app.command('quadrant')
def gen_quadrant_command(
    out: Annotated[Path, typer.Option('--out', help='Output CSV file.')],
    per: Annotated[int, typer.Option('--per', min=1, help='Points per quadrant.')] = 30,
    outliers: Annotated[int, typer.Option('--outliers', min=0, help='Uniform outliers on [-1, 1]^2.')] = 0,
    seed: SeedOption = 0,
) -> None:
    """Four quadrant clusters of the unit disc, optionally with uniform outliers."""
    rng = Rng(seed)
    data, labels = gen_quadrant(per, rng=rng.derive(0))
    data, labels = inject_outliers(data, labels, outliers, rng=rng.derive(1), bounds=[(-1.0, 1.0), (-1.0, 1.0)])
    save_csv(out, data, labels)
    typer.echo(f'wrote {data.n} rows to {out}')


@gen_app.command('gaussians')
def gen_gaussians_command(
    out: Annotated[Path, typer.Option('--out', help='Output CSV file.')],
    n: Annotated[int, typer.Option('--n', min=1, help='Sample size.')] = 200,
    separation: Annotated[float, typer.Option('--separation', help='Distance between the two means.')] = 20.0,
    seed: SeedOption = 0,
) -> None:
    """Two isotropic unit-variance Gaussian components."""
    data, labels, _ = gen_two_gaussians(n, rng=Rng(seed), separation=separation)
    save_csv(out, data, labels)
    typer.echo(f'wrote {data.n} rows to {out}')


def _check_flags(algo: str, lambda_: float | None, L: int | None, k: int | None) -> None:
    if algo not in ALGORITHMS:
        raise click.UsageError(f'--algo must be one of {", ".join(ALGORITHMS)}, got {algo!r}')
    if algo == 'kmeans':
        if k is None:
            raise click.UsageError('--algo kmeans needs --k')
        if lambda_ is not None or L is not None:
            raise click.UsageError('--lambda and --L do not apply to --algo kmeans')
        return
    if k is not None:
        raise click.UsageError(f'--k does not apply to --algo {algo}; the cluster count follows from --lambda')
    if lambda_ is None:
        raise click.UsageError(f'--algo {algo} needs --lambda')
    if algo == 'dpmom' and L is None:
        raise click.UsageError('--algo dpmom needs --L (number of buckets, at least 3)')
    if algo == 'dpmeans' and L is not None:
        raise click.UsageError('--L does not apply to --algo dpmeans')


@app.command('cluster')
def cluster_command(
    input_path: InputOption,
    out: Annotated[Path, typer.Option('--out', help='Output JSON file.')],
    algo: Annotated[str, typer.Option('--algo', help='dpmom, dpmeans or kmeans.')] = 'dpmom',
    lambda_: Annotated[float | None, typer.Option('--lambda', min=0.0, help='Cluster penalty.')] = None,
    eta: Annotated[
        float | None, typer.Option('--eta', help='Learning rate; defaults to the larger heuristic candidate.')
    ] = None,
    epsilon: Annotated[float, typer.Option('--epsilon', help='AdaGrad stabilizer.')] = 1.0,
    delta: Annotated[float, typer.Option('--delta', help='Relative objective change that stops the loop.')] = 1e-4,
    t_max: Annotated[int, typer.Option('--tmax', min=1, help='Iteration cap.')] = 200,
    L: Annotated[int | None, typer.Option('--L', help='Number of MoM buckets.')] = None,
    k: Annotated[int | None, typer.Option('--k', min=1, help='Cluster count for kmeans.')] = None,
    seed: SeedOption = 0,
    bucket_strategy: Annotated[str, typer.Option('--buckets', help='kmeanspp or random.')] = 'kmeanspp',
    merge_min_size: Annotated[
        int, typer.Option('--merge-min-size', min=0, help='Merge DP-MoM clusters smaller than this; 0 disables.')
    ] = 3,
    has_header: HeaderOption = False,
    labels_col: LabelsOption = None,
    outlier_col: OutlierOption = None,
    timing: Annotated[bool, typer.Option('--timing', help='Record wall time in the result.')] = False,
) -> None:
    """Fit one algorithm and write labels, centroids and the objective trace as JSON."""
    _check_flags(algo, lambda_, L, k)
    data, _ = _read_input(input_path, has_header, labels_col, outlier_col)
    started = time.perf_counter()
    result: ClusteringResult
    if algo == 'dpmom':
        assert lambda_ is not None and L is not None
        rate = eta if eta is not None else default_learning_rate(data)[0]
        config = DpMomConfig(
            lambda_=lambda_,
            eta=rate,
            L=L,
            seed=seed,
            epsilon=epsilon,
            delta=delta,
            t_max=t_max,
            bucket_strategy=bucket_strategy,
        )
        result = fit(data, config)
    elif algo == 'dpmeans':
        assert lambda_ is not None
        result = dp_means(data, lambda_, t_max=t_max, delta=delta)
    else:
        assert k is not None
        result = kmeans_pp(data, k, Rng(seed), t_max=t_max)
    payload = result.to_dict()
    payload['k_pre_merge'] = result.k
    if algo == 'dpmom' and merge_min_size > 0:
        try:
            merged = merge_small_clusters(result, data, merge_min_size)
        except MergeImpossibleError as e:
            _logger.warning('%s; keeping the unmerged result', e)
        else:
            payload.update(k=merged.k, labels=merged.labels.to_list(), centroids=merged.centroids.to_list())
    payload['merge_min_size'] = merge_min_size if algo == 'dpmom' else None
    if timing:
        payload['wall_time_ms'] = round((time.perf_counter() - started) * 1000.0, 3)
    _write_json(out, payload)
    typer.echo(f'{algo}: k={payload["k"]} (before merge {result.k}), iterations={result.iterations} -> {out}')


@app.command('tune')
def tune_command(
    input_path: InputOption,
    out_dir: Annotated[Path, typer.Option('--out-dir', help='Directory for trace.csv and summary.json.')],
    repeats: Annotated[int, typer.Option('--repeats', min=1, help='Repetitions of the grid search.')] = 35,
    seed: SeedOption = 0,
    proxy: Annotated[bool, typer.Option('--proxy', help='Tune without labels using the MoM objective.')] = False,
    proxy_penalty: Annotated[
        float | None,
        typer.Option('--proxy-penalty', min=0.0, help='Score --proxy cells under this one penalty, not their own.'),
    ] = None,
    L_values: Annotated[list[int] | None, typer.Option('--L', help='Restrict the L sweep; repeatable.')] = None,
    eta: Annotated[float | None, typer.Option('--eta', help='Fixed learning rate.')] = None,
    full_sweep: Annotated[bool, typer.Option('--full-sweep', help='Every admissible L, even for n > 300.')] = False,
    n_jobs: Annotated[int, typer.Option('--n-jobs', help='Parallel workers.')] = 1,
    has_header: HeaderOption = False,
    labels_col: LabelsOption = None,
    outlier_col: OutlierOption = None,
) -> None:
    """Grid-search the penalty and the bucket count; report the ranges of the per-repeat optima."""
    data, labels = _read_input(input_path, has_header, labels_col, outlier_col)
    if labels is None and not proxy:
        raise click.UsageError(
            'no ground-truth labels: pass --labels-col, or --proxy for label-free tuning '
            '(unsupervised_proxy_search)'
        )
    protocol = ProtocolConfig(
        repeats=repeats,
        L_values=tuple(L_values) if L_values else None,
        eta=eta,
        full_sweep=full_sweep,
        proxy_penalty=proxy_penalty,
        n_jobs=n_jobs,
    )
    rng = Rng(seed)
    if labels is not None and not proxy:
        result = search(data, labels, protocol, rng)
    else:
        result = unsupervised_proxy_search(data, protocol, rng)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_trace(out_dir / 'trace.csv', result)
    _write_json(out_dir / 'summary.json', result.to_dict())
    score = f'median ARI {result.median_ari:.4f}' if result.median_ari is not None else 'proxy criterion'
    typer.echo(
        f'lambda range {result.lambda_range[0]:.6g} - {result.lambda_range[1]:.6g}, '
        f'L range {result.L_range[0]} - {result.L_range[1]}, {score}, '
        f'estimated clusters {result.estimated_clusters}'
    )


@app.command('bench')
def bench_command(
    suite: Annotated[str, typer.Option('--suite', help='quadrant, jain-outliers or uci.')],
    out_dir: Annotated[Path, typer.Option('--out-dir', help='Directory for the ARI table and the report.')],
    runs: Annotated[int, typer.Option('--runs', min=1, help='Seeded runs per dataset; medians are reported.')] = 30,
    seed: SeedOption = 0,
    repeats: Annotated[int, typer.Option('--repeats', min=1, help='Tuning repetitions.')] = 35,
    datasets: Annotated[list[str] | None, typer.Option('--dataset', help='Manifest names; repeatable.')] = None,
    data_root: Annotated[Path, typer.Option('--data-root', help='Directory of dataset files.')] = DEFAULT_DATA_ROOT,
    eta: Annotated[float | None, typer.Option('--eta', help='Fixed learning rate for tuning.')] = None,
    n_jobs: Annotated[int, typer.Option('--n-jobs', help='Parallel workers for tuning.')] = 1,
    published: Annotated[
        bool, typer.Option('--published/--no-published', help='Merge published rows of other algorithms.')
    ] = True,
) -> None:
    """Run a benchmark suite and write its median ARI table plus the rank-test report."""
    if suite not in SUITES:
        raise click.UsageError(f'--suite must be one of {", ".join(SUITES)}, got {suite!r}')
    config = BenchConfig(
        runs=runs,
        seed=seed,
        datasets=tuple(datasets) if datasets else None,
        data_root=str(data_root),
        protocol=ProtocolConfig(repeats=repeats, eta=eta, n_jobs=n_jobs),
        include_published=published,
    )
    result = run_suite(suite, config)
    out_dir.mkdir(parents=True, exist_ok=True)
    note = 'median ARI; rows of algorithms not run here are published values, not recomputed'
    save_ari_table(result.table, out_dir / 'ari_table.csv', note=note)
    if suite != 'uci':
        write_stage_frame(out_dir / 'stages.csv', result)
    _write_json(out_dir / 'report.json', result.summary())
    for name in result.skipped:
        typer.echo(f'skipped {name}: dataset file not available', err=True)
    shape = f'{len(result.table.algorithms)} algorithms x {len(result.table.datasets)} columns'
    typer.echo(f'{suite}: {shape} -> {out_dir}')


@app.command('stats')
def stats_command(
    table_path: Annotated[
        Path | None, typer.Option('--table', help='ARI table CSV; the published table by default.')
    ] = None,
    reference: Annotated[str, typer.Option('--reference', help='Algorithm compared against all others.')] = 'DP-MoM',
    out: Annotated[Path | None, typer.Option('--out', help='Write the report as JSON.')] = None,
) -> None:
    """Staged Friedman tests and paired sign / signed-rank tests over an ARI table."""
    if table_path is not None and not table_path.is_file():
        raise DataError(f'ARI table not found: {table_path}')
    table = published_ari_table() if table_path is None else load_ari_table(table_path)
    report = stats_report(table, reference)
    for stage in report.friedman:
        dropped = f' without {", ".join(stage.dropped)}' if stage.dropped else ''
        typer.echo(f'Friedman{dropped}: chi2={stage.statistic:.4f} p={stage.p_value:.4g}')
    for row in report.paired:
        typer.echo(
            f'{reference} vs {row.algorithm}: wins {row.wins}/{row.trials} sign p={row.sign_p:.7f} '
            f'W={row.wsr_statistic:g} p={row.wsr_p:.7f}'
        )
    if out is not None:
        _write_json(out, report.to_dict())


@plot_app.command('scatter')
def plot_scatter_command(
    result_path: Annotated[Path, typer.Option('--in', help='Result JSON written by "cluster".')],
    data_path: Annotated[Path, typer.Option('--data', help='Data CSV the result was fitted on.')],
    out: Annotated[Path, typer.Option('--out', help='Output SVG file.')],
    dims: Annotated[
        list[int] | None, typer.Option('--dims', min=1, help='Two 1-based feature columns; repeat twice.')
    ] = None,
    has_header: HeaderOption = False,
    labels_col: LabelsOption = None,
    outlier_col: OutlierOption = None,
) -> None:
    """Scatter plot of a clustering result, outliers drawn with a distinct marker."""
    if not result_path.is_file():
        raise DataError(f'result file not found: {result_path}')
    try:
        result = ClusteringResult.from_dict(json.loads(result_path.read_text(encoding='utf-8')))
    except json.JSONDecodeError as e:
        raise DataError(f'{result_path}: not a JSON result: {e}') from e
    data, truth = _read_input(data_path, has_header, labels_col, outlier_col)
    outliers = None if truth is None else truth.labels == OUTLIER_LABEL
    plot_scatter(
        data,
        result.labels,
        out,
        outliers=outliers,
        centroids=result.centroids,
        dims=None if dims is None else [d - 1 for d in dims],
    )
    typer.echo(f'wrote {out}')


@plot_app.command('lines')
def plot_lines_command(
    trace_path: Annotated[Path, typer.Option('--in', help='Trace CSV, e.g. stages.csv from "bench".')],
    out: Annotated[Path, typer.Option('--out', help='Output SVG file.')],
    x: Annotated[str, typer.Option('--x', help='Column on the horizontal axis.')] = 'stage',
    y: Annotated[str, typer.Option('--y', help='Column on the vertical axis.')] = 'ari',
    series: Annotated[str | None, typer.Option('--series', help='Column naming the lines.')] = 'algorithm',
) -> None:
    """Line chart of ARI against the number of points (or any two trace columns)."""
    if not trace_path.is_file():
        raise DataError(f'trace file not found: {trace_path}')
    try:
        frame = pd.read_csv(trace_path, comment='#')
    except pd.errors.EmptyDataError:
        frame = pd.DataFrame()
    if series is not None and series not in frame.columns:
        series = None
    if x in frame.columns:
        numeric = pd.to_numeric(frame[x], errors='coerce')
        if numeric.notna().all():
            frame[x] = numeric
    plot_lines(frame, out, x=x, y=y, series=series)
    typer.echo(f'wrote {out}')


@datasets_app.command('list')
def datasets_list_command(
    data_root: Annotated[Path, typer.Option('--data-root', help='Directory of dataset files.')] = DEFAULT_DATA_ROOT,
) -> None:
    """List manifest datasets and whether their files are present."""
    for name, spec in load_manifest().items():
        present = 'present' if spec.path(data_root).is_file() else 'missing'
        typer.echo(f'{name:<20} {spec.suite:<11} n={spec.n:<5} p={spec.p:<6} K={spec.k:<3} {present}')


@datasets_app.command('fetch')
def datasets_fetch_command(
    names: Annotated[list[str], typer.Argument(help='Manifest names to download.')],
    data_root: Annotated[Path, typer.Option('--data-root', help='Target directory.')] = DEFAULT_DATA_ROOT,
) -> None:
    """Download datasets that have a public URL in the manifest."""
    manifest = load_manifest()
    unknown = [n for n in names if n not in manifest]
    if unknown:
        raise click.UsageError(f'unknown dataset(s) {unknown}; see "dpmom datasets list"')
    for name in names:
        typer.echo(f'{name}: {fetch_dataset(manifest[name], data_root)}')


def _exit_code(error: BaseException) -> int:
    if isinstance(error, (DataError, DegenerateDataError, ContractViolationError)):
        return EXIT_DATA
    return EXIT_FAULT


def main(argv: Sequence[str] | None = None) -> int:
    """Run the CLI and return its exit code instead of exiting."""
    command = typer.main.get_command(app)
    try:
        outcome = command.main(args=list(argv) if argv is not None else None, prog_name='dpmom', standalone_mode=False)
    except click.UsageError as e:
        e.show()
        return EXIT_USAGE
    except click.Abort:
        typer.echo('aborted', err=True)
        return EXIT_USAGE
    except click.ClickException as e:
        e.show()
        return EXIT_USAGE
    except (DpMomError, OSError, ArithmeticError, ValueError) as e:
        typer.echo(f'error: {e}', err=True)
        _logger.debug('command failed', exc_info=True)
        return _exit_code(e)
    return outcome if isinstance(outcome, int) else EXIT_OK


def run() -> None:
    sys.exit(main())


if __name__ == '__main__':
    run()
