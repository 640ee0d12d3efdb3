from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from dpmom.data import GaussianMixture
from dpmom.errors import AssumptionViolationError, ContractViolationError
from dpmom.theoryprobe import (
    ContaminationReport,
    contamination_sweep,
    default_L_rule,
    quadrant_generator,
    rate_trend,
    write_report_csv,
)

QUADRANT_FIT = {'lambda_': 0.3, 'eta': 0.5}


@pytest.fixture(scope='module')
def small_sweep() -> ContaminationReport:
    return contamination_sweep(
        [4, 8],
        seeds=(0, 1, 2),
        generator=quadrant_generator(10),
        t_max=60,
        dp_means_lambda=0.3,
        **QUADRANT_FIT,
    )


@pytest.mark.parametrize(('outliers', 'L'), [(0, 3), (1, 3), (4, 11), (15, 38), (50, 126)])
def test_default_L_rule(outliers: int, L: int) -> None:
    assert default_L_rule(170, outliers) == L


def test_sweep_levels(small_sweep: ContaminationReport) -> None:
    assert [level.outliers for level in small_sweep.levels] == [0, 4, 8]
    assert [level.L for level in small_sweep.levels] == [3, 11, 21]
    assert small_sweep.levels[0].median_displacement == 0.0
    assert small_sweep.seeds == (0, 1, 2)
    assert all(level.median_ari_dp_means is not None for level in small_sweep.levels)
    assert small_sweep.ari_drop(0) == 0.0
    assert small_sweep.clean_ari == small_sweep.levels[0].median_ari


def test_sweep_report_shapes(tmp_path: Path, small_sweep: ContaminationReport) -> None:
    document = small_sweep.to_dict()
    assert document['lambda'] == 0.3
    assert len(document['levels']) == 3
    path = tmp_path / 'contamination.csv'
    write_report_csv(path, small_sweep)
    frame = pd.read_csv(path)
    assert frame['outliers'].tolist() == [0, 4, 8]
    assert 'median_ari_dp_means' in frame.columns


def test_sweep_is_reproducible(small_sweep: ContaminationReport) -> None:
    again = contamination_sweep(
        [4, 8],
        seeds=(0, 1, 2),
        generator=quadrant_generator(10),
        t_max=60,
        dp_means_lambda=0.3,
        **QUADRANT_FIT,
    )
    assert again.to_dict() == small_sweep.to_dict()


def test_sweep_without_dp_means_has_no_baseline_drop() -> None:
    report = contamination_sweep([2], seeds=(0,), generator=quadrant_generator(5), t_max=20, **QUADRANT_FIT)
    assert report.levels[-1].median_ari_dp_means is None
    with pytest.raises(ContractViolationError, match='without the DP-means'):
        report.ari_drop(dp_means=True)


def test_sweep_rejects_rules_that_break_the_bucket_assumption() -> None:
    with pytest.raises(AssumptionViolationError, match='does not exceed'):
        contamination_sweep([15], seeds=(0,), L_rule=lambda n, outliers: 3, **QUADRANT_FIT)
    with pytest.raises(AssumptionViolationError, match=r'must lie in \(2, n='):
        contamination_sweep([15], seeds=(0,), L_rule=lambda n, outliers: n + 1, **QUADRANT_FIT)


def test_sweep_argument_checks() -> None:
    with pytest.raises(ContractViolationError, match='seed'):
        contamination_sweep([15], seeds=(), **QUADRANT_FIT)
    with pytest.raises(ContractViolationError, match='non-negative'):
        contamination_sweep([-3], seeds=(0,), **QUADRANT_FIT)


def test_rate_trend_argument_checks() -> None:
    with pytest.raises(ContractViolationError, match='strictly increasing'):
        rate_trend([100, 100, 400], seeds=(0,), lambda_=50.0, eta=1.0)
    with pytest.raises(ContractViolationError, match='at least 3 levels'):
        rate_trend([100, 400], seeds=(0,), lambda_=50.0, eta=1.0)
    with pytest.raises(ContractViolationError, match='exceeds the smallest sample size'):
        rate_trend([4, 40, 400], seeds=(0,), lambda_=50.0, eta=1.0, L=5)


def test_rate_trend_bookkeeping(tmp_path: Path) -> None:
    mixture = GaussianMixture.two_component(separation=20.0)
    report = rate_trend([30, 60, 120], seeds=(0, 1, 2), lambda_=50.0, eta=1.0, mixture=mixture, holdout=2000)
    assert [level.n for level in report.levels] == [30, 60, 120]
    assert report.oracle_objective == 2.0
    for level in report.levels:
        assert len(level.gaps) == 3
        assert level.iqr[0] <= level.median_gap <= level.iqr[1]
        assert min(level.gaps) >= 0.0
    path = tmp_path / 'rate.csv'
    write_report_csv(path, report)
    assert list(pd.read_csv(path).columns) == ['n', 'seed_index', 'gap']
    assert len(report.to_dict()['levels']) == 3


@pytest.mark.slow
def test_quadrant_contamination_keeps_ari() -> None:
    report = contamination_sweep([15, 30, 50], seeds=range(15), dp_means_lambda=0.3, **QUADRANT_FIT)
    for index in range(1, 4):
        assert report.ari_drop(index) <= 0.1
    assert report.levels[-1].median_ari > report.levels[-1].median_ari_dp_means


@pytest.mark.slow
def test_excess_risk_shrinks_with_sample_size() -> None:
    report = rate_trend([100, 400, 1600], seeds=range(20), lambda_=50.0, eta=1.0)
    assert report.is_decreasing()
    assert report.slope <= -0.25
    assert np.all(report.medians() >= 0.0)
