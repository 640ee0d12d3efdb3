import logging
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from dpmom import tuning
from dpmom.clustering import ClusteringResult, DpMomConfig, fit
from dpmom.core import Assignment, DataMatrix, Rng
from dpmom.errors import ContractViolationError, DegenerateDataError, SpawnOverflowError
from dpmom.mom import BucketPartition, mom_objective
from dpmom.partition import build_buckets
from dpmom.tuning import (
    CRITERION_PROXY,
    ProtocolConfig,
    admissible_L,
    default_proxy_penalty,
    grid_stage,
    lambda_bounds,
    refine_bounds,
    search,
    unsupervised_proxy_search,
    write_trace,
)

SMALL_PROTOCOL = {'repeats': 3, 'stage_points': (11, 5, 5), 'L_values': (4,), 'eta': 1.0}


def test_lambda_bounds_examples() -> None:
    assert lambda_bounds([(0, 0), (3, 4), (0, 1)]) == (1.0, 25.0)
    assert lambda_bounds([(0, 0), (0, 0), (0, 2)]) == (4.0, 4.0)
    with pytest.raises(DegenerateDataError, match='identical'):
        lambda_bounds(np.ones((5, 2)))
    with pytest.raises(ContractViolationError, match='two rows'):
        lambda_bounds([(1, 1)])


def test_grid_stage() -> None:
    assert grid_stage((0.0, 10.0), 11) == [float(v) for v in range(11)]
    assert grid_stage((2.0, 2.0), 3) == [2.0, 2.0, 2.0]
    with pytest.raises(ContractViolationError, match='at least 2 points'):
        grid_stage((0.0, 1.0), 1)
    with pytest.raises(ContractViolationError, match='reversed'):
        grid_stage((1.0, 0.0), 3)


@pytest.mark.parametrize(('index', 'expected'), [(0, (0.0, 1.0)), (4, (3.0, 5.0)), (10, (9.0, 10.0))])
def test_refine_bounds(index: int, expected: tuple[float, float]) -> None:
    assert refine_bounds(grid_stage((0.0, 10.0), 11), index) == expected


def test_refine_bounds_rejects_bad_index() -> None:
    with pytest.raises(ContractViolationError, match='index 11'):
        refine_bounds(grid_stage((0.0, 10.0), 11), 11)


def test_admissible_L() -> None:
    assert admissible_L(30) == (3, 4, 5, 6, 7, 8, 9)
    assert admissible_L(300)[-1] == 99
    with pytest.raises(ContractViolationError, match='no bucket count'):
        admissible_L(9)


def test_admissible_L_thins_large_samples() -> None:
    thinned = admissible_L(1000)
    assert len(thinned) <= 30
    assert (thinned[0], thinned[-1]) == (3, 333)
    assert list(thinned) == sorted(set(thinned))
    assert len(admissible_L(1000, full_sweep=True)) == 331


@pytest.mark.parametrize(
    ('overrides', 'message'),
    [
        ({'repeats': 0}, 'repeats'),
        ({'stage_points': (11, 1)}, 'at least 2 grid points'),
        ({'L_values': (2, 5)}, 'exceed 2'),
        ({'eta': 0.0}, 'eta'),
        ({'bucket_strategy': 'sorted'}, 'bucket strategy'),
        ({'max_clusters': 0}, 'max_clusters'),
        ({'lambda': 3.0}, 'invalid protocol settings'),
    ],
)
def test_protocol_validation(overrides: dict[str, object], message: str) -> None:
    with pytest.raises(ContractViolationError, match=message):
        ProtocolConfig.from_like(overrides)


def test_protocol_from_like() -> None:
    assert ProtocolConfig.from_like(None) == ProtocolConfig()
    config = ProtocolConfig.from_like({'L_values': (7, 3, 7)})
    assert config.L_values == (3, 7)
    assert ProtocolConfig.from_like(config) is config


def test_search_recovers_blobs(blobs: tuple[DataMatrix, Assignment]) -> None:
    data, truth = blobs
    result = search(data, truth, SMALL_PROTOCOL, Rng(5))
    assert result.median_ari == 1.0
    assert result.estimated_clusters == 2
    assert result.L_opt == 4
    assert result.L_range == (4, 4)
    assert result.eta == 1.0
    assert result.repeats == 3
    assert len(result.trials) == 3 * (11 + 5 + 5)
    low, high = result.lambda_bounds
    assert low <= result.lambda_range[0] <= result.lambda_opt <= result.lambda_range[1] <= high


def test_search_is_reproducible(blobs: tuple[DataMatrix, Assignment]) -> None:
    data, truth = blobs
    first = search(data, truth, SMALL_PROTOCOL, Rng(5))
    second = search(data, truth, SMALL_PROTOCOL, Rng(5))
    assert first.lambda_opt == second.lambda_opt
    assert [t.score for t in first.trials] == [t.score for t in second.trials]
    assert [t.seed for t in first.trials] == [t.seed for t in second.trials]


def test_search_refines_around_stage_winner(blobs: tuple[DataMatrix, Assignment]) -> None:
    data, truth = blobs
    result = search(data, truth, {**SMALL_PROTOCOL, 'repeats': 1}, Rng(6))
    coarse = sorted({t.lambda_ for t in result.trials if t.stage == 1})
    fine = [t.lambda_ for t in result.trials if t.stage == 2]
    assert len(coarse) == 11
    step = coarse[1] - coarse[0]
    assert max(fine) - min(fine) == pytest.approx(2 * step) or max(fine) - min(fine) == pytest.approx(step)


def test_search_rejects_mismatched_labels(blobs: tuple[DataMatrix, Assignment]) -> None:
    data, _ = blobs
    with pytest.raises(ContractViolationError, match='labels for'):
        search(data, [0, 1], SMALL_PROTOCOL, Rng(1))


def test_search_drops_a_repeat_whose_cells_all_overflow(
    blobs: tuple[DataMatrix, Assignment], monkeypatch: pytest.MonkeyPatch, caplog: pytest.LogCaptureFixture
) -> None:
    data, truth = blobs
    doomed = Rng(5).seed_for(0, 4)
    real_fit = tuning.fit

    def fit_or_overflow(
        points: DataMatrix, config: DpMomConfig, partition: BucketPartition | None = None
    ) -> ClusteringResult:
        if config.seed == doomed:
            raise SpawnOverflowError(1, config.lambda_)
        return real_fit(points, config, partition=partition)

    monkeypatch.setattr(tuning, 'fit', fit_or_overflow)
    with caplog.at_level(logging.WARNING, logger='dpmom.tuning'):
        result = search(data, truth, SMALL_PROTOCOL, Rng(5))
    assert result.dropped_repeats == (0,)
    assert result.repeats == 2
    assert len(result.trials) == 11 + 2 * (11 + 5 + 5)
    assert [t.stage for t in result.trials if t.repeat == 0] == [1] * 11
    assert 'repeat 0: every cell overflowed' in caplog.text
    assert result.to_dict()['dropped_repeats'] == [0]


def test_search_fails_only_when_every_repeat_overflows(
    blobs: tuple[DataMatrix, Assignment], monkeypatch: pytest.MonkeyPatch
) -> None:
    data, truth = blobs

    def always_overflow(
        points: DataMatrix, config: DpMomConfig, partition: BucketPartition | None = None
    ) -> ClusteringResult:
        raise SpawnOverflowError(1, config.lambda_)

    monkeypatch.setattr(tuning, 'fit', always_overflow)
    with pytest.raises(SpawnOverflowError, match='max_clusters=1'):
        search(data, truth, {**SMALL_PROTOCOL, 'max_clusters': 1}, Rng(5))


def test_max_clusters_reaches_every_fit(blobs: tuple[DataMatrix, Assignment]) -> None:
    data, truth = blobs
    result = search(data, truth, {**SMALL_PROTOCOL, 'repeats': 1, 'max_clusters': 2}, Rng(5))
    assert all(t.k <= 2 for t in result.trials)
    assert result.estimated_clusters <= 2


def _refit_objective(data: DataMatrix, trial: tuning.TrialRecord, penalty: float) -> tuple[float, int]:
    partition: BucketPartition = build_buckets(data, trial.L, Rng(trial.seed), 'kmeanspp')
    config = DpMomConfig(lambda_=trial.lambda_, eta=trial.eta, L=trial.L, seed=trial.seed)
    refit = fit(data, config, partition=partition)
    return mom_objective(data, partition, refit.centroids, penalty), refit.k


def test_proxy_scores_each_cell_with_its_own_penalty(blobs: tuple[DataMatrix, Assignment]) -> None:
    data, _ = blobs
    result = unsupervised_proxy_search(data, {**SMALL_PROTOCOL, 'repeats': 1}, Rng(2))
    for trial in result.trials[:4]:
        objective, k = _refit_objective(data, trial, trial.lambda_)
        assert trial.score == pytest.approx(objective, rel=1e-12)
        assert trial.k == k


def test_proxy_with_fixed_penalty_scores_on_one_scale(blobs: tuple[DataMatrix, Assignment]) -> None:
    data, _ = blobs
    penalty = default_proxy_penalty(data)
    result = unsupervised_proxy_search(data, {**SMALL_PROTOCOL, 'repeats': 1, 'proxy_penalty': penalty}, Rng(2))
    trial = result.trials[1]
    objective, _ = _refit_objective(data, trial, penalty)
    assert trial.score == pytest.approx(objective, rel=1e-12)


def test_default_proxy_penalty_is_half_the_single_cluster_objective() -> None:
    points = np.array([[-1.0, 0.0], [1.0, 0.0], [0.0, 2.0], [0.0, -2.0]])
    assert default_proxy_penalty(points) == pytest.approx(0.5 * (1 + 1 + 4 + 4) / 4)


def test_proxy_search_finds_one_blob() -> None:
    points = Rng(31).generator().standard_normal((40, 2))
    protocol = {**SMALL_PROTOCOL, 'repeats': 1, 'proxy_penalty': default_proxy_penalty(points)}
    result = unsupervised_proxy_search(points, protocol, Rng(2))
    assert result.criterion == CRITERION_PROXY
    assert result.median_ari is None
    assert result.estimated_clusters == 1


def test_proxy_search_finds_two_blobs(blobs: tuple[DataMatrix, Assignment]) -> None:
    data, _ = blobs
    protocol = {**SMALL_PROTOCOL, 'repeats': 1, 'proxy_penalty': default_proxy_penalty(data)}
    result = unsupervised_proxy_search(data, protocol, Rng(2))
    assert result.estimated_clusters == 2


def test_proxy_search_needs_ten_rows() -> None:
    with pytest.raises(ContractViolationError, match='at least 10 rows'):
        unsupervised_proxy_search(np.arange(18.0).reshape(9, 2), SMALL_PROTOCOL)


def test_write_trace(tmp_path: Path, blobs: tuple[DataMatrix, Assignment]) -> None:
    data, truth = blobs
    result = search(data, truth, {**SMALL_PROTOCOL, 'repeats': 1}, Rng(5))
    path = tmp_path / 'trace.csv'
    write_trace(path, result)
    frame = pd.read_csv(path)
    assert list(frame.columns) == ['stage', 'repeat', 'lambda', 'L', 'eta', 'ari', 'k', 'runtime_ms', 'seed']
    assert len(frame) == len(result.trials)
    assert frame['ari'].max() == 1.0
    assert result.to_dict()['trials'] == len(result.trials)
