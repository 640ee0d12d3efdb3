from pathlib import Path

import numpy as np
import pytest

from dpmom.core import Assignment, DataMatrix, Rng
from dpmom.data import gen_quadrant, save_csv

BLOB_CENTERS = np.array([[-10.0, 0.0], [10.0, 0.0]])


def make_blobs(per_blob: int = 20, seed: int = 3, sigma: float = 1.0) -> tuple[DataMatrix, Assignment]:
    """Two unit blobs 20 apart, rows grouped by blob."""
    generator = Rng(seed).generator()
    points = np.vstack([center + sigma * generator.standard_normal((per_blob, 2)) for center in BLOB_CENTERS])
    labels = np.repeat(np.arange(2), per_blob)
    return DataMatrix(points), Assignment(labels)


@pytest.fixture
def rng() -> Rng:
    return Rng(2024)


@pytest.fixture
def blobs() -> tuple[DataMatrix, Assignment]:
    return make_blobs()


@pytest.fixture
def quadrant() -> tuple[DataMatrix, Assignment]:
    return gen_quadrant(30, rng=Rng(11))


@pytest.fixture
def blobs_csv(tmp_path: Path, blobs: tuple[DataMatrix, Assignment]) -> Path:
    """Blob data written with ``x1, x2, label, outlier`` header columns."""
    path = tmp_path / 'blobs.csv'
    save_csv(path, *blobs)
    return path
