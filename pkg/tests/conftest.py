from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

# make the oracle module importable as a plain module
sys.path.insert(0, str(Path(__file__).parent))

from toolmatch.capability_matrix import DimensionSet, PerformanceMatrix  # noqa: E402


@pytest.fixture
def two_dims() -> DimensionSet:
    return DimensionSet.custom(2)


@pytest.fixture
def small_matrix() -> PerformanceMatrix:
    dims = DimensionSet.custom(3)
    scores = np.array([[0.9, 0.5, 0.3, 0.1], [0.2, 0.8, 0.4, 0.6], [0.5, 0.5, 0.9, 0.7]])
    return PerformanceMatrix(dims, ("A", "B", "C", "D"), scores)
