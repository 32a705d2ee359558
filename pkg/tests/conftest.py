import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from covlasso import CovMatrix, SymmetricMatrix

from oracles import spd_matrix


@pytest.fixture
def rng():
    return np.random.default_rng(42)


def make_cov(rng: np.random.Generator, n: int, cond: float = 100.0, scale: float = 1.0, count: int = 1000) -> CovMatrix:
    return CovMatrix(SymmetricMatrix(spd_matrix(rng, n, cond, scale)), count)
