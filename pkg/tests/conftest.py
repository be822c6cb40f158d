import sys
from pathlib import Path

import numpy as np
import pytest

from fdwave.fracops import TimeGrid
from fdwave.spatial import Coefficients, SpatialMesh

DATA = Path(__file__).parent / "data"
TOOLS = Path(__file__).resolve().parents[1] / "tools"
sys.path.insert(0, str(TOOLS))


@pytest.fixture
def mesh31():
    return SpatialMesh(0.0, 1.0, 31)


@pytest.fixture
def grid64():
    return TimeGrid(1.0, 64)


def nonsymmetric_coefficients() -> Coefficients:
    return Coefficients(a=lambda x: 1.0 + 0.5 * x, B=lambda x: 0.3 + 0.1 * x, c=lambda x: 0.2 + 0 * x,
                        a0=1.0, B_prime=lambda x: 0.1 + 0 * x)


def space_time_rel(u, v) -> float:
    return float(np.linalg.norm(u - v) / np.linalg.norm(v))
