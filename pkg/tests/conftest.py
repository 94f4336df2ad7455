import os
import tempfile

# The ledger and default outputs must not land in the working tree.
_scratch = tempfile.mkdtemp(prefix="hslag-tests-")
os.environ.setdefault("HSLAG_DATABASE_URL", f"sqlite:///{_scratch}/runs.db")
os.environ.setdefault("HSLAG_OUTPUT_ROOT", f"{_scratch}/runs")

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from geometry.kahler_core import FlatTorus, ProjectiveSpace, SurfaceOfRevolution  # noqa: E402
from geometry.lagrangian import linear_torus, parallel_circle  # noqa: E402
from utils.spectral import TorusGrid  # noqa: E402

TWO_PI = 2.0 * np.pi


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)


@pytest.fixture(scope="session")
def cp1():
    return ProjectiveSpace(1)


@pytest.fixture(scope="session")
def sphere():
    return SurfaceOfRevolution((1.0, 1.0, 1.0))


@pytest.fixture(scope="session")
def flat_cylinder():
    """ℝ/2πℤ × ℝ."""
    return FlatTorus(1, [TWO_PI, 0.0])


@pytest.fixture(scope="session")
def flat_t4():
    return FlatTorus(2, [TWO_PI, 0.0, TWO_PI, 0.0])


@pytest.fixture
def circle_grid():
    return TorusGrid(1, 32)


@pytest.fixture
def equator(sphere, circle_grid):
    return parallel_circle(sphere, 0.0, circle_grid)


@pytest.fixture
def cp1_equator(cp1, circle_grid):
    return parallel_circle(cp1, 0.5, circle_grid)


@pytest.fixture
def flat_line(flat_cylinder):
    return linear_torus(flat_cylinder, [0.0], TorusGrid(1, 16))
