import numpy as np
import pytest

from cutspline.cutgeom import BENCHMARK_PLANE, TensorSpace, classify


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def bench_mesh_p2h4():
    space = TensorSpace.uniform(3, 2, 4, -1.0, 1.0)
    return space, classify(space, BENCHMARK_PLANE)
