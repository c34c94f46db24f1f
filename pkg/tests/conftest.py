import numpy as np
import pytest

from gsqgpatch.geometry import build_grid
from gsqgpatch.kernel import KernelParams, build_kernel_table


@pytest.fixture(scope="session")
def grid_small():
    return build_grid(2, 20, 19)


@pytest.fixture(scope="session")
def table_small(grid_small):
    return build_kernel_table(grid_small, KernelParams(0.5, 2))


@pytest.fixture(scope="session")
def grid_n3():
    return build_grid(3, 16, 15)


@pytest.fixture(scope="session")
def table_n3(grid_n3):
    return build_kernel_table(grid_n3, KernelParams(0.5, 3))


@pytest.fixture
def rng():
    return np.random.default_rng(42)
