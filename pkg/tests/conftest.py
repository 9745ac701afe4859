"""Shared lattices, media and oracles for the test suite."""

import numpy as np
import pytest

from timereversallab.measurement import IdealOracle, assemble_cached
from timereversallab.medium import build_grid, build_medium
from timereversallab.validation import ValidationSolver


@pytest.fixture(scope="session")
def grid_1d():
    """Unit interval, c = 1, 64 nodes, T = 1."""
    return build_grid(1.0, 64, 1.0)


@pytest.fixture(scope="session")
def medium_1d(grid_1d):
    return build_medium(grid_1d)


@pytest.fixture(scope="session")
def cached_1d(grid_1d, medium_1d):
    """Dense response operator of the 64-node interval."""
    return assemble_cached(IdealOracle(grid_1d, medium_1d))


@pytest.fixture(scope="session")
def validator_1d(grid_1d, medium_1d):
    return ValidationSolver(grid_1d, medium_1d)


@pytest.fixture(scope="session")
def long_grid_1d():
    """Unit interval, c = 1, 128 nodes, T = 1.4, long enough to see a wave cross and come back."""
    return build_grid(1.0, 128, 1.4)


@pytest.fixture(scope="session")
def long_medium_1d(long_grid_1d):
    return build_medium(long_grid_1d)


@pytest.fixture(scope="session")
def long_cached_1d(long_grid_1d, long_medium_1d):
    return assemble_cached(IdealOracle(long_grid_1d, long_medium_1d))


@pytest.fixture(scope="session")
def grid_2d():
    """Unit square, c = 1, 24 x 24 nodes, T = 0.6."""
    return build_grid((1.0, 1.0), 24, 0.6)


@pytest.fixture(scope="session")
def medium_2d(grid_2d):
    return build_medium(grid_2d)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def fine_lattice_1d():
    """Unit interval, c = 1, 256 nodes, T = 0.75: grid, medium, cached oracle and interior solver."""
    grid = build_grid(1.0, 256, 0.75)
    medium = build_medium(grid)
    return grid, medium, assemble_cached(IdealOracle(grid, medium)), ValidationSolver(grid, medium)
