"""Shared fixtures: grids, seeded generators and small phantoms."""
import logging

import numpy as np
import pytest

from app.services.fields.field import Grid
from app.services.fields.phantom import gaussian_spec, make_phantom, random_phantom_spec
from app.services.transforms.directions import default_direction_grid

logging.getLogger("app").setLevel(logging.WARNING)

SEED = 20240611


@pytest.fixture
def rng():
    return np.random.default_rng(SEED)


@pytest.fixture(scope="session")
def grid2():
    return Grid(2, 6.0, 64)


@pytest.fixture(scope="session")
def dgrid2(grid2):
    return default_direction_grid(grid2)


@pytest.fixture(scope="session")
def gaussian2(grid2):
    return make_phantom(grid2, 0, gaussian_spec(2))


@pytest.fixture(scope="session")
def phantom_factory(grid2):
    """Random phantom of order m on the primary grid, reproducible per (m, seed)."""

    def build(m, seed=SEED, grid=None):
        grid = grid or grid2
        spec = random_phantom_spec(grid.n, m, np.random.default_rng(seed))
        return make_phantom(grid, m, spec)

    return build
