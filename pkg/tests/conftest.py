import os

import pytest

from trailer_nav.grid_world import OccupancyGrid
from trailer_nav.models import TrackerConfig, VehicleParams

SLOW_ENV = 'TRAILERNAV_SLOW'


def pytest_configure(config):
    config.addinivalue_line('markers', f'slow: long acceptance runs, enabled with {SLOW_ENV}=1')


def pytest_collection_modifyitems(config, items):
    if os.environ.get(SLOW_ENV) == '1':
        return
    skip_slow = pytest.mark.skip(reason=f'set {SLOW_ENV}=1 to run')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def vehicle():
    return VehicleParams()


@pytest.fixture
def tracker_cfg():
    return TrackerConfig()


@pytest.fixture
def open_field():
    """10 m x 10 m grid without obstacles."""
    return OccupancyGrid.empty(200, 200, 0.05)


@pytest.fixture
def corridor():
    """10 m x 3 m corridor with 0.2 m walls along both long sides."""
    grid = OccupancyGrid.empty(200, 60, 0.05)
    walls = [(ix, iy) for ix in range(200) for iy in list(range(4)) + list(range(56, 60))]
    return grid.with_occupied(walls)
