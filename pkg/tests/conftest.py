import numpy as np
import pytest

from eikonal.grid import GridDomain, PointSource, SourceSet


@pytest.fixture
def small_domain():
    return GridDomain(11, 11, 0.1)


@pytest.fixture
def center_point():
    return SourceSet((PointSource(0.5, 0.5),))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
