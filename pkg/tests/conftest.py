import numpy as np
import pytest

from prodhardy import ProductSpace, make_space


def line_space(coords, weights=None):
    pts = np.asarray(coords, dtype=float)
    return make_space(np.abs(pts[:, None] - pts[None, :]), weights)


@pytest.fixture(scope="session")
def canon():
    """The 4-point line {0, 1, 2, 10} with unit weights."""
    return line_space([0.0, 1.0, 2.0, 10.0])


@pytest.fixture(scope="session")
def two_pt():
    return line_space([0.0, 1.0])


@pytest.fixture(scope="session")
def line8():
    return line_space(np.arange(8.0))


@pytest.fixture(scope="session")
def pspace8(line8):
    """8 x 8 product of unit lines, desk delta = 1/4."""
    return ProductSpace(line8, line8, delta=0.25)


@pytest.fixture(scope="session")
def micro22(two_pt):
    """2 x 2 product of 2-point spaces (the 9-ball-pair micro instance)."""
    return ProductSpace(two_pt, two_pt, delta=0.5)
