import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from flowpde.grids import Grid


@pytest.fixture
def grid8():
    return Grid("spatial2d", 8, 8)


@pytest.fixture
def grid16():
    return Grid("spatial2d", 16, 16)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
