import math

import numpy as np
import pytest
from hypothesis import settings

from diraclab.assembly import assemble_dirac, assemble_mass
from diraclab.domain import Geometry, build_grid
from diraclab.spectral import solve_weighted
from diraclab.weights import WeightField

settings.register_profile("diraclab", max_examples=25, deadline=None)
settings.load_profile("diraclab")

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def solve(geometry, W=None, k_max=6):
    grid = build_grid(geometry)
    D = assemble_dirac(geometry, grid)
    if W is None:
        W = WeightField.identity(grid)
    elif callable(W):
        W = W(grid)
    return solve_weighted(D, assemble_mass(W, grid), k_max, geometry.kernel_dim)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ALL_1D = [
    pytest.param(Geometry.circle(resolution=64), id="circle-periodic"),
    pytest.param(Geometry.circle(resolution=64, twist=0.5), id="circle-antiperiodic"),
    pytest.param(Geometry.interval(math.pi, 64, 1), id="interval+"),
    pytest.param(Geometry.interval(math.pi, 64, -1), id="interval-"),
]
