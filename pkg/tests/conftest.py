import math

import numpy as np
import pytest

from excursion_lab import GeometrySpec, build_mesh, make_geometry, orthonormal_basis
from excursion_lab.geometry import ELLIPTIC, PROJECTIVE

# acceptance results collected here are echoed in the terminal summary
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


def make_basis(family=PROJECTIVE, N=4, m=1, degL=1, tau=1j, order=None):
    geo = make_geometry(GeometrySpec(family=family, N=N, m=m, tau=tau, degL=degL))
    return geo, orthonormal_basis(geo, order)


@pytest.fixture(scope="session")
def cp1_n4():
    geo, onb = make_basis(PROJECTIVE, 4)
    return geo, onb, build_mesh(geo, 0.2 / math.sqrt(4))


@pytest.fixture(scope="session")
def elliptic_d3():
    geo, onb = make_basis(ELLIPTIC, 1, degL=3)
    return geo, onb, build_mesh(geo, 0.2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
