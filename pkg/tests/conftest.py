import warnings

import numpy as np
import pytest

from lyapctl.grid import Grid, WaveFunction
from lyapctl.hamiltonian import DipoleSpec, PotentialSpec, sample
from lyapctl.spectrum import solve_bound_states

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)


def pt_system(strength=2.0, points=1024, half_extent=20.0, dipole="gaussian_dipole", amplitude=1.0):
    grid = Grid(1, points, half_extent)
    v = sample(PotentialSpec("poschl_teller", 1, {"strength": strength}), grid)
    mu = sample(DipoleSpec(dipole, 1, {"amplitude": amplitude, "width": 2.0}), grid)
    with warnings.catch_warnings():
        # phi_1 of the strength-2 well reaches ~4e-10 at |x| = 20
        warnings.simplefilter("ignore", RuntimeWarning)
        sd = solve_bound_states(v, mu=mu)
    return grid, v, mu, sd


@pytest.fixture(scope="session")
def pt2():
    return pt_system()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_state(grid, rng):
    a = rng.normal(size=grid.size) + 1j * rng.normal(size=grid.size)
    a *= np.exp(-grid.radius.ravel() ** 2 / 20.0)
    return WaveFunction(grid, a / np.sqrt(grid.cell_volume * np.vdot(a, a).real))
