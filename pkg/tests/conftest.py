"""Shared fixtures: the expensive objects (profiles, operators, spectra)
are built once per session."""

import numpy as np
import pytest

from nls2d.grids import make_cartesian_grid, make_radial_grid
from nls2d.groundstate import NonlinearitySpec, continue_family, solve_ground_state
from nls2d.linearization import (LinearizedOperator, assemble_linearization,
                                 discrete_spectrum, tuned_synthetic_operator)

STABLE_QUINTIC = -0.02


@pytest.fixture(scope="session")
def radial_grid():
    return make_radial_grid(24.0, 768)


@pytest.fixture(scope="session")
def cubic():
    return NonlinearitySpec.cubic()


@pytest.fixture(scope="session")
def stable_beta():
    return NonlinearitySpec.cubic_quintic(STABLE_QUINTIC)


@pytest.fixture(scope="session")
def cubic_profile(cubic, radial_grid):
    return solve_ground_state(cubic, 1.0, grid=radial_grid)


@pytest.fixture(scope="session")
def stable_profile(stable_beta, radial_grid):
    return solve_ground_state(stable_beta, 1.0, grid=radial_grid)


@pytest.fixture(scope="session")
def stable_operator(stable_profile, stable_beta):
    return assemble_linearization(stable_profile, stable_beta)


@pytest.fixture(scope="session")
def stable_spectrum(stable_operator):
    return discrete_spectrum(stable_operator)


@pytest.fixture(scope="session")
def synthetic_operator(radial_grid):
    """Gaussian-well operator tuned so the internal mode sits at 0.55."""
    return tuned_synthetic_operator(omega=1.0, ratio=0.55, b_amplitude=0.2,
                                    grid=radial_grid)


@pytest.fixture(scope="session")
def synthetic_spectrum(synthetic_operator):
    return discrete_spectrum(synthetic_operator)


@pytest.fixture(scope="session")
def free_operator(radial_grid):
    n = radial_grid.n
    return LinearizedOperator(omega=1.0, grid=radial_grid,
                              a_values=np.zeros(n), b_values=np.zeros(n),
                              synthetic=True)


@pytest.fixture(scope="session")
def stable_family(stable_beta, radial_grid):
    return continue_family(stable_beta, 0.9, 1.1, 4, grid=radial_grid)


@pytest.fixture(scope="session")
def box_grid():
    return make_cartesian_grid(16.0, 256)


@pytest.fixture(scope="session")
def small_grid():
    return make_radial_grid(24.0, 512)


@pytest.fixture(scope="session")
def small_operator(small_grid):
    return tuned_synthetic_operator(omega=1.0, ratio=0.55, b_amplitude=0.2,
                                    grid=small_grid)


@pytest.fixture(scope="session")
def small_spectrum(small_operator):
    return discrete_spectrum(small_operator, n=4096)
