import sys
from pathlib import Path

import numpy as np
import pytest

import thinlab as tl

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(scope="session")
def grid33():
    return tl.build_grid(2, 33)


@pytest.fixture(scope="session")
def grid65():
    return tl.build_grid(2, 65)


@pytest.fixture(scope="session")
def identity_A():
    return tl.CoefficientField.identity(2)


@pytest.fixture(scope="session")
def variable_A():
    return tl.CoefficientField(
        [["1 + x1**2/4", "0"], ["0", "1"]],
        ellipticity=(1.0, 1.25),
        lipschitz_bound=0.5,
    )


@pytest.fixture(scope="session")
def spec_two_penalty(grid65, identity_A):
    """p=2, k+ = 1, k- = 2, h = 0, A = I, g = x1 on m = 65."""
    return tl.ProblemSpec(
        grid=grid65, A=identity_A, k_plus="1", k_minus="2", h="0",
        p=2, kappa=2, dirichlet_g="x1",
    )


@pytest.fixture(scope="session")
def solved_two_penalty(spec_two_penalty):
    energy = tl.assemble(spec_two_penalty)
    zero = tl.ScalarField(spec_two_penalty.grid, np.zeros(spec_two_penalty.grid.shape))
    return energy, tl.minimize(energy, zero)


@pytest.fixture(scope="session")
def seeded_quadratic(grid65, identity_A):
    """Zero-flux Neumann solve reproducing x1^2 - xn^2 on the grid."""
    spec = tl.ProblemSpec(
        grid=grid65, A=identity_A, k_plus="0", k_minus="0", h="0",
        p=2, kappa=3, dirichlet_g="x1**2 - x2**2",
    )
    result = tl.minimize(tl.assemble(spec), tl.ScalarField(grid65, np.zeros(grid65.shape)))
    return spec, result
