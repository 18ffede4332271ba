import numpy as np
import pytest

from seglab.exact import exact_field, psi
from seglab.geometry import build_grid, harmonic_extension, sample_boundary
from seglab.solver import Mode, SolverConfig, solve_hard_constraint
from seglab.verify import SolveCache


@pytest.fixture(scope="session")
def disc64():
    return build_grid("disc", 64)


@pytest.fixture(scope="session")
def exact64(disc64):
    return exact_field(disc64)


@pytest.fixture(scope="session")
def exact256():
    return exact_field(build_grid("disc", 256))


@pytest.fixture(scope="session")
def psi_bdata64(disc64):
    return sample_boundary(disc64, psi)


@pytest.fixture(scope="session")
def hard64(disc64, psi_bdata64):
    """Hard-constraint ψ-trace solve on the n=64 disc (about a second)."""
    init = harmonic_extension(disc64, psi_bdata64)
    return solve_hard_constraint(disc64, psi_bdata64, init, SolverConfig(mode=Mode.HARD_CONSTRAINT))


@pytest.fixture(scope="session")
def solves128():
    """The n=128 penalised ladder followed by the warm-started hard solve (a couple of minutes)."""
    cache = SolveCache()
    cache.ladder
    cache.converged
    return cache


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
