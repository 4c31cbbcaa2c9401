import numpy as np
import pytest

from akcy.fields import Metric, standard_omega
from akcy.grid import Grid4, random_bandlimited
from akcy.structures import AKTriple, compatible_j_from_metric, standard_triple


def perturbed_triple(grid: Grid4, epsilon: float, seed: int = 11,
                     max_mode: int = 1) -> AKTriple:
    rng = np.random.default_rng(seed)
    b = random_bandlimited(grid, rng, max_mode=max_mode, shape=(4, 4))
    b = 0.5 * (b + np.swapaxes(b, -1, -2))
    b /= max(np.max(np.abs(b)), 1e-300)
    h = Metric(grid, np.eye(4) + epsilon * b, check_spd=False)
    omega = standard_omega(grid)
    return AKTriple.from_pair(omega, compatible_j_from_metric(omega, h))


@pytest.fixture(scope="session")
def grid8():
    return Grid4((8, 8, 8, 8))


@pytest.fixture(scope="session")
def flat8(grid8):
    return standard_triple(grid8)


@pytest.fixture(scope="session")
def pert8(grid8):
    return perturbed_triple(grid8, 1e-2)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(1)
