import numpy as np
import pytest

from statqm.fields import FieldState, GridSpec, normalize


def smooth_state(rng, grid: GridSpec, t=0.0) -> FieldState:
    """Random node-free state: a Gaussian mixture density and a cubic-plus-sine phase."""
    x = grid.x
    rho = np.zeros(grid.n)
    for _ in range(rng.integers(1, 4)):
        mu = rng.uniform(-2, 2)
        sig = rng.uniform(0.7, 1.5)
        rho += rng.uniform(0.3, 1.0) * np.exp(-((x - mu) ** 2) / (2 * sig**2))
    rho = normalize(rho, grid)
    c = rng.uniform(-1, 1, size=4)
    s = c[0] * x + 0.2 * c[1] * x**2 + 0.02 * c[2] * x**3 + 0.3 * c[3] * np.sin(x)
    return FieldState(grid, rho, s, t)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def grid():
    return GridSpec.centered(10.0, 256)
