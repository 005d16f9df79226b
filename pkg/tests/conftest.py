import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile(
    "default", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def grid():
    from polaron.pekar import default_grid
    return default_grid()


@pytest.fixture(scope="session")
def small_grid():
    from polaron.radial import build_radial_grid
    return build_radial_grid(20.0, 400)


@pytest.fixture(scope="session")
def pekar1(grid):
    from polaron.pekar import solve_pekar
    return solve_pekar(1.0, grid)


@pytest.fixture(scope="session")
def pt_solver():
    from polaron.binding import PTSolver
    return PTSolver()


@pytest.fixture(scope="session")
def internal_grid(pt_solver):
    return pt_solver.grid
