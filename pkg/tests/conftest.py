import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nilsym.catalog import catalog_potential, parse_preset
from nilsym.grid import Grid
from nilsym.sym import sample_surface

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# criterion number -> (title, [(ok, detail), ...]); filled by test_acceptance
ACCEPTANCE_LINES = {}


def acceptance_line(num):
    title, checks = ACCEPTANCE_LINES[num]
    verdict = "PASS" if all(ok for ok, _ in checks) else "FAIL"
    details = "; ".join(("" if ok else "[failed] ") + d for ok, d in checks)
    return f"criterion {num:2d} {verdict}  {title}: {details}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(acceptance_line(key))


@pytest.fixture(scope="session")
def umbrella_small():
    grid = Grid(0j, (0.2, 0.2), (21, 21))
    meshes, ff = sample_surface(catalog_potential(parse_preset("umbrella")), grid, [1.0, 1j])
    return grid, meshes, ff


@pytest.fixture(scope="session")
def paraboloid_small():
    grid = Grid(0j, (0.2, 0.2), (21, 21))
    meshes, ff = sample_surface(catalog_potential(parse_preset("paraboloid")), grid, [1.0, 1j])
    return grid, meshes, ff


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
