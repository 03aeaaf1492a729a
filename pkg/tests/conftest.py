import pytest

from twistlab import construction, dynamics
from twistlab.genfun import ImplicitSolveConfig


@pytest.fixture(scope="session")
def spec():
    return construction.CounterexampleSpec()


@pytest.fixture(scope="session")
def solve_cfg():
    return ImplicitSolveConfig()


@pytest.fixture(scope="session")
def strip_map(spec, solve_cfg):
    return construction.build_strip_map(spec, solve_cfg)


@pytest.fixture(scope="session")
def annulus_map(spec, solve_cfg):
    return construction.build_annulus_map(spec, solve_cfg)


@pytest.fixture(scope="session")
def catalog(solve_cfg):
    return dynamics.reference_maps(solve_cfg)
