import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dynaprice.demand import EXAMPLE_PRICES, MarketSituation, example_model
from dynaprice.solver import SolverParams

sys.path.insert(0, os.path.dirname(__file__))

# compiled kernels make the first example slow; disable per-example deadlines
settings.register_profile("repo", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture(scope="session")
def model():
    return example_model()


@pytest.fixture(scope="session")
def situation():
    return MarketSituation(0.0, EXAMPLE_PRICES)


@pytest.fixture
def small_params():
    """A horizon and grid small enough for the pure-Python references."""
    return SolverParams(T=4, N=3, c=3.0, l=0.01, delta=0.99, A=tuple(np.arange(4.0, 14.01, 0.5)))


@pytest.fixture(scope="session")
def duopoly_values():
    """Optimal and heuristic value tables of the undercutting duopoly per delay."""
    from dynaprice.duopoly import REACTION_GRID, default_setup, strategy_values

    F, dp, m = default_setup()
    return {r: strategy_values(F, dp.with_reaction(r), m) for r in REACTION_GRID}


ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
