import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from freezewave.core import Field, Grid1D
from freezewave.freeze1d import Problem1D, TemplateProfile, quintic_nagumo_f, solve_steady

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

QNE_ROOTS = [0.0, 0.4, 0.5, 0.85, 1.0]

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def qne_wave(half_length: float, h: float = 0.3):
    prob = Problem1D.scalar_reaction(quintic_nagumo_f(QNE_ROOTS))
    grid = Grid1D.from_spacing(-half_length, half_length, h)
    x = grid.nodes()
    guess = Field(grid, 0.5 * (np.tanh(x) + 1.0))
    v, mu, _ = solve_steady(prob, guess, 0.07, TemplateProfile.from_field(guess))
    return prob, v, mu


@pytest.fixture(scope="session")
def qne_front_100():
    return qne_wave(100.0)
