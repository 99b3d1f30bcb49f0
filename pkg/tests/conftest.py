import numpy as np
import pytest

from stackrl.dynamics import Dynamics
from stackrl.envs import double_integrator, robot_env


def zero_dynamics(n=3, m=2):
    return Dynamics(n, m, lambda x, u: np.zeros(np.broadcast_shapes(np.shape(x), np.shape(u)[:-1] + (n,))), "zero")


def growth_dynamics(rate=1.0):
    """1-D ``xdot = rate * x`` with a dummy action."""
    return Dynamics(1, 1, lambda x, u: rate * np.asarray(x) + 0.0 * np.asarray(u)[..., :1], "growth")


@pytest.fixture
def robot():
    return robot_env()


@pytest.fixture
def lqr():
    return double_integrator()


# Acceptance criteria register their verdicts here; the summary hook below
# prints one line per criterion after the run, independent of output capture.
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
