import numpy as np
import pytest

from ocbfnav.certificates import CertificateModel
from ocbfnav.controller import ControllerConfig
from ocbfnav.geometry import Box, Circle, Environment, Pose

ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance(request, capsys):
    """Record and print one PASS/FAIL line for an acceptance criterion."""
    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
        request.config.stash[ACCEPTANCE].append(line)
        with capsys.disabled():
            print(f"\n{line}")
        return ok
    return record


@pytest.fixture
def prior_model():
    return CertificateModel.prior_only()


@pytest.fixture
def random_model():
    """Model whose heads output nonzero values, so learned terms are exercised."""
    m = CertificateModel.init(3)
    rng = np.random.default_rng(11)
    for net in m.nets():
        for p in net.params():
            p += 0.05 * rng.standard_normal(p.shape)
    return m


@pytest.fixture
def ctrl():
    return ControllerConfig()


@pytest.fixture
def corridor_env():
    """Open 2 m wide corridor along +x with the goal straight ahead."""
    obstacles = (Box((0.0, 2.0), (6.0, 2.2)), Box((0.0, -0.2), (6.0, 0.0)))
    return Environment(obstacles, Box((-1.0, -1.0), (7.0, 3.0)), Pose(1.0, 1.0, 0.0), (4.0, 1.0),
                       walls=False)


@pytest.fixture
def single_circle_env():
    return Environment((Circle((3.0, 0.0), 1.0),), Box((-5.0, -5.0), (8.0, 5.0)),
                       Pose(0.0, 0.0, 0.0), (0.0, 4.0), walls=False)
