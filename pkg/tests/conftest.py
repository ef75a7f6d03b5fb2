import numpy as np
import pytest

from stochfield.instances import two_state_generator, two_state_signal


@pytest.fixture
def rng():
    return np.random.default_rng(20261014)


@pytest.fixture
def G2():
    return two_state_generator(1.0, 2.0)


@pytest.fixture
def gamma2():
    return two_state_signal()


@pytest.fixture
def chain3():
    """x1 -> x2 -> x3 with private and channel sizes 2."""
    from stochfield.topology import build_topology

    return build_topology([("x1", 2), ("x2", 2), ("x3", 2)], [("x1", "x2", 2), ("x2", "x3", 2)])


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = next((m for name, m in sys.modules.items() if name.endswith("test_acceptance")), None)
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
