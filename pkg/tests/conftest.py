import numpy as np
import pytest

from klstab.gaussian import MultivariateGaussian
from klstab.random_instances import make_rng, random_gaussian


@pytest.fixture
def rng():
    return make_rng(20261015)


@pytest.fixture
def random_pair_2d(rng):
    return random_gaussian(2, rng), random_gaussian(2, rng)


def e1(d):
    v = np.zeros(d)
    v[0] = 1.0
    return v


def iso(mean, d=None):
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    return MultivariateGaussian(mean, np.eye(d or mean.size))


ACCEPTANCE_LINES = {}


def record_acceptance(number, title, ok, detail):
    line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
