import numpy as np
import pytest

from amp_lab.model import NoiseSpec, make_instance

_ACCEPTANCE = []


def record(criterion, passed, detail):
    line = f"ACCEPTANCE C{criterion} {'PASS' if passed else 'FAIL'} {detail}"
    _ACCEPTANCE.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)


@pytest.fixture
def small_sparse():
    return make_instance(60, 40, 10, seed=11)


@pytest.fixture
def small_robust():
    return make_instance(60, 40, 10, noise_spec=NoiseSpec.for_robust(60), seed=11)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def accept():
    """Callable ``accept(criterion, passed, detail)`` that logs one summary line."""
    return record
