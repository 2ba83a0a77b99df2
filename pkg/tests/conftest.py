import numpy as np
import pytest

from modadc import _kernels

BACKENDS = ["python"]
try:
    _kernels.get_backend("cython")
    BACKENDS.append("cython")
except ImportError:
    pass

_CRITERIA = []


@pytest.fixture(params=BACKENDS)
def kernels(request):
    return _kernels.get_backend(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def criterion():
    """Record one acceptance line: ``criterion(label, passed, detail)``."""

    def record(label, passed, detail=""):
        _CRITERIA.append((label, bool(passed), detail))
        print(f"{'PASS' if passed else 'FAIL'} {label}: {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in _CRITERIA:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} {label}: {detail}")
