import numpy as np
import pytest

from noma_waterfill import kernels
from noma_waterfill.model import ClusterInstance, UserChannel

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def two_user():
    """h = (1, 4), one bit/s/Hz demand each, W_s = 1 Hz."""
    return ClusterInstance(0, (UserChannel(0, 1.0, 1.0), UserChannel(1, 4.0, 1.0)), 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def _backends():
    out = [pytest.param(kernels.pure, id="python")]
    compiled = kernels.compiled()
    if compiled is not None:
        out.append(pytest.param(compiled, id="cython"))
    return out


@pytest.fixture(params=_backends())
def backend(request):
    return request.param


@pytest.fixture
def acceptance_record():
    def record(number, title, passed, detail=""):
        status = "PASS" if passed else "FAIL"
        ACCEPTANCE_LINES.append(f"[{status}] criterion {number}: {title}" + (f"  ({detail})" if detail else ""))
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
