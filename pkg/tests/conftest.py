import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from noisykoop import _backend  # noqa: E402

BACKENDS = ["python"] + (["cython"] if _backend.compiled_kernel is not None else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "ACCEPTANCE_LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
