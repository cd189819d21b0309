import sys

import numpy as np
import pytest

from iocner.corpus import DEFAULT_SCHEME
from iocner.features import default_config


@pytest.fixture
def scheme():
    return DEFAULT_SCHEME


@pytest.fixture
def fconfig():
    return default_config()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    results = getattr(acceptance, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        terminalreporter.write_line(results[number])
