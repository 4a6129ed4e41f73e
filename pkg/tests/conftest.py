import pathlib

import numpy as np
import pytest

DATA = pathlib.Path(__file__).parent / "data"

# criterion label -> "PASS"/"FAIL", filled by the acceptance tests
ACCEPTANCE_RESULTS: dict[str, str] = {}


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def data_dir():
    return DATA


def pytest_runtest_makereport(item, call):
    label = item.get_closest_marker("criterion")
    if label is None or call.when != "call":
        return
    # parametrized cases share a label; any failing case fails the criterion
    if ACCEPTANCE_RESULTS.get(label.args[0]) != "FAIL":
        ACCEPTANCE_RESULTS[label.args[0]] = "PASS" if call.excinfo is None else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(ACCEPTANCE_RESULTS, key=lambda s: (len(s.split()[0]), s)):
        terminalreporter.write_line(f"{ACCEPTANCE_RESULTS[label]}  {label}")


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion reported in the summary")
