import os

import numpy as np
import pytest


CRITERIA: dict[int, str] = {}


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run full-resolution long simulations")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow") or os.environ.get("GSAV_RUNSLOW") == "1":
        return
    skip = pytest.mark.skip(reason="long run: use --runslow or GSAV_RUNSLOW=1")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[k])


@pytest.fixture
def record_criterion():
    def _record(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}"
        CRITERIA[number] = line
        print(line)
    return _record


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
