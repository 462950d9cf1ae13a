import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from saferoute.synthetic import grid_city, two_corridor_city  # noqa: E402


@pytest.fixture(scope="session")
def grid8():
    return grid_city(8, 8)


@pytest.fixture(scope="session")
def grid4():
    return grid_city(4, 4)


@pytest.fixture(scope="session")
def corridor_city():
    return two_corridor_city()


_ACCEPTANCE: list[tuple[str, str]] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if item.module.__name__.endswith("test_acceptance") and (rep.when == "call" or rep.failed):
        doc = (item.function.__doc__ or item.name).strip().splitlines()[0]
        _ACCEPTANCE.append(("PASS" if rep.passed else "FAIL", doc))


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for status, doc in _ACCEPTANCE:
            terminalreporter.write_line(f"{status}  {doc}")
