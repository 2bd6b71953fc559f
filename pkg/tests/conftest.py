import pytest

from donorspin.material import MaterialParameters, derive_donor


@pytest.fixture
def mat():
    return MaterialParameters()


@pytest.fixture
def derived(mat):
    return derive_donor(mat)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[n])
