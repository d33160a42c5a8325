import pytest

from opmm.plant import get_model

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def model18():
    return get_model("komogortsev18")


@pytest.fixture
def model9():
    return get_model("komogortsev9")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
