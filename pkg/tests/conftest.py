import pytest

from fabricflow.fabric import load_config
from fabricflow.pipeline import default_pipeline


@pytest.fixture(scope="session")
def wire():
    return load_config("wire-only")


@pytest.fixture(scope="session")
def calibrated():
    return load_config("calibrated")


@pytest.fixture
def pipe2(wire):
    return default_pipeline(wire, 2)


_ACCEPTANCE: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _ACCEPTANCE[name] = "PASS" if report.outcome == "passed" else report.outcome.upper()


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _ACCEPTANCE.items():
        terminalreporter.write_line(f"{outcome:5s} {name}")
