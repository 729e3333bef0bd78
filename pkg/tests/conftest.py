import sys

import pytest

from spinchain import calibrate as cal
from spinchain.qcircuit import cartan_constants


@pytest.fixture(scope="session")
def consts():
    return cartan_constants()


@pytest.fixture(scope="session")
def calibrations(tmp_path_factory):
    """Every case calibrated once; shared by the slower tests."""
    return {name: cal.calibrate_case(name) for name in cal.PRESETS}


@pytest.fixture(autouse=True)
def _calib_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("SPINCHAIN_CALIB_DIR", str(tmp_path / "calib"))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
