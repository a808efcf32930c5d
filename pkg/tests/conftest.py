import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from carma_hawkes.presets import hawkes_params, reference_model  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def ref_models():
    return {f: reference_model(f) for f in ("hawkes", "carma21", "carma31")}


@pytest.fixture(scope="session")
def ref_params():
    return {f: hawkes_params(f) for f in ("hawkes", "carma21", "carma31")}


@pytest.fixture
def record_criterion():
    def record(number, name, passed, detail):
        line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
