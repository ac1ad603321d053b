import pathlib

import numpy as np
import pytest

ROOT = pathlib.Path(__file__).resolve().parent.parent
GOLDEN_DIR = ROOT / "tests" / "golden"
CONFIG_DIR = ROOT / "configs"

# acceptance outcomes, filled by test_acceptance.py via the `criterion` fixture
ACCEPTANCE = []


@pytest.fixture
def criterion():
    def record(number, name, passed, detail=""):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {name}"
        if detail:
            line += f" | {detail}"
        ACCEPTANCE.append((number, line))
        return passed

    return record


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE, key=lambda item: item[0]):
        terminalreporter.write_line(line)
