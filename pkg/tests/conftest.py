import numpy as np
import pytest

from compound_oracle.families import Family

# (number, title, passed, detail) rows filled in by test_acceptance.py
ACCEPTANCE = []


@pytest.fixture
def loc():
    return Family.gaussian_location()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num, title, passed, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {num:>2}. {title}: {detail}")
