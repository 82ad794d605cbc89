from fractions import Fraction

import pytest

from cemech.mech_scc import build_scc_mechanism
from cemech.mech_scf import build_mechanism
from cemech.presets import load_preset

BILATERAL_STATES = [("L", "L"), ("H", "H"), ("H", "L"), ("L", "H")]


@pytest.fixture(scope="session")
def bilateral():
    return load_preset("bilateral")


@pytest.fixture(scope="session")
def bilateral_mech(bilateral):
    p = bilateral
    return build_mechanism(p.env, p.scf, p.scheme, p.lotteries)


@pytest.fixture(scope="session")
def scc3():
    return load_preset("scc3")


@pytest.fixture(scope="session")
def scc3_mech(scc3):
    return build_scc_mechanism(scc3.env, scc3.scc, scc3.lotteries)


def triple(q, tb, ts):
    """Alternative id of a bilateral-trade triple."""
    qs = "0.5" if Fraction(q) == Fraction(1, 2) else str(q)
    return f"({qs},{tb},{ts})"


# acceptance lines collected by tests/test_acceptance.py, echoed after the run
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: int(k.split("-")[1])):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
