import sys

import pytest
from hypothesis import settings

from constraint_forge.mechanics import LagrangianSystem, legendre_analyze

settings.register_profile("default", deadline=None, derandomize=True)
settings.load_profile("default")

EX1_L = "(1/2)*((q1 + v2 + v3)^2 + (v4 - v2)^2 - 2*q2*q4)"
EX2_L = "(1/2)*(v1 + v2)^2 + q1 + q2*z"


@pytest.fixture(scope="session")
def ex1():
    system = LagrangianSystem.from_text(EX1_L, 4)
    return system, legendre_analyze(system)


@pytest.fixture(scope="session")
def ex2():
    system = LagrangianSystem.from_text(EX2_L, 2, "contact")
    return system, legendre_analyze(system)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(mod.RESULTS):
        for line in mod.RESULTS[number]:
            terminalreporter.write_line(line)
