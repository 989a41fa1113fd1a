import os

import pytest
from hypothesis import HealthCheck, settings

from canonseg.core import Label, tree_from_segments

W, P, S = Label.WORD, Label.PREFIX, Label.SUFFIX

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

UNTESTABLY_U = "untestablely"
UNTESTABLY_SEXPR = "(Word (Word (Prefix un) (Word (Word test) (Suffix able))) (Suffix ly))"


@pytest.fixture
def untestably():
    """[[un [[test] able]] ly] over the restored form."""
    shape = (W, (W, (P, "un"), (W, (W, "test"), (S, "able"))), (S, "ly"))
    return tree_from_segments(shape), UNTESTABLY_U


@pytest.fixture
def unlockable_c():
    """[[un [lock]] able]: prefix attaches first."""
    shape = (W, (W, (P, "un"), (W, "lock")), (S, "able"))
    return tree_from_segments(shape), "unlockable"


@pytest.fixture
def unlockable_d():
    """[un [[lock] able]]: suffix attaches first."""
    shape = (W, (P, "un"), (W, (W, "lock"), (S, "able")))
    return tree_from_segments(shape), "unlockable"


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_report():
    """Record one PASS/FAIL line per acceptance criterion."""

    def record(number: int, name: str, passed: bool, detail: str) -> None:
        line = f"{'PASS' if passed else 'FAIL'} criterion {number:>2} [{name}] {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
