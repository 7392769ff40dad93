"""Shared fixtures and the acceptance summary printed at the end of the run."""

from __future__ import annotations

import pytest

from lhyvortex.geometry import Grid
from lhyvortex.groundstate import solve_ground_state, solve_qm

ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def record(criterion: str, passed: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance")

    def key(name: str):
        head = name.split()[0]
        return (int("".join(c for c in head if c.isdigit()) or 0), name)

    for name in sorted(ACCEPTANCE, key=key):
        ok, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"criterion {name}: {'PASS' if ok else 'FAIL'} {detail}")


@pytest.fixture(scope="session")
def acceptance():
    return record


@pytest.fixture(scope="session")
def qm():
    return {m: solve_qm(m) for m in (0, 1, 2)}


@pytest.fixture(scope="session")
def radial_fine():
    return Grid.radial(8000, 80.0)


@pytest.fixture(scope="session")
def ground_2d(qm, radial_fine):
    """Minimizers at 1.5 ||Q_m||^2 on the fine radial grid."""
    return {m: solve_ground_state(radial_fine, m, 1.5 * qm[m].mass) for m in (0, 1, 2)}


@pytest.fixture(scope="session")
def radial_dyn():
    return Grid.radial(2000, 40.0)


@pytest.fixture(scope="session")
def ground_dyn(qm, radial_dyn):
    """Minimizers on the grid used for time evolution."""
    return {m: solve_ground_state(radial_dyn, m, 1.5 * qm[m].mass) for m in (0, 1)}
