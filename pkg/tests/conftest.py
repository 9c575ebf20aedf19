import pytest

from ffrcoord import gridsim


@pytest.fixture(scope="session")
def n5_runs():
    """Nonlinear runs of the three N5 variants, shared across test modules."""
    out = {}
    for variant in ("hydro_only", "wind_hydro", "sensitivity_50pct"):
        sc = gridsim.n5_scenario(variant)
        out[variant] = (sc, gridsim.simulate(sc))
    return out


_ACCEPTANCE: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
