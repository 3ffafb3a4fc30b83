"""Shared fixtures: model loaders and a session-wide matrix of solved programs."""

import json
import pathlib
import time

import pytest

from privsynth import load_model, synthesize
from privsynth.model import with_overrides

FIXTURES = pathlib.Path(__file__).resolve().parent.parent / "fixtures"
ORACLES = pathlib.Path(__file__).resolve().parent / "oracles"


def fixture_path(name: str) -> str:
    return str(FIXTURES / f"{name}.json")


@pytest.fixture(scope="session")
def scalar_case():
    return load_model(fixture_path("scalar"))


@pytest.fixture(scope="session")
def twostate_case():
    return load_model(fixture_path("twostate"))


@pytest.fixture(scope="session")
def reactor_case():
    return load_model(fixture_path("reactor4"))


@pytest.fixture(scope="session")
def scalar_oracle():
    with open(ORACLES / "scalar_oracle.json", encoding="utf-8") as fh:
        return json.load(fh)


@pytest.fixture(scope="session")
def scalar_report(scalar_case):
    model, req = scalar_case
    return synthesize(model, req)


@pytest.fixture(scope="session")
def twostate_report(twostate_case):
    model, req = twostate_case
    return synthesize(model, req)


@pytest.fixture(scope="session")
def reactor_grid(reactor_case):
    """Uniform 5x5 budget grid on the four-state fixture, with wall time."""
    model, req = reactor_case
    grid = [1.0, 2.0, 3.0, 4.0, 5.0]
    t0 = time.monotonic()
    reports = {}
    for ey in grid:
        for eu in grid:
            m, r = with_overrides(model, req, eps_y=ey, eps_u=eu)
            reports[(ey, eu)] = synthesize(m, r)
    elapsed = time.monotonic() - t0
    return grid, reports, elapsed


@pytest.fixture(scope="session")
def solve_matrix(scalar_case, twostate_case, reactor_case, reactor_grid):
    """Every solved program of the session: (label, model, request, report).

    Reuses the 25 grid solves and adds a 3x3 budget sweep on each of the two
    small fixtures, so certificate-style checks run over 40+ optima.
    """
    out = []
    for label, (model, req) in (("scalar", scalar_case), ("twostate", twostate_case)):
        for ey in (0.5, 1.0, 2.0):
            for eu in (0.5, 1.0, 2.0):
                m, r = with_overrides(model, req, eps_y=ey, eps_u=eu)
                out.append((f"{label}-ey{ey}-eu{eu}", m, r, synthesize(m, r)))
    model, req = reactor_case
    _, reports, _ = reactor_grid
    for (ey, eu), rep in sorted(reports.items()):
        m, r = with_overrides(model, req, eps_y=ey, eps_u=eu)
        out.append((f"reactor4-ey{ey}-eu{eu}", m, r, rep))
    return out
