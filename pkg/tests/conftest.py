"""Session fixtures: the canonical scalar scenario and its prepared workspace."""
from __future__ import annotations

import pytest

from perimax import prepare, scenario_from_dict

from helpers import canonical_dict


@pytest.fixture(scope="session")
def canonical():
    return scenario_from_dict(canonical_dict())


@pytest.fixture(scope="session")
def canonical_ws(canonical):
    return prepare(canonical)


@pytest.fixture(scope="session")
def canonical_offline(canonical_ws):
    from perimax import solve_offline

    return solve_offline(canonical_ws)
