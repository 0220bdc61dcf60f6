"""Shared fixtures: canonical walks and (expensive) exact ledgers, computed
once per session."""

from __future__ import annotations

import numpy as np
import pytest

from rwwis import builtin_walk, moment_set, reversed_walk, stationary_measure
from rwwis.exact import renewal_solve, return_matrices

WALK_NAMES = ("ssrw1d", "w2-antipersistent", "ssrw2d", "ssrw3d")


@pytest.fixture(scope="session")
def walks():
    return {name: builtin_walk(name) for name in WALK_NAMES}


@pytest.fixture(scope="session")
def moments(walks):
    return {name: moment_set(spec) for name, spec in walks.items()}


_LEDGER_PLAN = {"ssrw1d": 20000, "w2-antipersistent": 20000, "ssrw2d": 4096, "ssrw3d": 4096}


@pytest.fixture(scope="session")
def exact_cache():
    """Lazily computed ``(U_reversed, ledger)`` per canonical walk (torus engine)."""
    store = {}

    def get(name):
        if name not in store:
            spec = builtin_walk(name)
            N = _LEDGER_PLAN[name]
            rev = reversed_walk(spec, stationary_measure(spec.Q))
            U = return_matrices(rev, N, "torus")
            store[name] = (U, renewal_solve(spec, N, U=U))
        return store[name]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    """Print the per-criterion PASS/FAIL lines collected by the acceptance tests."""
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
