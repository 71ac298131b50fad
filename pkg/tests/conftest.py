from __future__ import annotations

import numpy as np
import pytest

from decouple import benchmarks
from decouple.fbode import global_solve


@pytest.fixture(scope="session")
def scalar_spec():
    return benchmarks.load("scalar-lq")


@pytest.fixture(scope="session")
def diag_spec():
    return benchmarks.load("diag-lq")


@pytest.fixture(scope="session")
def saturating_spec():
    return benchmarks.load("saturating")


@pytest.fixture(scope="session")
def scalar_solution(scalar_spec):
    return global_solve(scalar_spec, np.array([1.0]), "recursive", 1e-8)


@pytest.fixture(scope="session")
def diag_solution(diag_spec):
    return global_solve(diag_spec, np.array([1.0, 1.0]), "recursive", 1e-8)


@pytest.fixture(scope="session")
def saturating_solution(saturating_spec):
    return global_solve(saturating_spec, np.array([1.0, 1.0]), "recursive", 1e-8)


@pytest.fixture(scope="session")
def mean_field():
    return benchmarks.load_mean_field("mf-scalar")


_CRITERIA: list[str] = []


@pytest.fixture
def record():
    """Log a one-line pass/fail verdict for an acceptance criterion."""
    def _record(number: int, title: str, ok: bool, detail: str) -> bool:
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        _CRITERIA.append(line)
        print(line)
        return ok
    return _record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA):
            terminalreporter.write_line(line)
