from __future__ import annotations

import pytest

from mapmind.cities import city_maps
from mapmind.synth import random_map


@pytest.fixture(scope="session")
def cities():
    return city_maps()


@pytest.fixture(scope="session")
def beijing(cities):
    return cities["Beijing"]


@pytest.fixture(scope="session")
def small_maps():
    """A fixed corpus of small random maps."""
    return [random_map(w, h, seed) for seed in range(12) for w, h in ((7, 7), (9, 8), (10, 10))]


ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def verdict():
    """Record and print one pass/fail line for an acceptance criterion."""

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"ACCEPTANCE {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
