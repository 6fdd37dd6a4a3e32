from __future__ import annotations

import functools

import pytest

from osnma_ttfaf.scenario import preset
from osnma_ttfaf.simulator import generate


@functools.lru_cache(maxsize=None)
def simulated(name: str, seed: int = 0, duration: int | None = None):
    from dataclasses import replace

    cfg = preset(name, seed)
    if duration is not None:
        cfg = replace(cfg, duration_s=duration)
    return generate(cfg)


@pytest.fixture(scope="session")
def ideal():
    return simulated("ideal_4conn", 0)


@pytest.fixture(scope="session")
def open_sky_4c4d():
    return simulated("open_sky_4c4d", 0)


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
