import functools
import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from mmphase import Parameters, compute_manifold  # noqa: E402


@functools.lru_cache(maxsize=None)
def manifold(eps, eta, x_min=1e-3, x_max=1e3, n_grid=600):
    return compute_manifold(Parameters(eps, eta), x_min, x_max, 1e-10, n_grid=n_grid)


@pytest.fixture(scope="session")
def get_manifold():
    return manifold


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[num][1])
