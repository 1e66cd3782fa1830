import numpy as np
import pytest

from oscmax import funcs
from oscmax.grid import Box, GridFunction


def unit(n):
    return Box([0.0] * n, [1.0] * n)


def random_grid(res, seed, smooth=False):
    """Seeded grid on the unit box: Gaussian noise, or a smooth trig polynomial."""
    dom = unit(len(res))
    if smooth:
        return GridFunction(dom, funcs.random_smooth_values(dom, res, seed))
    return GridFunction(dom, np.random.default_rng(seed).standard_normal(res))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_KEY = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance criterion's outcome; printed in the terminal summary."""
    results = request.config.stash[ACCEPTANCE_KEY]

    def record(n: int, ok: bool, detail: str):
        results[n] = (bool(ok), detail)
        print(f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(ACCEPTANCE_KEY, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, detail = results[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
