from __future__ import annotations

import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fairtrade.dispatch import network_baseline, run_admm, solve_centralized  # noqa: E402
from fairtrade.profiles import PriceProfile  # noqa: E402
from fairtrade.scenario import load_scenario, shipped_scenario_path, shipped_scenarios  # noqa: E402

ACCEPTANCE = pytest.StashKey[dict]()
SWEEP_PRICES = (0.1, 0.18, 0.2)


def pytest_configure(config):
    config.stash[ACCEPTANCE] = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(lines):
        ok, text = lines[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {text}")


@pytest.fixture
def acceptance(request):
    """``record(n, ok, text)`` stores one summary line per criterion."""
    store = request.config.stash[ACCEPTANCE]

    def record(n, ok, text):
        store[n] = (bool(ok), text)
        print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {text}")
        return ok

    return record


class Solved:
    """Lazily solved results of one scenario, shared by the whole session."""

    def __init__(self, name):
        self.name = name
        self.s = load_scenario(shipped_scenario_path(name))
        self._central = {}
        self._admm = {}
        self._baseline = None
        self.timings = {}

    @property
    def baseline(self):
        if self._baseline is None:
            self._baseline = network_baseline(self.s)
        return self._baseline

    @property
    def J_nt(self):
        return {h: b.J for h, b in self.baseline.items()}

    def central(self, price):
        if price not in self._central:
            t = time.perf_counter()
            self._central[price] = solve_centralized(self.s, PriceProfile.uniform(self.s, price))
            self.timings[("central", price)] = time.perf_counter() - t
        return self._central[price]

    def admm(self, price):
        if price not in self._admm:
            t = time.perf_counter()
            self._admm[price] = run_admm(self.s, PriceProfile.uniform(self.s, price))
            self.timings[("admm", price)] = time.perf_counter() - t
        return self._admm[price]

    def all_results(self):
        return list(self._central.values()) + list(self._admm.values())


_CACHE = {}


def solved(name) -> Solved:
    if name not in _CACHE:
        _CACHE[name] = Solved(name)
    return _CACHE[name]


@pytest.fixture(scope="session")
def threehub():
    return solved("threehub")


@pytest.fixture(scope="session")
def toy():
    return solved("twohub_toy")


@pytest.fixture(scope="session")
def selfsufficient():
    return solved("selfsufficient")


@pytest.fixture(scope="session")
def disconnected():
    return solved("disconnected")


@pytest.fixture(scope="session", params=shipped_scenarios())
def every_scenario(request):
    return solved(request.param)
