import shutil
import time
from types import SimpleNamespace
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from bose_phonon_kinetics.collision import CollisionTables
from bose_phonon_kinetics.config import load_config
from bose_phonon_kinetics.grid import RadialGrid
from bose_phonon_kinetics.runner import run

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"
SHIPPED = ("equilibrium", "conservation", "bump_relaxation", "power_tail",
           "above_threshold", "depletion")


@pytest.fixture(scope="session")
def grid128():
    return RadialGrid(128, 10.0)


@pytest.fixture(scope="session")
def tables128(grid128):
    return CollisionTables(grid128)


@pytest.fixture(scope="session")
def grid256():
    return RadialGrid(256, 25.0)


@pytest.fixture(scope="session")
def tables256(grid256):
    return CollisionTables(grid256)


@pytest.fixture(scope="session")
def shipped_run(tmp_path_factory):
    """Run a shipped config once per session in its own directory.

    The result has ``outcome``, ``directory`` (outputs land next to the
    copied config) and the wall-clock ``seconds`` of the run.
    """
    cache = {}

    def get(name):
        if name not in cache:
            d = tmp_path_factory.mktemp(name)
            shutil.copy(CONFIG_DIR / f"{name}.cfg", d)
            cfg = load_config(d / f"{name}.cfg")
            start = time.perf_counter()
            outcome = run(cfg)
            cache[name] = SimpleNamespace(outcome=outcome, directory=d,
                                          seconds=time.perf_counter() - start)
        return cache[name]

    return get


def random_state(grid, rng, scale=1.0, decay=1.0):
    """Positive random values with an exponential envelope."""
    return scale * rng.random(grid.n_nodes) * np.exp(-decay * grid.nodes)


ACCEPTANCE_LINES = []


@pytest.fixture
def verdict():
    """Record and print one PASS/FAIL line for an acceptance criterion."""

    def say(number, title, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'}  criterion {number:>2}: {title}"
        if detail:
            line += f"  [{detail}]"
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        return ok

    return say


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
