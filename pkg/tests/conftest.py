import logging
import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from meanfield.config import SchemeConfig, reference_config  # noqa: E402
from meanfield.scheme import run_scheme  # noqa: E402

ACCEPTANCE_KEY = pytest.StashKey[dict]()


@pytest.fixture(scope="session")
def cfg():
    return reference_config()


@pytest.fixture(scope="session")
def small_flow(cfg):
    """Cheap scheme run shared by unit tests (read-only)."""
    return run_scheme(cfg, SchemeConfig(M=200, K=30, n_max=20, seed=3))


@pytest.fixture(scope="session")
def reference_run(cfg):
    """The full-size scheme run (M = 1000, K = 100, 100 iterations, seed 0) and its wall time."""
    logging.getLogger("meanfield.scheme").setLevel(logging.ERROR)
    t0 = time.perf_counter()
    fa = run_scheme(cfg, SchemeConfig())
    return fa, time.perf_counter() - t0


@pytest.fixture(scope="session")
def reference_flow(reference_run):
    return reference_run[0]


@pytest.fixture(scope="session")
def acceptance_log(request):
    return request.config.stash.setdefault(ACCEPTANCE_KEY, {})


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(ACCEPTANCE_KEY, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(results, key=lambda k: int(k[1:])):
        ok, detail = results[key]
        terminalreporter.write_line(f"{key} {'PASS' if ok else 'FAIL'}  {detail}")
