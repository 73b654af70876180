import numpy as np
import pytest


def pytest_configure(config):
    config._acceptance = {}


@pytest.fixture(scope="session")
def acceptance(request):
    """Recorder for acceptance criteria: ``acceptance(key, title, ok, detail)``."""
    store = request.config._acceptance

    def record(key, title, ok, detail=""):
        store[key] = (title, bool(ok), detail)
        print(f"[{'PASS' if ok else 'FAIL'}] {key} {title}: {detail}")
        return ok

    return record


@pytest.fixture(scope="session")
def warm_kernels():
    """Compile (or load cached) numba kernels so runtime limits measure the work itself."""
    from tdsekit.field import Sinusoid, TimeGrid
    from tdsekit.linalg import herm_eig
    from tdsekit.model import build_two_level
    from tdsekit.propagate import reference_chain

    herm_eig(np.eye(2))
    reference_chain(build_two_level(), Sinusoid(1.0, 1.0), 1.0, 4)
    TimeGrid(1.0, 1)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = getattr(config, "_acceptance", {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(store, key=lambda k: int(k[1:])):
        title, ok, detail = store[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {key:<4} {title} ({detail})")
