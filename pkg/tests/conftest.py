import numpy as np
import pytest

from wcrlab.families import GAUSSIAN, LAPLACE, LOGISTIC, make_location, make_location_scale, make_scale

BASES = [GAUSSIAN, LAPLACE, LOGISTIC]
BASE_IDS = [b.name for b in BASES]


@pytest.fixture(params=BASES, ids=BASE_IDS)
def base(request):
    return request.param


@pytest.fixture
def ls_family(base):
    return make_location_scale(base)


@pytest.fixture
def loc_family(base):
    return make_location(base)


@pytest.fixture
def scale_family(base):
    return make_scale(base)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line for an acceptance criterion."""
    lines = request.config.stash[_ACCEPTANCE]

    def record(label: str, ok: bool, detail: str = "") -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] {label}" + (f": {detail}" if detail else "")
        print(line)
        lines.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
