import logging
import time

import numpy as np
import pytest
from hypothesis import settings

from rbsolve.greedy import TrainingSet, dense_snapshot_solver, greedy_build
from rbsolve.poisson import assemble_case

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture(autouse=True)
def _quiet_underresolved_warning(caplog):
    caplog.set_level(logging.ERROR, logger="rbsolve.poisson")


@pytest.fixture(scope="session")
def case1_l3():
    return assemble_case("case1", 3)


@pytest.fixture(scope="session")
def case2_l3():
    return assemble_case("case2", 3)


@pytest.fixture(scope="session")
def case1_l4():
    return assemble_case("case1", 4)


def _basis(problem, n_max, seed=0, size=50):
    train = TrainingSet.uniform_random(problem.domain, size, seed)
    basis, _ = greedy_build(problem.op, problem.rhs, train, n_max, dense_snapshot_solver())
    return basis


@pytest.fixture(scope="session")
def basis1_l3(case1_l3):
    return _basis(case1_l3, 5)


@pytest.fixture(scope="session")
def basis2_l3(case2_l3):
    return _basis(case2_l3, 10)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance report ----------------------------------------------------------

_ACCEPTANCE = {}


class _Criterion:
    def __init__(self, number, title, time_limit):
        self.number, self.title, self.time_limit = number, title, time_limit
        self.detail = ""

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.t0
        ok = exc_type is None
        msg = self.detail
        if not ok:
            msg = f"{msg}; {exc_type.__name__}: {str(exc).splitlines()[0] if str(exc) else ''}".lstrip("; ")
        elif self.time_limit is not None and elapsed > self.time_limit:
            ok = False
            msg = f"{msg}; took {elapsed:.1f} s, limit {self.time_limit:g} s"
        _ACCEPTANCE[self.number] = (self.title, ok, f"{msg} [{elapsed:.1f} s]")
        print(f"[{'PASS' if ok else 'FAIL'}] criterion {self.number}: {self.title}: {msg}")
        if ok or exc_type is not None:
            return False
        raise AssertionError(msg)


@pytest.fixture
def criterion():
    """``with criterion(n, title, time_limit) as c:`` records one acceptance line."""
    return _Criterion


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        title, ok, msg = _ACCEPTANCE[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {n:2d}. {title}: {msg}")
