import threading

import numpy as np
import pytest
import scipy.sparse.linalg as spla

from rbsolve.affine import assemble_matrix, assemble_rhs
from rbsolve.multigrid import MAX_COARSE, MgHierarchy, mgcg_solve, v_cycle
from rbsolve.poisson import assemble_case, build_hierarchy
from rbsolve.solvers import SolverConfig
from rbsolve.sparse import spmv


@pytest.fixture(scope="module")
def h4():
    return MgHierarchy.for_case("case1", 4)


def _energy(A, e):
    return np.sqrt(e @ spmv(A, e))


def test_zero_rhs_gives_zero(h4):
    x = v_cycle(h4, 0.3, np.zeros(h4.size), np.zeros(h4.size))
    assert not x.any()


def test_two_level_removes_smooth_error():
    h = MgHierarchy.for_case("case1", 4, n_levels=2)
    mu = 0.4
    A = h.operators(mu)[0][0]
    rng = np.random.default_rng(0)
    e0 = spmv(h.prolongations[0], rng.standard_normal(h.problems[1].size))
    xstar = rng.standard_normal(h.size)
    b = spmv(A, xstar)
    x = v_cycle(h, mu, b, xstar - e0)
    assert _energy(A, xstar - x) <= 0.1 * _energy(A, e0)


def test_v_cycle_contraction_factor(h4):
    A = h4.operators(0.0)[0][0]
    rng = np.random.default_rng(1)
    e = rng.standard_normal(h4.size)
    b = np.zeros(h4.size)
    norms = [_energy(A, e)]
    for _ in range(5):
        e = v_cycle(h4, 0.0, b, e)
        norms.append(_energy(A, e))
    rho = (norms[-1] / norms[0]) ** (1 / 5)
    assert rho <= 0.2


def test_mgcg_iterations_and_accuracy(h4):
    mu = 0.5
    p = assemble_case("case1", 4)
    A = assemble_matrix(p.op, mu)
    b = assemble_rhs(p.rhs, mu)
    x, hist = mgcg_solve(h4, mu, b, SolverConfig(tol=1e-10))
    assert hist.converged and hist.iterations <= 15
    xd = spla.spsolve(A.to_scipy().tocsc(), b)
    assert np.linalg.norm(x - xd) <= 1e-6 * np.linalg.norm(xd)


def test_preconditioner_is_symmetric(h4):
    rng = np.random.default_rng(2)
    y, z = rng.standard_normal((2, h4.size))
    My = v_cycle(h4, 0.2, y, np.zeros(h4.size))
    Mz = v_cycle(h4, 0.2, z, np.zeros(h4.size))
    assert abs(z @ My - y @ Mz) <= 1e-10 * abs(z @ My)


def test_iterations_level_independent():
    counts = []
    for level in (3, 4, 5):
        p = assemble_case("case1", level)
        h = MgHierarchy.for_case("case1", level)
        counts.append(mgcg_solve(h, 0.5, assemble_rhs(p.rhs, 0.5), SolverConfig(tol=1e-8))[1].iterations)
    assert max(counts) <= 2 * min(counts)


def test_case2_mgcg_converges():
    h = MgHierarchy.for_case("case2", 4)
    p = assemble_case("case2", 4)
    mu = np.array([1.5, 0.7])
    _, hist = mgcg_solve(h, mu, assemble_rhs(p.rhs, mu))
    assert hist.converged and hist.iterations <= 25


def test_lru_cache(h4):
    h = MgHierarchy.for_case("case1", 3, cache_size=2)
    m0 = h.operators(0.1)
    assert h.operators(0.1)[0] is m0[0]
    h.operators(0.2)
    h.operators(0.3)
    assert h.operators(0.1)[0] is not m0[0]
    assert len(h._cache) == 2


def test_cache_thread_safe():
    h = MgHierarchy.for_case("case1", 4)
    b = np.ones(h.size)
    ref = [mgcg_solve(h, mu, b)[0] for mu in (0.1, 0.5, 0.9)]
    out = {}

    def work(i):
        mu = (0.1, 0.5, 0.9)[i % 3]
        out[i] = mgcg_solve(h, mu, b)[0]

    threads = [threading.Thread(target=work, args=(i,)) for i in range(9)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    for i, x in out.items():
        assert x.tobytes() == ref[i % 3].tobytes()


def test_coarsest_level_too_large():
    problems, P, R = build_hierarchy("case1", 5, 1)
    assert problems[-1].size > MAX_COARSE
    with pytest.raises(ValueError):
        MgHierarchy(problems, P, R)


def test_transfer_pair_count_checked():
    problems, P, R = build_hierarchy("case1", 4, 3)
    with pytest.raises(ValueError):
        MgHierarchy(problems, P[:1], R)


def test_work_counted(h4):
    from rbsolve.work import WorkCounter, counting

    c = WorkCounter()
    with counting(c):
        _, hist = mgcg_solve(h4, 0.5, np.ones(h4.size))
    # one application before the loop and one per non-final step
    assert hist.precond_calls == hist.iterations
    assert c.spmv > hist.iterations and c.sweeps > 0
