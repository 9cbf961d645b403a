import csv

import numpy as np
import pytest
import scipy.sparse.linalg as spla

from rbsolve.affine import COEFFICIENTS, AffineOperator, AffineRhs, assemble_matrix, assemble_rhs
from rbsolve.basis import lift, rb_solve, restrict
from rbsolve.greedy import TrainingSet, greedy_build
from rbsolve.smoothing import SmootherSpec
from rbsolve.solvers import (
    ConvergenceHistory,
    RBCorrection,
    SolverConfig,
    _Recorder,
    adapt_basis_dimension,
    cg_solve,
    pcg,
    rbcg_solve,
    rbi_solve,
)
from rbsolve.sparse import CSRMatrix

ONE = COEFFICIENTS["one"]


@pytest.fixture(scope="module")
def basis1_l4(case1_l4):
    train = TrainingSet.uniform_random(case1_l4.domain, 100, 0)
    basis, _ = greedy_build(case1_l4.op, case1_l4.rhs, train, 5)
    return basis


def system(problem, mu):
    return assemble_matrix(problem.op, mu), assemble_rhs(problem.rhs, mu)


# -- reduced basis iteration ---------------------------------------------------


def test_rbi_exact_for_solution_in_span(case1_l3, basis1_l3, rng):
    for mu in case1_l3.domain.sample(5, 4):
        A, _ = system(case1_l3, mu)
        x_true = basis1_l3.W @ rng.standard_normal(5)
        x, h = rbi_solve(A, A.to_scipy() @ x_true, mu, basis1_l3, SolverConfig(tol=1e-8))
        assert h.converged and h.iterations == 1
        assert np.linalg.norm(x - x_true) <= 1e-10 * np.linalg.norm(x_true)


def test_rbi_stagnates_without_smoothing(case2_l3, basis2_l3):
    mu = [1.3, 0.4]
    A, f = system(case2_l3, mu)
    x_hat = lift(basis2_l3, rb_solve(basis2_l3, mu, restrict(basis2_l3, f)).coefficients)
    cfg = SolverConfig(smoother=SmootherSpec("sgs", 0), maxit=1)
    for k in range(1, 51):
        x, h = rbi_solve(A, f, mu, basis2_l3, SolverConfig(smoother=cfg.smoother, maxit=k, tol=1e-14))
        assert h.iterations == k
        assert np.linalg.norm(x - x_hat) <= 1e-12 * np.linalg.norm(x_hat)
    res = np.array(h.residual_norms[1:])
    assert np.all(np.abs(res - res[0]) <= 1e-12 * h.rhs_norm)


def test_coarse_correction_is_galerkin_error_approximation(case2_l3, basis2_l3, rng):
    mu = [0.6, 0.9]
    A, _ = system(case2_l3, mu)
    r = rng.standard_normal(A.n_rows)
    corr = RBCorrection(basis2_l3, mu)(r)
    W = basis2_l3.W
    e_ref = W @ np.linalg.solve(W.T @ A.to_dense() @ W, W.T @ r)
    assert np.linalg.norm(corr - e_ref) <= 1e-10 * np.linalg.norm(e_ref)
    via_rb = lift(basis2_l3, rb_solve(basis2_l3, mu, restrict(basis2_l3, r)).coefficients)
    assert corr.tobytes() == via_rb.tobytes()


def test_rbi_frozen_iteration_counts(case1_l3, basis1_l3):
    # measured once after validating against the dense solve; see test_every_solver_matches_direct
    A, f = system(case1_l3, [0.5])
    counts = [rbi_solve(A, f, [0.5], basis1_l3, SolverConfig(n_rb=n))[1].iterations for n in range(6)]
    assert counts == [61, 19, 11, 6, 3, 1]
    counts = [rbcg_solve(A, f, [0.5], basis1_l3, SolverConfig(n_rb=n))[1].iterations for n in range(6)]
    assert counts == [11, 8, 7, 4, 2, 1]


def test_rbi_empty_basis_is_flagged(case1_l3, basis1_l3):
    A, f = system(case1_l3, [0.5])
    _, h = rbi_solve(A, f, [0.5], basis1_l3, SolverConfig(n_rb=0))
    assert h.converged and any("empty basis" in e for e in h.events)


# -- RBCG ---------------------------------------------------------------------


def test_rbcg_identity_system(rng):
    op = AffineOperator([CSRMatrix.identity(8)], [ONE])
    rhs = AffineRhs([np.ones(8)], [ONE])
    from rbsolve.basis import ReducedBasis, extend

    basis, _ = extend(ReducedBasis.empty(op, rhs), rng.standard_normal(8), op, rhs)
    f = rng.standard_normal(8)
    x, h = rbcg_solve(op, f, [0.0], basis)
    assert h.iterations == 1 and h.converged
    np.testing.assert_allclose(x, f, rtol=1e-14)


def test_rbcg_exact_for_solution_in_span(case2_l3, basis2_l3, rng):
    mu = [0.2, 0.3]
    A, _ = system(case2_l3, mu)
    x_true = basis2_l3.W @ rng.standard_normal(basis2_l3.N)
    x, h = rbcg_solve(A, A.to_scipy() @ x_true, mu, basis2_l3)
    assert h.iterations == 1
    assert np.linalg.norm(x - x_true) <= 1e-10 * np.linalg.norm(x_true)


def test_rbcg_matches_direct_solve_level4(case1_l4, basis1_l4):
    for mu in case1_l4.domain.sample(20, 5):
        A, f = system(case1_l4, mu)
        x_ref = spla.splu(A.to_scipy().tocsc()).solve(f)
        x, h = rbcg_solve(A, f, mu, basis1_l4, SolverConfig(tol=1e-8))
        assert h.converged
        assert np.linalg.norm(x - x_ref) <= 1e-6 * np.linalg.norm(x_ref)


def test_rbcg_energy_error_nonincreasing(case2_l3, basis2_l3):
    mu = [1.7, 0.2]
    A, f = system(case2_l3, mu)
    D = A.to_dense()
    xs = np.linalg.solve(D, f)
    energies = []
    for k in range(1, 12):
        x, h = rbcg_solve(A, f, mu, basis2_l3, SolverConfig(n_rb=2, maxit=k, tol=1e-14))
        e = x - xs
        energies.append(e @ D @ e)
        if h.converged:
            break
    assert len(energies) > 3
    assert all(b <= a * (1 + 1e-12) for a, b in zip(energies, energies[1:]))


def test_median_iterations_decrease_with_n(case1_l4, basis1_l4):
    its = {1: [], 5: []}
    for mu in case1_l4.domain.sample(20, 1):
        A, f = system(case1_l4, mu)
        for n in its:
            its[n].append(rbcg_solve(A, f, mu, basis1_l4, SolverConfig(n_rb=n))[1].iterations)
    assert np.median(its[5]) <= np.median(its[1])


def test_cg_needs_five_times_more_iterations_than_rbcg5(case1_l4, basis1_l4):
    cg, rb = [], []
    for mu in case1_l4.domain.sample(20, 1):
        A, f = system(case1_l4, mu)
        cg.append(cg_solve(A, f, mu)[1].iterations)
        rb.append(rbcg_solve(A, f, mu, basis1_l4)[1].iterations)
    assert np.median(cg) >= 5 * np.median(rb)


def test_forward_gauss_seidel_option_terminates(case1_l3, basis1_l3):
    # nonsymmetric preconditioner: allowed, but CG guarantees are lost
    A, f = system(case1_l3, [0.5])
    _, h = rbcg_solve(A, f, [0.5], basis1_l3, SolverConfig(n_rb=1, smoother=SmootherSpec("gs"), maxit=60))
    assert h.terminated in ("converged", "max_iter", "breakdown")


def test_adaptive_n_grows_and_saturates(case1_l3, basis1_l3):
    A, f = system(case1_l3, [0.9])
    _, h = rbcg_solve(A, f, [0.9], basis1_l3, SolverConfig(n_rb=0, adaptive_n=True, gamma=10.0))
    assert h.converged
    dims = h.basis_dims
    assert dims[0] == 0 and all(b - a in (0, 1) for a, b in zip(dims, dims[1:]))
    assert max(dims) > 0


# -- adaptive rule ------------------------------------------------------------


def test_adapt_rule_examples():
    assert adapt_basis_dimension([20.0, 1.0], 10.0, 3, 10) == (3, False)
    assert adapt_basis_dimension([2.0, 1.0], 10.0, 3, 10) == (4, False)
    assert adapt_basis_dimension([2.0, 1.0], 10.0, 10, 10) == (10, True)
    assert adapt_basis_dimension([1.0], 10.0, 3, 10) == (3, False)
    assert adapt_basis_dimension([10.0, 1.0], 10.0, 3, 10) == (3, False)  # drop of exactly gamma is enough


# -- CG -----------------------------------------------------------------------


def test_cg_identity():
    _, h = cg_solve(CSRMatrix.identity(5), np.arange(1.0, 6.0))
    assert h.iterations == 1


def test_cg_finite_termination_1d():
    n = 10
    T = np.diag([2.0] * n) + np.diag([-1.0] * (n - 1), 1) + np.diag([-1.0] * (n - 1), -1)
    b = np.eye(n)[0]
    x, h = cg_solve(CSRMatrix.from_dense(T, symmetric=True), b, cfg=SolverConfig(tol=1e-12))
    assert h.converged and h.iterations <= n
    np.testing.assert_allclose(x, np.linalg.solve(T, b), rtol=1e-10)


def test_cg_breakdown_on_indefinite():
    A = CSRMatrix.from_dense([[1.0, 0.0], [0.0, -1.0]], symmetric=True)
    _, h = cg_solve(A, np.array([0.0, 1.0]))
    assert h.terminated == "breakdown"


def test_pcg_guard_on_indefinite_preconditioner():
    A = CSRMatrix.identity(3)
    hist = ConvergenceHistory("test")
    with _Recorder(hist) as rec:
        pcg(A, np.ones(3), lambda r: -r, SolverConfig(), hist, rec)
    assert hist.terminated == "breakdown" and "preconditioner" in hist.events[0]


def test_every_solver_matches_direct(case2_l3, basis2_l3):
    from rbsolve.multigrid import MgHierarchy, mgcg_solve

    h = MgHierarchy.for_case("case2", 3)
    cfg = SolverConfig(tol=1e-10, maxit=2000)
    for mu in case2_l3.domain.sample(3, 9):
        A, f = system(case2_l3, mu)
        x_ref = np.linalg.solve(A.to_dense(), f)
        for x, _ in (cg_solve(A, f, mu, cfg), rbi_solve(A, f, mu, basis2_l3, cfg),
                     rbcg_solve(A, f, mu, basis2_l3, cfg), mgcg_solve(h, mu, f, cfg)):
            assert np.linalg.norm(x - x_ref) <= 1e-7 * np.linalg.norm(x_ref)


# -- accounting and history --------------------------------------------------


def test_work_accounting(case1_l3, basis1_l3):
    A, f = system(case1_l3, [0.7])
    _, h = cg_solve(A, f)
    assert h.matvec_count == h.iterations
    for n in (1, 3):
        _, h = rbcg_solve(A, f, [0.7], basis1_l3, SolverConfig(n_rb=n))
        assert h.matvec_count == 2 * h.iterations + 1
        assert h.precond_calls == h.iterations
        _, h = rbi_solve(A, f, [0.7], basis1_l3, SolverConfig(n_rb=n))
        assert h.matvec_count == h.iterations + 1
        assert h.smoother_sweep_count == h.iterations


def test_history_invariants(case1_l3, basis1_l3, tmp_path):
    A, f = system(case1_l3, [0.3])
    for solve in (lambda c: cg_solve(A, f, None, c), lambda c: rbcg_solve(A, f, [0.3], basis1_l3, c),
                  lambda c: rbi_solve(A, f, [0.3], basis1_l3, c)):
        x, h = solve(SolverConfig(n_rb=2))
        assert len(h.residual_norms) == h.iterations + 1 == len(h.basis_dims) == len(h.matvecs)
        assert h.residual_norms[0] == pytest.approx(np.linalg.norm(f), rel=1e-14)
        assert h.relative_residuals[-1] < 1e-8
        assert h.final_residual / h.rhs_norm < 1e-7
        assert set(h.wall_time_per_phase) == {"setup", "iterate", "total"}
    h.to_csv(tmp_path / "h.csv")
    rows = list(csv.DictReader(open(tmp_path / "h.csv")))
    assert list(rows[0]) == ["iter", "residual", "relative_residual", "active_N", "cumulative_matvecs",
                             "cumulative_time_s"]
    assert len(rows) == h.iterations + 1
    h.to_csv(tmp_path / "h2.csv", include_time=False)
    assert "cumulative_time_s" not in open(tmp_path / "h2.csv").readline()


def test_absolute_tolerance(case1_l3):
    A, f = system(case1_l3, [0.3])
    _, h = cg_solve(A, f, cfg=SolverConfig(tol=1e-6, relative=False))
    assert h.residual_norms[-1] < 1e-6 <= h.residual_norms[-2]


def test_max_iter(case1_l3):
    A, f = system(case1_l3, [0.3])
    _, h = cg_solve(A, f, cfg=SolverConfig(maxit=3))
    assert h.terminated == "max_iter" and h.iterations == 3


def test_config_validation():
    for kw in ({"tol": 0.0}, {"maxit": 0}, {"gamma": 1.0}):
        with pytest.raises(ValueError):
            SolverConfig(**kw)


def test_bad_active_dimension(case1_l3, basis1_l3):
    A, f = system(case1_l3, [0.3])
    with pytest.raises(ValueError):
        rbcg_solve(A, f, [0.3], basis1_l3, SolverConfig(n_rb=9))


def test_solvers_accept_affine_family(case1_l3, basis1_l3):
    A, f = system(case1_l3, [0.3])
    x1, _ = rbcg_solve(case1_l3.op, f, [0.3], basis1_l3)
    x2, _ = rbcg_solve(A, f, [0.3], basis1_l3)
    assert x1.tobytes() == x2.tobytes()
