"""Offline basis construction by greedy sampling.

The next parameter is the training point whose reduced solution has the
largest coefficient 1-norm. :func:`adaptive_greedy_build` solves each new
snapshot with RBCG on the basis built so far; :func:`multifidelity_build`
selects parameters on a coarse grid and takes snapshots on a fine one.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

from .affine import AffineOperator, AffineRhs, ParameterDomain, assemble_matrix, assemble_rhs
from .basis import ReducedBasis, ReducedMatrixError, extend, factor_reduced, online_assemble
from .poisson import GridProblem
from .solvers import SolverConfig, cg_solve, rbcg_solve
from .sparse import cholesky_solve

__all__ = [
    "TrainingSet",
    "GreedyReport",
    "SnapshotSolver",
    "dense_snapshot_solver",
    "cg_snapshot_solver",
    "mgcg_snapshot_solver",
    "rb_indicators",
    "greedy_build",
    "adaptive_greedy_build",
    "multifidelity_build",
]

log = logging.getLogger(__name__)

# solver(mu, A, b, basis) -> (x, history or None)
SnapshotSolver = Callable


@dataclass(frozen=True)
class TrainingSet:
    params: np.ndarray
    seed: int | None = None
    generation: str = "uniform_random"

    def __post_init__(self):
        p = np.atleast_2d(np.asarray(self.params, dtype=np.float64))
        if p.shape[0] == 0:
            raise ValueError("training set is empty")
        p.flags.writeable = False
        object.__setattr__(self, "params", p)

    def __len__(self):
        return self.params.shape[0]

    def __getitem__(self, i):
        return self.params[i]

    @classmethod
    def uniform_random(cls, domain: ParameterDomain, size: int = 100, seed: int = 0) -> "TrainingSet":
        return cls(domain.sample(size, seed), seed, "uniform_random")

    @classmethod
    def uniform_grid(cls, domain: ParameterDomain, n_per_axis: int) -> "TrainingSet":
        return cls(domain.grid(n_per_axis), None, "uniform_grid")


@dataclass
class GreedyReport:
    """What the greedy loop did, step by step.

    ``indicators[k]`` is the maximal coefficient 1-norm found after the
    basis reached dimension ``k + 1``.
    """

    sample_indices: list = field(default_factory=list)
    samples: list = field(default_factory=list)
    accepted: list = field(default_factory=list)
    rejected_snapshots: int = 0
    indicators: list = field(default_factory=list)
    snapshot_iterations: list = field(default_factory=list)
    snapshot_times: list = field(default_factory=list)
    events: list = field(default_factory=list)
    offline_time: float = 0.0

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self), default=_jsonable))

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(type(o))


# -- snapshot solvers -----------------------------------------------------


def dense_snapshot_solver():
    """Direct dense Cholesky solve; for small grids and tests."""

    def solve(mu, A, b, basis=None):
        c = scipy.linalg.cho_factor(A.to_dense(), lower=True)
        return scipy.linalg.cho_solve(c, b), None

    return solve


def cg_snapshot_solver(tol: float = 1e-10, maxit: int = 20000):
    cfg = SolverConfig(tol=tol, maxit=maxit)

    def solve(mu, A, b, basis=None):
        return cg_solve(A, b, mu, cfg)

    return solve


def mgcg_snapshot_solver(hierarchy, tol: float = 1e-10, maxit: int = 500):
    from .multigrid import mgcg_solve

    cfg = SolverConfig(tol=tol, maxit=maxit)

    def solve(mu, A, b, basis=None):
        return mgcg_solve(hierarchy, mu, b, cfg)

    return solve


def _rbcg_snapshot_solver(cfg: SolverConfig, fallback):
    def solve(mu, A, b, basis):
        if basis.N == 0:
            x, hist = fallback(mu, A, b, basis)
            return x, hist, "fallback (empty basis)"
        x, hist = rbcg_solve(A, b, mu, basis, cfg)
        if not hist.converged:
            status = hist.terminated
            log.info("RBCG snapshot at %s ended with %s; using fallback solver", mu, status)
            x, hist = fallback(mu, A, b, basis)
            return x, hist, f"RBCG {status}; fallback used"
        return x, hist, None

    return solve


# -- greedy loop ----------------------------------------------------------


def rb_indicators(basis: ReducedBasis, train: TrainingSet) -> np.ndarray:
    """Coefficient 1-norm of the reduced solution at every training point.

    Purely reduced work: no operation scales with the full dimension.
    """
    out = np.empty(len(train))
    for i, mu in enumerate(train.params):
        AN, fN = online_assemble(basis, mu)
        a = cholesky_solve(factor_reduced(AN), fN)
        out[i] = np.abs(a).sum()
    return out


def _greedy(op, rhs, train, n_max, solve, seed, drop_tol, meta):
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    t_start = time.perf_counter()
    rng = np.random.default_rng(seed)
    report = GreedyReport()
    basis = ReducedBasis.empty(op, rhs, **meta)
    idx = int(rng.integers(len(train)))
    tried: set[int] = set()
    ranking: list[int] = []
    while True:
        tried.add(idx)
        mu = train[idx]
        A = assemble_matrix(op, mu)
        b = assemble_rhs(rhs, mu)
        t0 = time.perf_counter()
        out = solve(mu, A, b, basis)
        x, hist = out[0], out[1]
        if len(out) > 2 and out[2]:
            report.events.append(f"step {basis.N + 1}: {out[2]}")
        report.snapshot_times.append(time.perf_counter() - t0)
        report.snapshot_iterations.append(None if hist is None else hist.iterations)
        basis, ok = extend(basis, x, op, rhs, mu, drop_tol)
        report.sample_indices.append(idx)
        report.samples.append(np.asarray(mu).tolist())
        report.accepted.append(ok)
        if not ok:
            report.rejected_snapshots += 1
            report.events.append(f"dependent snapshot at training index {idx} rejected")
            log.info("dependent snapshot at training index %d rejected", idx)
            ranking = [i for i in ranking if i not in tried]
            if not ranking:
                report.events.append("no candidates left; stopping")
                break
            idx = ranking[0]
            continue
        try:
            ind = rb_indicators(basis, train)
        except ReducedMatrixError as e:
            report.events.append(f"reduced matrix lost definiteness: {e}")
            break
        masked = ind.copy()
        masked[list(tried)] = -np.inf
        report.indicators.append(float(masked.max()) if np.isfinite(masked.max()) else None)
        if basis.N >= n_max:
            break
        # stable sort: ties keep the lowest training index first
        ranking = [int(i) for i in np.argsort(-masked, kind="stable") if np.isfinite(masked[i])]
        if not ranking:
            report.events.append("training set exhausted")
            break
        idx = ranking[0]
    report.offline_time = time.perf_counter() - t_start
    return basis, report


def greedy_build(op: AffineOperator, rhs: AffineRhs, train: TrainingSet, n_max: int,
                 snapshot_solver=None, seed: int | None = 0, drop_tol: float = 1e-10, **meta):
    """Plain greedy sampling with an arbitrary snapshot solver.

    Parameters
    ----------
    snapshot_solver : callable, optional
        ``solver(mu, A, b, basis) -> (x, history)``; defaults to CG at 1e-10.
    seed : int
        Seeds the choice of the first training point.
    **meta
        ``case_id`` / ``grid_id`` / ``meta`` stored on the basis.

    Returns
    -------
    ReducedBasis, GreedyReport
    """
    snapshot_solver = snapshot_solver or cg_snapshot_solver()
    return _greedy(op, rhs, train, n_max, snapshot_solver, seed, drop_tol, meta)


def adaptive_greedy_build(op: AffineOperator, rhs: AffineRhs, train: TrainingSet, n_max: int,
                          fallback_solver=None, cfg: SolverConfig | None = None,
                          seed: int | None = 0, drop_tol: float = 1e-10, **meta):
    """Greedy sampling whose snapshots are solved by RBCG on the current basis.

    The first snapshot (empty basis) and any RBCG run that does not converge
    use ``fallback_solver``.
    """
    fallback = fallback_solver or cg_snapshot_solver()
    cfg = cfg or SolverConfig(tol=1e-10, maxit=1000)
    return _greedy(op, rhs, train, n_max, _rbcg_snapshot_solver(cfg, fallback), seed, drop_tol, meta)


def multifidelity_build(coarse: GridProblem, fine: GridProblem, train: TrainingSet, n_max: int,
                        fine_mode: str = "rbcg", cfg: SolverConfig | None = None,
                        seed: int | None = 0, drop_tol: float = 1e-10,
                        coarse_fallback=None, fine_fallback=None):
    """Choose parameters on ``coarse``, then take the snapshots on ``fine``.

    ``fine_mode`` is ``"mgcg"`` (every fine snapshot by MG-CG) or ``"rbcg"``
    (RBCG on the growing fine basis, MG-CG for the first snapshot).

    Returns
    -------
    ReducedBasis
        Fine-grid basis.
    dict
        ``{"coarse": GreedyReport, "fine": GreedyReport}``.
    """
    from .multigrid import MgHierarchy

    if coarse.case != fine.case:
        raise ValueError("coarse and fine problems must belong to the same family")
    if fine_mode not in ("rbcg", "mgcg"):
        raise ValueError(f"unknown fine_mode {fine_mode!r}")
    cfg = cfg or SolverConfig(tol=1e-10, maxit=1000)
    if coarse_fallback is None:
        coarse_fallback = mgcg_snapshot_solver(MgHierarchy.for_case(coarse.case, coarse.level), cfg.tol)
    if fine_fallback is None:
        fine_fallback = mgcg_snapshot_solver(MgHierarchy.for_case(fine.case, fine.level), cfg.tol)

    _, coarse_report = adaptive_greedy_build(
        coarse.op, coarse.rhs, train, n_max, coarse_fallback, cfg, seed, drop_tol,
        case_id=coarse.case, grid_id=coarse.grid_id,
    )
    t_start = time.perf_counter()
    if fine_mode == "rbcg":
        solve = _rbcg_snapshot_solver(cfg, fine_fallback)
    else:
        solve = fine_fallback
    report = GreedyReport()
    basis = ReducedBasis.empty(fine.op, fine.rhs, case_id=fine.case, grid_id=fine.grid_id,
                               meta={"multifidelity_coarse_level": coarse.level})
    for idx, mu in zip(coarse_report.sample_indices, coarse_report.samples):
        if basis.N >= n_max:
            break
        mu = np.asarray(mu)
        A = assemble_matrix(fine.op, mu)
        b = assemble_rhs(fine.rhs, mu)
        t0 = time.perf_counter()
        out = solve(mu, A, b, basis)
        report.snapshot_times.append(time.perf_counter() - t0)
        report.snapshot_iterations.append(None if out[1] is None else out[1].iterations)
        if len(out) > 2 and out[2]:
            report.events.append(out[2])
        basis, ok = extend(basis, out[0], fine.op, fine.rhs, mu, drop_tol)
        report.sample_indices.append(idx)
        report.samples.append(mu.tolist())
        report.accepted.append(ok)
        report.rejected_snapshots += not ok
    report.offline_time = time.perf_counter() - t_start
    return basis, {"coarse": coarse_report, "fine": report}
