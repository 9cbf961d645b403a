"""Geometric multigrid V-cycle and MG-preconditioned CG (comparison baseline)."""
from __future__ import annotations

import threading
from collections import OrderedDict

import numpy as np

from .affine import assemble_matrix
from .poisson import GridProblem, build_hierarchy
from .smoothing import SmootherSpec, smooth
from .solvers import ConvergenceHistory, SolverConfig, _Recorder, _true_residual_norm, pcg
from .sparse import CholeskyFactor, CSRMatrix, cholesky_factor, cholesky_solve, residual, spmv

__all__ = ["MgHierarchy", "v_cycle", "mgcg_solve"]

MAX_COARSE = 1000


class MgHierarchy:
    """Grid problems (fine to coarse), transfers, and smoothing settings.

    Operators are assembled per parameter on demand and kept in a small LRU
    cache.
    """

    def __init__(self, problems, prolongations, restrictions, smoother=None, sweeps=(1, 1), cache_size=4):
        if len(prolongations) != len(problems) - 1 or len(restrictions) != len(problems) - 1:
            raise ValueError("need one transfer pair per adjacent level pair")
        if problems[-1].size > MAX_COARSE:
            raise ValueError(f"coarsest level has {problems[-1].size} unknowns (> {MAX_COARSE})")
        self.problems = list(problems)
        self.prolongations = list(prolongations)
        self.restrictions = list(restrictions)
        self.smoother = smoother or SmootherSpec("gauss_seidel_symmetric", 1)
        self.pre, self.post = sweeps
        self.cache_size = cache_size
        self._cache: OrderedDict = OrderedDict()
        self._lock = threading.Lock()

    @classmethod
    def for_case(cls, case, fine_level: int, n_levels: int | None = None, **kw) -> "MgHierarchy":
        if n_levels is None:
            n_levels = fine_level - 1
        problems, P, R = build_hierarchy(case, fine_level, n_levels)
        return cls(problems, P, R, **kw)

    @property
    def n_levels(self) -> int:
        return len(self.problems)

    @property
    def size(self) -> int:
        return self.problems[0].size

    def operators(self, mu) -> tuple[list[CSRMatrix], CholeskyFactor]:
        key = tuple(np.atleast_1d(np.asarray(mu, dtype=np.float64)).tolist())
        with self._lock:
            if key in self._cache:
                self._cache.move_to_end(key)
                return self._cache[key]
        mats = [assemble_matrix(p.op, mu) for p in self.problems]
        coarse = cholesky_factor(mats[-1].to_dense())
        with self._lock:
            self._cache[key] = (mats, coarse)
            while len(self._cache) > self.cache_size:
                self._cache.popitem(last=False)
        return mats, coarse

    def _spec(self, sweeps):
        return SmootherSpec(self.smoother.kind, sweeps, self.smoother.omega)


def _cycle(h: MgHierarchy, mats, coarse, level, b, x):
    A = mats[level]
    if level == len(mats) - 1:
        return cholesky_solve(coarse, b)
    x = smooth(h._spec(h.pre), A, b, x)
    r = residual(A, b, x)
    rc = spmv(h.restrictions[level], r)
    ec = _cycle(h, mats, coarse, level + 1, rc, np.zeros(rc.size))
    x = x + spmv(h.prolongations[level], ec)
    return smooth(h._spec(h.post), A, b, x)


def v_cycle(h: MgHierarchy, mu, b, x) -> np.ndarray:
    """One V(pre, post) cycle on the finest level; returns the new iterate."""
    mats, coarse = h.operators(mu)
    return _cycle(h, mats, coarse, 0, np.asarray(b, dtype=np.float64), np.asarray(x, dtype=np.float64))


def mgcg_solve(h: MgHierarchy, mu, b, cfg: SolverConfig = SolverConfig()):
    """CG preconditioned by one V-cycle from a zero initial guess."""
    hist = ConvergenceHistory("mgcg")
    b = np.asarray(b, dtype=np.float64)
    with _Recorder(hist) as rec:
        mats, coarse = h.operators(mu)
        A = mats[0]
        rec.end_setup()

        def precond(r):
            hist.precond_calls += 1
            return _cycle(h, mats, coarse, 0, r, np.zeros(r.size))

        x = pcg(A, b, precond, cfg, hist, rec)
    hist.final_residual = _true_residual_norm(A, b, x)
    return x, hist
