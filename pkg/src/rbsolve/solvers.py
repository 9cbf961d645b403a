"""Reduced-basis iteration, reduced-basis preconditioned CG, and plain CG.

All solvers start from ``x = 0``, stop on the Euclidean residual norm (relative
to ``||b||`` by default) and return a :class:`ConvergenceHistory`.
"""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .affine import AffineOperator, assemble_matrix
from .basis import ReducedBasis, ReducedMatrixError, factor_reduced, lift, online_assemble, restrict
from .smoothing import SmootherSpec, smooth
from .sparse import CholeskyFactor, CSRMatrix, axpy, cholesky_solve, dot, norm2, residual, spmv
from .work import WorkCounter, counting, record

__all__ = [
    "SolverConfig",
    "ConvergenceHistory",
    "RBCorrection",
    "rb_correction",
    "adapt_basis_dimension",
    "rbi_solve",
    "rbcg_solve",
    "cg_solve",
    "pcg",
]

log = logging.getLogger(__name__)

CONVERGED, MAX_ITER, BREAKDOWN = "converged", "max_iter", "breakdown"


@dataclass(frozen=True)
class SolverConfig:
    """Shared solver settings.

    ``n_rb`` is the (initial) active basis dimension, ``None`` meaning the
    whole basis; ``n_max`` caps adaptive growth (``None``: basis size).
    """

    tol: float = 1e-8
    maxit: int = 500
    smoother: SmootherSpec = field(default_factory=SmootherSpec)
    gamma: float = 10.0
    adaptive_n: bool = False
    n_rb: int | None = None
    n_max: int | None = None
    relative: bool = True

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")
        if self.maxit < 1:
            raise ValueError("maxit must be at least 1")
        if not self.gamma > 1:
            raise ValueError("gamma must exceed 1")


@dataclass
class ConvergenceHistory:
    """Per-iteration record of one solve.

    ``residual_norms[i]`` is the residual after ``i`` iterations, so the list
    has ``iterations + 1`` entries; ``basis_dims``, ``matvecs`` and ``times``
    are aligned with it (cumulative SpMV count and seconds since start).
    """

    solver: str
    rhs_norm: float = 0.0
    residual_norms: list = field(default_factory=list)
    basis_dims: list = field(default_factory=list)
    matvecs: list = field(default_factory=list)
    times: list = field(default_factory=list)
    terminated: str = MAX_ITER
    matvec_count: int = 0
    precond_calls: int = 0
    smoother_sweep_count: int = 0
    wall_time_per_phase: dict = field(default_factory=dict)
    work: WorkCounter = field(default_factory=WorkCounter)
    setup_work: WorkCounter = field(default_factory=WorkCounter)
    final_residual: float = float("nan")
    events: list = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return max(len(self.residual_norms) - 1, 0)

    @property
    def converged(self) -> bool:
        return self.terminated == CONVERGED

    @property
    def relative_residuals(self) -> np.ndarray:
        ref = self.rhs_norm if self.rhs_norm > 0 else 1.0
        return np.asarray(self.residual_norms) / ref

    def rows(self):
        rel = self.relative_residuals
        for i, r in enumerate(self.residual_norms):
            yield {
                "iter": i,
                "residual": r,
                "relative_residual": rel[i],
                "active_N": self.basis_dims[i] if i < len(self.basis_dims) else "",
                "cumulative_matvecs": self.matvecs[i] if i < len(self.matvecs) else "",
                "cumulative_time_s": self.times[i] if i < len(self.times) else "",
            }

    def to_csv(self, path, include_time: bool = True) -> None:
        """Write one row per iteration.

        ``include_time=False`` drops the wall-clock column so the file is a
        deterministic function of the inputs.
        """
        cols = ["iter", "residual", "relative_residual", "active_N", "cumulative_matvecs"]
        if include_time:
            cols.append("cumulative_time_s")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for row in self.rows():
                w.writerow([_fmt(row[c]) for c in cols])

    def summary(self) -> dict:
        return {
            "solver": self.solver,
            "iterations": self.iterations,
            "terminated": self.terminated,
            "final_relative_residual": float(self.relative_residuals[-1]) if self.residual_norms else None,
            "true_relative_residual": self.final_residual / self.rhs_norm if self.rhs_norm else self.final_residual,
            "matvecs": self.matvec_count,
            "precond_calls": self.precond_calls,
            "smoother_sweeps": self.smoother_sweep_count,
            "final_N": self.basis_dims[-1] if self.basis_dims else None,
            "time_s": dict(self.wall_time_per_phase),
            "events": list(self.events),
        }


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


class _Recorder:
    """Tracks counters and timings while a solver runs."""

    def __init__(self, hist: ConvergenceHistory):
        self.hist = hist
        self.counter = WorkCounter()
        self.t0 = time.perf_counter()
        self._cm = counting(self.counter)

    def __enter__(self):
        self._cm.__enter__()
        return self

    def __exit__(self, *exc):
        self._cm.__exit__(*exc)
        h = self.hist
        h.work = self.counter.copy()
        h.matvec_count = self.counter.spmv
        h.smoother_sweep_count = self.counter.sweeps
        total = time.perf_counter() - self.t0
        h.wall_time_per_phase["iterate"] = total - h.wall_time_per_phase.get("setup", 0.0)
        h.wall_time_per_phase["total"] = total
        return False

    def end_setup(self):
        self.hist.setup_work = self.counter.copy()
        self.hist.wall_time_per_phase["setup"] = time.perf_counter() - self.t0

    def push(self, rnorm: float, n_active: int):
        h = self.hist
        h.residual_norms.append(float(rnorm))
        h.basis_dims.append(int(n_active))
        h.matvecs.append(self.counter.spmv)
        h.times.append(time.perf_counter() - self.t0)


def _true_residual_norm(A: CSRMatrix, b, x) -> float:
    # diagnostic only: deliberately outside the work accounting
    out = np.empty(A.n_rows)
    _kernels.csr_residual(A.row_offsets, A.col_indices, A.values, b, x, out)
    return float(np.linalg.norm(out))


def _materialize(op, mu) -> CSRMatrix:
    if isinstance(op, CSRMatrix):
        return op
    if isinstance(op, AffineOperator):
        return assemble_matrix(op, mu)
    raise TypeError(f"expected AffineOperator or CSRMatrix, got {type(op).__name__}")


def _threshold(cfg: SolverConfig, bnorm: float) -> float:
    return cfg.tol * bnorm if cfg.relative else cfg.tol


class RBCorrection:
    """Coarse correction ``W_n A_n(mu)^{-1} W_n^T r`` for a fixed parameter.

    Reduced factors are computed once per active dimension and reused for
    the rest of the solve.
    """

    def __init__(self, basis: ReducedBasis, mu, n: int | None = None):
        self.basis = basis
        self.mu = mu
        self.n = basis.N if n is None else n
        if not 0 <= self.n <= basis.N:
            raise ValueError(f"active dimension {self.n} outside 0..{basis.N}")
        self._factors: dict[int, CholeskyFactor] = {}

    def factor(self, n: int) -> CholeskyFactor:
        if n not in self._factors:
            AN, _ = online_assemble(self.basis, self.mu, n)
            self._factors[n] = factor_reduced(AN)
        return self._factors[n]

    def coefficients(self, r) -> np.ndarray:
        rN = restrict(self.basis, r, self.n)
        if self.n == 0:
            return rN
        return cholesky_solve(self.factor(self.n), rN)

    def __call__(self, r) -> np.ndarray:
        return lift(self.basis, self.coefficients(r))


def rb_correction(basis: ReducedBasis, mu, r, n: int | None = None) -> np.ndarray:
    """Galerkin approximation in ``span(W_n)`` of ``e`` solving ``A(mu) e = r``."""
    return RBCorrection(basis, mu, n)(r)


def adapt_basis_dimension(residual_norms, gamma: float, n_active: int, n_max: int):
    """Grow the active dimension when the last residual drop is below ``gamma``.

    Returns
    -------
    (int, bool)
        New active dimension and whether growth was wanted but blocked by
        ``n_max``.
    """
    if len(residual_norms) < 2:
        return n_active, False
    prev, cur = residual_norms[-2], residual_norms[-1]
    slow = cur > 0 and prev / cur < gamma
    if not slow:
        return n_active, False
    if n_active >= n_max:
        return n_active, True
    return n_active + 1, False


def _initial(cfg: SolverConfig, basis: ReducedBasis):
    n_max = basis.N if cfg.n_max is None else min(cfg.n_max, basis.N)
    n0 = n_max if cfg.n_rb is None else cfg.n_rb
    if not 0 <= n0 <= basis.N:
        raise ValueError(f"n_rb={n0} outside 0..{basis.N}")
    return n0, max(n_max, n0)


def _adapt(cfg, hist, corr, n_max):
    if not cfg.adaptive_n:
        return
    n_new, saturated = adapt_basis_dimension(hist.residual_norms, cfg.gamma, corr.n, n_max)
    if saturated:
        hist.events.append(f"iteration {hist.iterations}: N saturated at {n_max}")
        log.debug("adaptive N saturated at %d", n_max)
    corr.n = n_new
    hist.basis_dims[-1] = n_new


def rbi_solve(op, rhs_vector, mu, basis: ReducedBasis, cfg: SolverConfig = SolverConfig()):
    """Reduced basis iteration as a stand-alone solver.

    Each iteration computes the residual, tests it, adds the coarse
    correction from the reduced basis and post-smooths.

    Parameters
    ----------
    op : AffineOperator or CSRMatrix
        The family (assembled at ``mu``) or an already assembled ``A(mu)``.
    rhs_vector : ndarray
    mu : array_like
    basis : ReducedBasis
    cfg : SolverConfig

    Returns
    -------
    x : ndarray
    history : ConvergenceHistory
    """
    hist = ConvergenceHistory("rbi")
    b = np.asarray(rhs_vector, dtype=np.float64)
    with _Recorder(hist) as rec:
        A = _materialize(op, mu)
        n0, n_max = _initial(cfg, basis)
        corr = RBCorrection(basis, mu, n0)
        if n0 == 0:
            hist.events.append("empty basis: iteration reduces to smoothing")
        x = np.zeros(A.n_rows)
        hist.rhs_norm = norm2(b)
        eps = _threshold(cfg, hist.rhs_norm)
        rec.end_setup()
        try:
            for k in range(cfg.maxit + 1):
                r = residual(A, b, x)
                rnorm = norm2(r)
                rec.push(rnorm, corr.n)
                if not np.isfinite(rnorm):
                    hist.terminated = BREAKDOWN
                    break
                if rnorm < eps or rnorm == 0.0:
                    hist.terminated = CONVERGED
                    break
                if k == cfg.maxit:
                    hist.terminated = MAX_ITER
                    break
                _adapt(cfg, hist, corr, n_max)
                x = x + corr(r)
                record(full_flops=A.n_rows)
                x = smooth(cfg.smoother, A, b, x)
        except ReducedMatrixError as e:
            hist.terminated = BREAKDOWN
            hist.events.append(str(e))
    hist.final_residual = _true_residual_norm(A, b, x)
    return x, hist


def _rbi_once(A, r, corr: RBCorrection, smoother: SmootherSpec):
    """One RBI iteration on ``A y = r`` from ``y = 0``."""
    res = residual(A, r, np.zeros(A.n_rows))
    y = corr(res)
    return smooth(smoother, A, r, y)


def pcg(A: CSRMatrix, b, precond, cfg: SolverConfig, hist: ConvergenceHistory, rec: _Recorder,
        explicit_initial_residual=True, n_active=lambda: 0, on_step=None):
    """Preconditioned CG loop shared by RBCG, MG-CG and CG.

    ``precond(r)`` returns the preconditioned residual (``None`` means the
    identity). The stopping test is applied to the recurrence residual.
    """
    x = np.zeros(A.n_rows)
    hist.rhs_norm = norm2(b)
    eps = _threshold(cfg, hist.rhs_norm)
    r = residual(A, b, x) if explicit_initial_residual else b.copy()
    rnorm = norm2(r)
    if rnorm == 0.0:
        rec.push(rnorm, n_active())
        hist.terminated = CONVERGED
        return x
    y = r if precond is None else precond(r)
    rho = dot(r, y)
    p = y.copy()
    rec.push(rnorm, n_active())
    if not rho > 0:
        hist.terminated = BREAKDOWN
        hist.events.append(f"y^T r = {rho:.3e} <= 0 (preconditioner not positive definite)")
        return x
    for k in range(cfg.maxit):
        q = spmv(A, p)
        pAp = dot(p, q)
        if not pAp > 0:
            hist.terminated = BREAKDOWN
            hist.events.append(f"p^T A p = {pAp:.3e} <= 0 (operator not positive definite)")
            return x
        alpha = rho / pAp
        x = axpy(alpha, p, x)
        r = axpy(-alpha, q, r)
        rnorm = norm2(r)
        rec.push(rnorm, n_active())
        if not np.isfinite(rnorm):
            hist.terminated = BREAKDOWN
            return x
        if rnorm < eps:
            hist.terminated = CONVERGED
            return x
        if k == cfg.maxit - 1:
            break
        if on_step is not None:
            on_step()
        y = r if precond is None else precond(r)
        rho_new = dot(y, r)
        if not rho_new > 0:
            hist.terminated = BREAKDOWN
            hist.events.append(f"y^T r = {rho_new:.3e} <= 0 (preconditioner not positive definite)")
            return x
        beta = rho_new / rho
        p = axpy(beta, p, y)
        rho = rho_new
    hist.terminated = MAX_ITER
    return x


def rbcg_solve(op, rhs_vector, mu, basis: ReducedBasis, cfg: SolverConfig = SolverConfig()):
    """CG preconditioned by exactly one reduced basis iteration.

    With ``cfg.adaptive_n`` the active basis dimension grows by one whenever
    the residual fails to drop by ``cfg.gamma`` in a step, up to ``n_max``.
    SpMV accounting: one for the initial residual, then per iteration one for
    ``A p`` and one for the residual evaluated inside the preconditioner.
    """
    hist = ConvergenceHistory("rbcg")
    b = np.asarray(rhs_vector, dtype=np.float64)
    with _Recorder(hist) as rec:
        A = _materialize(op, mu)
        n0, n_max = _initial(cfg, basis)
        corr = RBCorrection(basis, mu, n0)
        rec.end_setup()

        def precond(r):
            hist.precond_calls += 1
            return _rbi_once(A, r, corr, cfg.smoother)

        try:
            x = pcg(A, b, precond, cfg, hist, rec, n_active=lambda: corr.n,
                    on_step=lambda: _adapt(cfg, hist, corr, n_max))
        except ReducedMatrixError as e:
            hist.terminated = BREAKDOWN
            hist.events.append(str(e))
            x = np.zeros(A.n_rows)
    hist.final_residual = _true_residual_norm(A, b, x)
    return x, hist


def cg_solve(op, rhs_vector, mu=None, cfg: SolverConfig = SolverConfig()):
    """Unpreconditioned conjugate gradients (one SpMV per iteration)."""
    hist = ConvergenceHistory("cg")
    b = np.asarray(rhs_vector, dtype=np.float64)
    with _Recorder(hist) as rec:
        A = _materialize(op, mu)
        rec.end_setup()
        x = pcg(A, b, None, cfg, hist, rec, explicit_initial_residual=False)
    hist.final_residual = _true_residual_norm(A, b, x)
    return x, hist
