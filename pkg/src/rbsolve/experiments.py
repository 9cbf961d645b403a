"""Experiment runner: basis construction, parameter sweeps and dimension studies.

A run is described by an :class:`ExperimentSpec`, usually read from a YAML
(or JSON) file validated against :data:`SPEC_SCHEMA`::

    case: case1
    level: 4
    solvers: [cg, "rbcg:1", "rbcg:5", mgcg]
    basis: {method: greedy, n_max: 5, train_size: 100, train_seed: 0}
    sweep: {count: 20, seed: 1}
    tol: 1.0e-8

Outputs are one CSV per (solver, parameter) run and a ``summary.json``.
The CSVs carry no wall-clock column, so reruns are bitwise identical;
timings live in the summary.
"""
from __future__ import annotations

import csv
import json
import logging
import os
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from .affine import assemble_matrix, assemble_rhs
from .basis import ReducedBasis, load_basis, save_basis
from .greedy import (
    GreedyReport,
    TrainingSet,
    adaptive_greedy_build,
    cg_snapshot_solver,
    dense_snapshot_solver,
    greedy_build,
    mgcg_snapshot_solver,
    multifidelity_build,
)
from .multigrid import MgHierarchy, mgcg_solve
from .poisson import GridProblem, assemble_case, normalize_case
from .smoothing import SmootherSpec
from .solvers import ConvergenceHistory, SolverConfig, cg_solve, rbcg_solve, rbi_solve
from .work import WorkCounter, counting

__all__ = [
    "SPEC_SCHEMA",
    "SolverEntry",
    "ExperimentSpec",
    "ExperimentResult",
    "output_root",
    "load_spec",
    "build_basis",
    "run_experiment",
    "best_worst_select",
    "dimension_study",
]

log = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "RBSOLVE_OUTPUT_ROOT"
SOLVER_NAMES = ("cg", "rbi", "rbcg", "mgcg")
RB_SOLVERS = ("rbi", "rbcg")

_SOLVER_ITEM = {
    "oneOf": [
        {"type": "string", "pattern": r"^(cg|mgcg|(rbi|rbcg)(:adaptive)?(:\d+)?)$"},
        {
            "type": "object",
            "properties": {
                "name": {"enum": list(SOLVER_NAMES)},
                "n": {"type": ["integer", "null"], "minimum": 0},
                "adaptive": {"type": "boolean"},
            },
            "required": ["name"],
            "additionalProperties": False,
        },
    ]
}

SPEC_SCHEMA = {
    "type": "object",
    "properties": {
        "name": {"type": "string"},
        "case": {"type": ["string", "integer"], "enum": ["case1", "case2", 1, 2]},
        "level": {"type": "integer", "minimum": 2, "maximum": 9},
        "solvers": {"type": "array", "items": _SOLVER_ITEM, "minItems": 1},
        "basis": {
            "type": "object",
            "properties": {
                "method": {"enum": ["greedy", "adaptive", "multifidelity"]},
                "n_max": {"type": "integer", "minimum": 1},
                "train_size": {"type": "integer", "minimum": 1},
                "train_seed": {"type": "integer", "minimum": 0},
                "greedy_seed": {"type": "integer", "minimum": 0},
                "snapshot_solver": {"enum": ["cg", "mgcg", "dense"]},
                "coarse_level": {"type": "integer", "minimum": 2},
                "fine_mode": {"enum": ["rbcg", "mgcg"]},
                "path": {"type": "string"},
            },
            "additionalProperties": False,
        },
        "sweep": {
            "type": "object",
            "properties": {
                "count": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
            },
            "additionalProperties": False,
        },
        "n_list": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
        "tol": {"type": "number", "exclusiveMinimum": 0},
        "maxit": {"type": "integer", "minimum": 1},
        "gamma": {"type": "number", "exclusiveMinimum": 1},
        "smoother": {
            "type": "object",
            "properties": {
                "kind": {"type": "string"},
                "sweeps": {"type": "integer", "minimum": 0},
                "omega": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 2},
            },
            "additionalProperties": False,
        },
        "mg": {
            "type": "object",
            "properties": {
                "levels": {"type": ["integer", "null"], "minimum": 2},
                "sweeps": {"type": "array", "items": {"type": "integer", "minimum": 0},
                           "minItems": 2, "maxItems": 2},
            },
            "additionalProperties": False,
        },
        "workers": {"type": "integer", "minimum": 1},
        "output": {"type": "string"},
    },
    "required": ["case", "level", "solvers"],
    "additionalProperties": False,
}


@dataclass(frozen=True)
class SolverEntry:
    """One solver in a sweep; ``n`` is the (initial) active basis dimension."""

    name: str
    n: int | None = None
    adaptive: bool = False

    def __post_init__(self):
        if self.name not in SOLVER_NAMES:
            raise ValueError(f"unknown solver {self.name!r}")
        if self.name not in RB_SOLVERS and (self.n is not None or self.adaptive):
            raise ValueError(f"{self.name} takes no basis dimension")

    @classmethod
    def parse(cls, item) -> "SolverEntry":
        """Accept ``"cg"``, ``"rbcg:5"``, ``"rbcg:adaptive:1"`` or a mapping."""
        if isinstance(item, SolverEntry):
            return item
        if isinstance(item, dict):
            return cls(item["name"], item.get("n"), bool(item.get("adaptive", False)))
        parts = str(item).split(":")
        adaptive = "adaptive" in parts[1:]
        nums = [p for p in parts[1:] if p != "adaptive"]
        if len(nums) > 1:
            raise ValueError(f"cannot parse solver {item!r}")
        return cls(parts[0], int(nums[0]) if nums else None, adaptive)

    @property
    def label(self) -> str:
        if self.name not in RB_SOLVERS:
            return self.name
        tag = "_adaptive" if self.adaptive else ""
        return f"{self.name}{tag}_N{'all' if self.n is None else self.n}"


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything that determines a run (together with the code version)."""

    case: str
    level: int
    solvers: tuple
    name: str = "experiment"
    basis_method: str = "greedy"
    n_max: int = 5
    train_size: int = 100
    train_seed: int = 0
    greedy_seed: int = 0
    snapshot_solver: str = "cg"
    coarse_level: int | None = None
    fine_mode: str = "rbcg"
    basis_path: str | None = None
    sweep_count: int = 20
    sweep_seed: int = 1
    n_list: tuple = ()
    tol: float = 1e-8
    maxit: int = 500
    gamma: float = 10.0
    smoother_kind: str = "gauss_seidel_symmetric"
    smoother_sweeps: int = 1
    smoother_omega: float = 1.0
    mg_levels: int | None = None
    mg_sweeps: tuple = (1, 1)
    workers: int = 1
    output: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "case", normalize_case(self.case))
        object.__setattr__(self, "solvers", tuple(SolverEntry.parse(s) for s in self.solvers))
        object.__setattr__(self, "n_list", tuple(int(n) for n in self.n_list))
        object.__setattr__(self, "mg_sweeps", tuple(int(s) for s in self.mg_sweeps))
        labels = [s.label for s in self.solvers]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate solvers in {labels}")
        if self.basis_method == "multifidelity" and self.coarse_level is None:
            raise ValueError("multifidelity basis needs coarse_level")
        if self.coarse_level is not None and self.coarse_level >= self.level:
            raise ValueError("coarse_level must be below level")
        too_big = [s.label for s in self.solvers if s.n is not None and s.n > self.n_max]
        if too_big and self.basis_path is None:
            raise ValueError(f"{too_big} ask for more than n_max={self.n_max} basis vectors")
        # fail early on a bad smoother
        self.smoother

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        jsonschema.validate(d, SPEC_SCHEMA)
        basis = d.get("basis", {})
        sweep = d.get("sweep", {})
        sm = d.get("smoother", {})
        mg = d.get("mg", {})
        kw = dict(
            case=d["case"],
            level=d["level"],
            solvers=d["solvers"],
            name=d.get("name"),
            basis_method=basis.get("method"),
            n_max=basis.get("n_max"),
            train_size=basis.get("train_size"),
            train_seed=basis.get("train_seed"),
            greedy_seed=basis.get("greedy_seed"),
            snapshot_solver=basis.get("snapshot_solver"),
            coarse_level=basis.get("coarse_level"),
            fine_mode=basis.get("fine_mode"),
            basis_path=basis.get("path"),
            sweep_count=sweep.get("count"),
            sweep_seed=sweep.get("seed"),
            n_list=d.get("n_list"),
            tol=d.get("tol"),
            maxit=d.get("maxit"),
            gamma=d.get("gamma"),
            smoother_kind=sm.get("kind"),
            smoother_sweeps=sm.get("sweeps"),
            smoother_omega=sm.get("omega"),
            mg_levels=mg.get("levels"),
            mg_sweeps=mg.get("sweeps"),
            workers=d.get("workers"),
            output=d.get("output"),
        )
        return cls(**{k: v for k, v in kw.items() if v is not None})

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "case": self.case,
            "level": self.level,
            "solvers": [asdict(s) for s in self.solvers],
            "basis": {
                "method": self.basis_method,
                "n_max": self.n_max,
                "train_size": self.train_size,
                "train_seed": self.train_seed,
                "greedy_seed": self.greedy_seed,
                "snapshot_solver": self.snapshot_solver,
                "fine_mode": self.fine_mode,
            },
            "sweep": {"count": self.sweep_count, "seed": self.sweep_seed},
            "tol": self.tol,
            "maxit": self.maxit,
            "gamma": self.gamma,
            "smoother": {"kind": self.smoother_kind, "sweeps": self.smoother_sweeps,
                         "omega": self.smoother_omega},
            "mg": {"levels": self.mg_levels, "sweeps": list(self.mg_sweeps)},
            "workers": self.workers,
        }
        if self.coarse_level is not None:
            d["basis"]["coarse_level"] = self.coarse_level
        if self.basis_path is not None:
            d["basis"]["path"] = self.basis_path
        if self.n_list:
            d["n_list"] = list(self.n_list)
        if self.output is not None:
            d["output"] = self.output
        return d

    def with_overrides(self, **kw) -> "ExperimentSpec":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    @property
    def smoother(self) -> SmootherSpec:
        return SmootherSpec(self.smoother_kind, self.smoother_sweeps, self.smoother_omega)

    def solver_config(self, entry: SolverEntry | None = None) -> SolverConfig:
        return SolverConfig(
            tol=self.tol,
            maxit=self.maxit,
            smoother=self.smoother,
            gamma=self.gamma,
            adaptive_n=bool(entry and entry.adaptive),
            n_rb=None if entry is None else entry.n,
        )

    @property
    def needs_basis(self) -> bool:
        return any(s.name in RB_SOLVERS for s in self.solvers) or bool(self.n_list)

    @property
    def needs_mg(self) -> bool:
        return any(s.name == "mgcg" for s in self.solvers)


def load_spec(path) -> ExperimentSpec:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: expected a mapping at top level")
    return ExperimentSpec.from_dict(data)


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "results"))


def _resolve_output(spec: ExperimentSpec, output_dir) -> Path:
    if output_dir is not None:
        return Path(output_dir)
    if spec.output is not None:
        p = Path(spec.output)
        return p if p.is_absolute() else output_root() / p
    return output_root() / spec.name


def _atomic_write(path: Path, write) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    os.close(fd)
    try:
        write(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path: Path, data) -> None:
    def w(tmp):
        with open(tmp, "w") as fh:
            json.dump(data, fh, indent=2, default=_jsonable)
            fh.write("\n")

    _atomic_write(path, w)


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, WorkCounter):
        return asdict(o)
    raise TypeError(type(o))


# -- offline phase ---------------------------------------------------------


@dataclass
class OfflineResult:
    basis: ReducedBasis
    report: GreedyReport | dict | None
    time: float
    work: WorkCounter


def _mg_hierarchy(spec: ExperimentSpec, level: int | None = None) -> MgHierarchy:
    level = spec.level if level is None else level
    n_levels = None
    if spec.mg_levels is not None and level == spec.level:
        n_levels = spec.mg_levels
    return MgHierarchy.for_case(spec.case, level, n_levels, sweeps=spec.mg_sweeps)


def _snapshot_solver(spec: ExperimentSpec, problem: GridProblem, tol: float):
    if spec.snapshot_solver == "dense":
        return dense_snapshot_solver()
    if spec.snapshot_solver == "mgcg":
        return mgcg_snapshot_solver(_mg_hierarchy(spec, problem.level), tol)
    return cg_snapshot_solver(tol)


def build_basis(spec: ExperimentSpec, problem: GridProblem | None = None, n_max: int | None = None) -> OfflineResult:
    """Offline phase: build (or load) the reduced basis described by ``spec``.

    Snapshots are solved to ``0.01 * tol`` so basis quality does not
    depend on the online tolerance.
    """
    problem = problem or assemble_case(spec.case, spec.level)
    n_max = n_max or spec.n_max
    counter = WorkCounter()
    t0 = time.perf_counter()
    with counting(counter):
        if spec.basis_path is not None:
            basis = load_basis(spec.basis_path)
            if basis.size != problem.size:
                raise ValueError(f"basis at {spec.basis_path} has size {basis.size}, grid has {problem.size}")
            report = None
        else:
            train = TrainingSet.uniform_random(problem.domain, spec.train_size, spec.train_seed)
            snap_tol = 0.01 * spec.tol
            cfg = SolverConfig(tol=snap_tol, maxit=max(spec.maxit, 1000), smoother=spec.smoother, gamma=spec.gamma)
            meta = dict(case_id=problem.case, grid_id=problem.grid_id)
            if spec.basis_method == "greedy":
                basis, report = greedy_build(problem.op, problem.rhs, train, n_max,
                                             _snapshot_solver(spec, problem, snap_tol), spec.greedy_seed, **meta)
            elif spec.basis_method == "adaptive":
                basis, report = adaptive_greedy_build(problem.op, problem.rhs, train, n_max,
                                                      _snapshot_solver(spec, problem, snap_tol), cfg,
                                                      spec.greedy_seed, **meta)
            else:
                coarse = assemble_case(spec.case, spec.coarse_level)
                basis, report = multifidelity_build(coarse, problem, train, n_max, spec.fine_mode, cfg,
                                                    spec.greedy_seed)
    return OfflineResult(basis, report, time.perf_counter() - t0, counter)


# -- online sweep ----------------------------------------------------------


def _run_one(entry: SolverEntry, spec: ExperimentSpec, A, b, mu, basis, hierarchy) -> ConvergenceHistory:
    cfg = spec.solver_config(entry)
    try:
        if entry.name == "cg":
            _, hist = cg_solve(A, b, mu, cfg)
        elif entry.name == "mgcg":
            _, hist = mgcg_solve(hierarchy, mu, b, cfg)
        elif entry.name == "rbi":
            _, hist = rbi_solve(A, b, mu, basis, cfg)
        else:
            _, hist = rbcg_solve(A, b, mu, basis, cfg)
    except Exception as e:  # recorded per run; the sweep goes on
        log.warning("%s at mu=%s failed: %s", entry.label, mu, e)
        hist = ConvergenceHistory(entry.name, terminated="error", events=[f"{type(e).__name__}: {e}"])
    return hist


@dataclass
class ExperimentResult:
    """Histories of a sweep, indexed ``histories[label][mu_index]``."""

    spec: ExperimentSpec
    mus: np.ndarray
    histories: dict
    offline: OfflineResult | None = None
    mg_setup_time: float = 0.0
    output_dir: Path | None = None
    checks: list = field(default_factory=list)

    @property
    def labels(self) -> list:
        return list(self.histories)

    def iterations(self, label) -> np.ndarray:
        return np.array([h.iterations for h in self.histories[label]])

    def median_iterations(self) -> dict:
        return {k: float(np.median(self.iterations(k))) for k in self.histories}

    def cumulative_time(self, label) -> np.ndarray:
        """Running wall time over the sweep, starting from the offline cost.

        RB solvers are charged the basis construction, MG-CG its hierarchy
        setup and CG nothing.
        """
        name = self.histories[label][0].solver if self.histories[label] else label
        start = 0.0
        if name in RB_SOLVERS and self.offline is not None:
            start = self.offline.time
        elif name == "mgcg":
            start = self.mg_setup_time
        per_run = [h.wall_time_per_phase.get("total", 0.0) for h in self.histories[label]]
        return start + np.cumsum(per_run)

    def summary(self) -> dict:
        bw = best_worst_select(self)
        solvers = {}
        for label, hs in self.histories.items():
            its = self.iterations(label)
            b, w = bw[label]
            phases = {"setup": 0.0, "iterate": 0.0, "total": 0.0}
            for h in hs:
                for k in phases:
                    phases[k] += h.wall_time_per_phase.get(k, 0.0)
            cum = self.cumulative_time(label)
            solvers[label] = {
                "iterations": its.tolist(),
                "terminated": [h.terminated for h in hs],
                "median_iterations": float(np.median(its)),
                "mean_iterations": float(np.mean(its)),
                "best": {"index": b, "mu": self.mus[b].tolist(), "iterations": int(its[b])},
                "worst": {"index": w, "mu": self.mus[w].tolist(), "iterations": int(its[w])},
                "best_worst_mean": (int(its[b]) + int(its[w])) / 2,
                "matvecs": [h.matvec_count for h in hs],
                "smoother_sweeps": [h.smoother_sweep_count for h in hs],
                "precond_calls": [h.precond_calls for h in hs],
                "full_flops": [h.work.full_flops + h.work.spmv_flops + h.work.sweep_flops for h in hs],
                "final_N": [h.basis_dims[-1] if h.basis_dims else None for h in hs],
                "true_relative_residual": [h.final_residual / h.rhs_norm if h.rhs_norm else None for h in hs],
                "time_s": [h.wall_time_per_phase.get("total", 0.0) for h in hs],
                "phase_time_s": phases,
                "cumulative_time_s": cum.tolist(),
                "events": {i: h.events for i, h in enumerate(hs) if h.events},
            }
        out = {
            "spec": self.spec.to_dict(),
            "n_unknowns": None,
            "mus": self.mus.tolist(),
            "solvers": solvers,
            "mg_setup_time_s": self.mg_setup_time,
            "checks": self.checks,
        }
        if self.offline is not None:
            rep = self.offline.report
            out["offline"] = {
                "time_s": self.offline.time,
                "basis_N": self.offline.basis.N,
                "samples": [s.tolist() for s in self.offline.basis.samples],
                "work": asdict(self.offline.work),
                "report": rep.to_dict() if isinstance(rep, GreedyReport)
                else {k: v.to_dict() for k, v in rep.items()} if isinstance(rep, dict) else None,
            }
        return out


def _ordering_checks(result: ExperimentResult) -> list:
    """Median iteration ordering: larger basis never worse than smaller, RBCG never worse than CG."""
    med = result.median_iterations()
    checks = []
    rbcg = sorted((s.n, s.label) for s in result.spec.solvers
                  if s.name == "rbcg" and not s.adaptive and s.n is not None)
    for (n1, l1), (n2, l2) in zip(rbcg, rbcg[1:]):
        checks.append({"name": f"median {l2} <= median {l1}", "passed": med[l2] <= med[l1],
                       "detail": f"{med[l2]} vs {med[l1]}"})
    if "cg" in med:
        for _, l in rbcg:
            checks.append({"name": f"median {l} <= median cg", "passed": med[l] <= med["cg"],
                           "detail": f"{med[l]} vs {med['cg']}"})
    failed = [(k, i) for k, hs in result.histories.items() for i, h in enumerate(hs) if not h.converged]
    checks.append({"name": "all runs converged", "passed": not failed,
                   "detail": ", ".join(f"{k}[{i}]" for k, i in failed[:10])})
    return checks


def run_experiment(spec: ExperimentSpec, output_dir=None, workers: int | None = None,
                   basis: ReducedBasis | None = None, write: bool = True) -> ExperimentResult:
    """Offline phase, then every requested solver at every sweep parameter.

    All solvers see the same assembled ``A(mu)``, ``f(mu)`` for a given
    parameter. Parameters are processed by a thread pool of ``workers``;
    results are collected by index so outputs do not depend on it.
    """
    problem = assemble_case(spec.case, spec.level)
    offline = None
    if spec.needs_basis:
        if basis is None:
            offline = build_basis(spec, problem)
        else:
            offline = OfflineResult(basis, None, 0.0, WorkCounter())
        basis = offline.basis
    hierarchy, mg_setup = None, 0.0
    if spec.needs_mg:
        t0 = time.perf_counter()
        hierarchy = _mg_hierarchy(spec)
        mg_setup = time.perf_counter() - t0
        # one entry per worker keeps every operator set cached during its run
        hierarchy.cache_size = max(hierarchy.cache_size, 2 * (workers or spec.workers))

    mus = problem.domain.sample(spec.sweep_count, spec.sweep_seed)

    def task(i):
        mu = mus[i]
        A = assemble_matrix(problem.op, mu)
        b = assemble_rhs(problem.rhs, mu)
        return [_run_one(s, spec, A, b, mu, basis, hierarchy) for s in spec.solvers]

    n_workers = workers or spec.workers
    if n_workers > 1:
        with ThreadPoolExecutor(n_workers) as pool:
            rows = list(pool.map(task, range(len(mus))))
    else:
        rows = [task(i) for i in range(len(mus))]
    histories = {s.label: [row[j] for row in rows] for j, s in enumerate(spec.solvers)}

    result = ExperimentResult(spec, mus, histories, offline, mg_setup)
    result.checks = _ordering_checks(result)
    if write:
        _write_result(result, _resolve_output(spec, output_dir), problem)
    return result


def _write_result(result: ExperimentResult, out: Path, problem: GridProblem) -> None:
    out.mkdir(parents=True, exist_ok=True)
    runs = out / "runs"
    runs.mkdir(exist_ok=True)
    for label, hs in result.histories.items():
        for i, h in enumerate(hs):
            _atomic_write(runs / f"{label}__mu{i:03d}.csv", lambda tmp, h=h: h.to_csv(tmp, include_time=False))
    if result.offline is not None and result.offline.report is not None:
        save_basis(out / "basis.rbb", result.offline.basis)
    summary = result.summary()
    summary["n_unknowns"] = problem.size
    _write_json(out / "summary.json", summary)
    result.output_dir = out


def best_worst_select(result) -> dict:
    """Per solver, the indices of the fewest and the most iterations.

    ``result`` is an :class:`ExperimentResult` or a mapping from label to a
    sequence of histories or iteration counts. Ties go to the lowest index.
    """
    histories = result.histories if isinstance(result, ExperimentResult) else result
    out = {}
    for label, runs in histories.items():
        its = np.array([r.iterations if isinstance(r, ConvergenceHistory) else int(r) for r in runs])
        if its.size == 0:
            raise ValueError(f"no runs for {label}")
        out[label] = (int(np.argmin(its)), int(np.argmax(its)))
    return out


# -- dimension study -------------------------------------------------------


def dimension_study(spec: ExperimentSpec, output_dir=None, workers: int | None = None,
                    basis: ReducedBasis | None = None, write: bool = True):
    """RBI and RBCG iteration counts at each active dimension in ``spec.n_list``.

    Returns
    -------
    rows : list of dict
        One row per N with best, worst and mean (their average) per solver.
    checks : list of dict
        RBCG mean nonincreasing in N up to +1 per step, and RBI mean at
        least the RBCG mean at every N.
    """
    n_list = spec.n_list or (spec.n_max,)
    solvers = []
    for n in n_list:
        solvers += [SolverEntry("rbi", n), SolverEntry("rbcg", n)]
    sub = replace(spec, solvers=tuple(solvers), n_max=max(max(n_list), 1))
    result = run_experiment(sub, output_dir, workers, basis, write=False)
    bw = best_worst_select(result)
    rows = []
    for n in n_list:
        row = {"N": n}
        for name in RB_SOLVERS:
            label = SolverEntry(name, n).label
            its = result.iterations(label)
            b, w = bw[label]
            row[f"{name}_best"] = int(its[b])
            row[f"{name}_worst"] = int(its[w])
            row[f"{name}_mean"] = (int(its[b]) + int(its[w])) / 2
        rows.append(row)
    checks = []
    for prev, cur in zip(rows, rows[1:]):
        checks.append({"name": f"rbcg mean N={cur['N']} <= N={prev['N']} + 1",
                       "passed": cur["rbcg_mean"] <= prev["rbcg_mean"] + 1,
                       "detail": f"{cur['rbcg_mean']} vs {prev['rbcg_mean']}"})
    for row in rows:
        ok = row["rbi_mean"] >= row["rbcg_mean"]
        if not ok:
            log.warning("rbi mean below rbcg mean at N=%d", row["N"])
        checks.append({"name": f"rbi mean >= rbcg mean at N={row['N']}", "passed": ok,
                       "detail": f"{row['rbi_mean']} vs {row['rbcg_mean']}"})
    conv = [c for c in result.checks if c["name"] == "all runs converged"]
    checks += conv
    if write:
        out = _resolve_output(spec, output_dir)
        result.checks = checks
        problem = assemble_case(spec.case, spec.level)
        _write_result(result, out, problem)

        def w(tmp):
            with open(tmp, "w", newline="") as fh:
                wr = csv.DictWriter(fh, fieldnames=list(rows[0]))
                wr.writeheader()
                wr.writerows(rows)

        _atomic_write(out / "dim_study.csv", w)
    return rows, checks
