"""Command-line entry point (``rbsolve``).

Subcommands: ``build-basis``, ``solve``, ``sweep``, ``dim-study``,
``compare`` and ``export``. Settings come from ``--config`` (YAML or JSON)
and are overridden by explicit flags. Relative output paths are resolved
under ``$RBSOLVE_OUTPUT_ROOT`` (default ``./results``). The exit status is 1
when any check fails, 2 on usage errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import jsonschema
import numpy as np

from .affine import assemble_matrix, assemble_rhs, save_manifest
from .basis import save_basis
from .experiments import (
    ExperimentSpec,
    SolverEntry,
    _mg_hierarchy,
    _resolve_output,
    _run_one,
    _write_json,
    build_basis,
    dimension_study,
    load_spec,
    run_experiment,
)
from .greedy import GreedyReport
from .poisson import assemble_case

log = logging.getLogger("rbsolve")

_SMOOTHERS = {"jacobi": "jacobi", "gs": "gauss_seidel_forward", "sgs": "gauss_seidel_symmetric",
              "backward": "gauss_seidel_backward"}


def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("problem and solver settings (override --config)")
    g.add_argument("--config", type=Path, help="experiment file (YAML or JSON)")
    g.add_argument("--case", choices=["case1", "case2", "1", "2"])
    g.add_argument("--level", type=int, help="grid level: n = 2**level cells per axis")
    g.add_argument("--tol", type=float, help="relative residual tolerance")
    g.add_argument("--maxit", type=int)
    g.add_argument("--gamma", type=float, help="required residual drop per step with --adaptive-n")
    g.add_argument("--adaptive-n", action="store_true", default=None,
                   help="grow the active basis dimension on slow steps")
    g.add_argument("--nrb", type=int, help="active basis dimension for rbi/rbcg given without one")
    g.add_argument("--smoother", choices=sorted(_SMOOTHERS))
    g.add_argument("--sweeps", type=int, help="smoother sweeps per application")
    g.add_argument("--omega", type=float, help="Jacobi damping")
    g.add_argument("--train-size", type=int)
    g.add_argument("--train-seed", type=int)
    g.add_argument("--seed", type=int, help="seed of the parameter sweep")
    g.add_argument("--count", type=int, help="number of sweep parameters")
    g.add_argument("--nmax", type=int, help="basis size built offline")
    g.add_argument("--greedy", choices=["plain", "adaptive"])
    g.add_argument("--multifidelity", type=int, metavar="COARSE_LEVEL",
                   help="select parameters on this coarser level")
    g.add_argument("--basis", type=Path, help="load a saved basis instead of building one")
    g.add_argument("--mg-levels", type=int)
    g.add_argument("--mg-sweeps", type=int, nargs=2, metavar=("PRE", "POST"))
    g.add_argument("--workers", type=int)
    g.add_argument("--output", help="output directory")


def _spec_from_args(args, solvers=None) -> ExperimentSpec:
    if args.config is not None:
        spec = load_spec(args.config)
    else:
        if args.case is None or args.level is None:
            raise ValueError("give --config or both --case and --level")
        spec = ExperimentSpec(args.case, args.level, solvers or ("cg",))
    method = None
    if args.multifidelity is not None:
        method = "multifidelity"
    elif args.greedy is not None:
        method = "greedy" if args.greedy == "plain" else "adaptive"
    spec = spec.with_overrides(
        case=args.case and (f"case{args.case}" if args.case.isdigit() else args.case),
        level=args.level,
        tol=args.tol,
        maxit=args.maxit,
        gamma=args.gamma,
        smoother_kind=args.smoother and _SMOOTHERS[args.smoother],
        smoother_sweeps=args.sweeps,
        smoother_omega=args.omega,
        train_size=args.train_size,
        train_seed=args.train_seed,
        sweep_seed=args.seed,
        sweep_count=args.count,
        n_max=args.nmax,
        basis_method=method,
        coarse_level=args.multifidelity,
        basis_path=args.basis and str(args.basis),
        mg_levels=args.mg_levels,
        mg_sweeps=args.mg_sweeps and tuple(args.mg_sweeps),
        workers=args.workers,
        output=args.output,
    )
    if solvers is not None:
        spec = replace(spec, solvers=tuple(solvers))
    if args.nrb is not None or args.adaptive_n:
        fixed = []
        for s in spec.solvers:
            if s.name in ("rbi", "rbcg"):
                s = SolverEntry(s.name, s.n if s.n is not None else args.nrb, s.adaptive or bool(args.adaptive_n))
            fixed.append(s)
        spec = replace(spec, solvers=tuple(fixed))
    # re-run validation on the final combination
    return ExperimentSpec(**{f: getattr(spec, f) for f in spec.__dataclass_fields__})


def _parse_solvers(text):
    if text is None:
        return None
    return [SolverEntry.parse(s.strip()) for s in text.split(",") if s.strip()]


def _report_checks(checks) -> int:
    failed = 0
    for c in checks:
        status = "PASS" if c["passed"] else "FAIL"
        failed += not c["passed"]
        detail = f" ({c['detail']})" if c.get("detail") else ""
        print(f"[{status}] {c['name']}{detail}")
    return 1 if failed else 0


# -- subcommands -----------------------------------------------------------


def cmd_build_basis(args) -> int:
    spec = _spec_from_args(args, solvers=[SolverEntry("rbcg")])
    problem = assemble_case(spec.case, spec.level)
    off = build_basis(spec, problem)
    out = _resolve_output(spec, None)
    out.mkdir(parents=True, exist_ok=True)
    save_basis(out / "basis.rbb", off.basis)
    rep = off.report
    info = {
        "case": spec.case,
        "level": spec.level,
        "N": off.basis.N,
        "n_rejected": off.basis.n_rejected,
        "samples": [s.tolist() for s in off.basis.samples],
        "offline_time_s": off.time,
        "report": rep.to_dict() if isinstance(rep, GreedyReport)
        else {k: v.to_dict() for k, v in rep.items()} if isinstance(rep, dict) else None,
    }
    _write_json(out / "basis.json", info)
    print(f"basis N={off.basis.N} ({off.basis.n_rejected} rejected) written to {out / 'basis.rbb'}")
    return 0


def cmd_solve(args) -> int:
    entry = SolverEntry.parse(args.solver)
    spec = _spec_from_args(args, solvers=[entry])
    entry = spec.solvers[0]
    problem = assemble_case(spec.case, spec.level)
    mu = np.array(args.mu, dtype=np.float64)
    if mu.size != problem.domain.dim:
        raise ValueError(f"--mu needs {problem.domain.dim} value(s)")
    problem.domain.check(mu)
    basis = build_basis(spec, problem).basis if entry.name in ("rbi", "rbcg") else None
    hierarchy = _mg_hierarchy(spec) if entry.name == "mgcg" else None
    A = assemble_matrix(problem.op, mu)
    b = assemble_rhs(problem.rhs, mu)
    hist = _run_one(entry, spec, A, b, mu, basis, hierarchy)
    summary = hist.summary()
    summary["mu"] = mu.tolist()
    print(json.dumps(summary, indent=2))
    if args.output is not None:
        out = _resolve_output(spec, None)
        out.mkdir(parents=True, exist_ok=True)
        hist.to_csv(out / f"{entry.label}.csv")
        _write_json(out / f"{entry.label}.json", summary)
    return 0 if hist.converged else 1


def cmd_sweep(args) -> int:
    spec = _spec_from_args(args, solvers=_parse_solvers(args.solvers))
    res = run_experiment(spec, workers=spec.workers)
    for label, med in res.median_iterations().items():
        print(f"{label:24s} median iterations {med:g}")
    print(f"results in {res.output_dir}")
    return _report_checks(res.checks)


def cmd_dim_study(args) -> int:
    spec = _spec_from_args(args, solvers=[SolverEntry("rbcg")])
    if args.n_list:
        spec = replace(spec, n_list=tuple(int(n) for n in args.n_list.split(",")))
    rows, checks = dimension_study(spec, workers=spec.workers)
    print(f"{'N':>4} {'rbi mean':>9} {'rbcg mean':>10}")
    for r in rows:
        print(f"{r['N']:>4} {r['rbi_mean']:>9g} {r['rbcg_mean']:>10g}")
    return _report_checks(checks)


def cmd_compare(args) -> int:
    """Compare solvers inside one sweep result against a reference solver."""
    path = Path(args.results)
    if path.is_dir():
        path = path / "summary.json"
    with open(path) as fh:
        summary = json.load(fh)
    solvers = summary["solvers"]
    if args.reference not in solvers:
        raise ValueError(f"reference {args.reference!r} not in {sorted(solvers)}")
    ref = solvers[args.reference]
    ref_med = float(np.median(ref["iterations"]))
    ref_mv = float(np.median(ref["matvecs"]))
    print(f"{'solver':24s} {'med it':>7} {'it ratio':>9} {'med SpMV':>9} {'SpMV ratio':>11} {'cum time s':>11}")
    for label, s in solvers.items():
        med = float(np.median(s["iterations"]))
        mv = float(np.median(s["matvecs"]))
        print(f"{label:24s} {med:7g} {med / ref_med:9.3f} {mv:9g} {mv / ref_mv if ref_mv else float('nan'):11.3f} "
              f"{s['cumulative_time_s'][-1]:11.3f}")
    checks = list(summary.get("checks", []))
    for item in args.max_ratio or []:
        label, _, bound = item.partition("=")
        if label not in solvers:
            raise ValueError(f"unknown solver {label!r} in --max-ratio")
        ratio = float(np.median(solvers[label]["iterations"])) / ref_med
        checks.append({"name": f"median {label} / median {args.reference} <= {bound}",
                       "passed": ratio <= float(bound), "detail": f"{ratio:.3f}"})
    return _report_checks(checks)


def cmd_export(args) -> int:
    spec = _spec_from_args(args)
    problem = assemble_case(spec.case, spec.level)
    out = _resolve_output(spec, None)
    path = save_manifest(out, problem.op, problem.rhs, name=f"{spec.case}_l{spec.level}",
                         meta={"case": spec.case, "level": spec.level, "grid_id": problem.grid_id})
    print(f"manifest written to {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rbsolve", description="Reduced-basis iterative solvers.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-basis", help="run the offline greedy and save the basis")
    _common(p)
    p.set_defaults(func=cmd_build_basis)

    p = sub.add_parser("solve", help="solve at one parameter")
    _common(p)
    p.add_argument("--solver", default="rbcg", help="cg, mgcg, rbi[:N], rbcg[:adaptive][:N]")
    p.add_argument("--mu", type=float, nargs="+", required=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="run solvers over random parameters")
    _common(p)
    p.add_argument("--solvers", help="comma-separated list, e.g. cg,rbcg:1,rbcg:5,mgcg")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("dim-study", help="iterations against active basis dimension")
    _common(p)
    p.add_argument("--n-list", help="comma-separated dimensions, e.g. 2,5,10")
    p.set_defaults(func=cmd_dim_study)

    p = sub.add_parser("compare", help="compare solvers of a finished sweep")
    p.add_argument("results", help="sweep output directory or its summary.json")
    p.add_argument("--reference", default="cg")
    p.add_argument("--max-ratio", action="append", metavar="LABEL=BOUND",
                   help="fail unless median(LABEL) / median(reference) <= BOUND")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("export", help="write the affine family as a manifest with Matrix Market terms")
    _common(p)
    p.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError, jsonschema.ValidationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
