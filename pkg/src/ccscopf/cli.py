"""Batch front-end: ``solve``, ``validate``, ``compare`` and ``sweep``.

Exit codes: 0 success, 2 infeasible, 3 backend or driver failure, 4 input error.
On failure a single JSON object ``{"error": ..., "message": ...}`` is written to stderr.
The conic backend can be forced with ``CCSCOPF_BACKEND=clarabel|highs``.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

EXIT_OK, EXIT_INFEASIBLE, EXIT_BACKEND, EXIT_INPUT = 0, 2, 3, 4


class InputError(Exception):
    pass


def _sha(path: Path | None) -> str | None:
    return None if path is None else hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _add_solver_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("solver")
    g.add_argument("--tol", type=float, default=1e-6, help="feasibility tolerance in p.u. (default 1e-6)")
    g.add_argument("--max-add", type=int, default=50, help="pairs added per iteration (default 50)")
    g.add_argument("--lodf-threshold", type=float, default=1e-3, help="cone sweep screening threshold")
    g.add_argument("--max-outer", type=int, default=500, help="maximum number of conic solves")
    g.add_argument("--no-warm-start", action="store_true")
    g.add_argument("--direct-form", action="store_true", help="two cones per pair instead of the margin form")
    g.add_argument("--eps-line", type=float, help="override line violation probability")
    g.add_argument("--eps-device", type=float, help="override HVDC/PST violation probability")
    g.add_argument("--eps-gen", type=float, help="override reserve violation probability")


def _add_case_flags(p: argparse.ArgumentParser):
    p.add_argument("--case", type=Path, required=True,
                   help="MATPOWER case file, or ieee118/ieee300/polish2383 for a bundled case with its sidecar")
    p.add_argument("--sidecar", type=Path, help="JSON with devices, uncertainty and modifications")
    p.add_argument("--threads", type=int, default=None, help="upper bound on BLAS threads")


def _add_mc_flags(p: argparse.ArgumentParser):
    p.add_argument("--samples", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--historical", type=Path, help="CSV of historical deviations (header: bus ids)")
    p.add_argument("--no-saturation", action="store_true", help="replay without clamping device set-points")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ccscopf", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve one mode and write the solution JSON")
    _add_case_flags(s)
    s.add_argument("--mode", default="e", choices=list("abcdes"))
    s.add_argument("--out", type=Path, default=Path("solution.json"))
    s.add_argument("--log", type=Path, help="JSON-lines iteration log")
    s.add_argument("--dump-problem", type=Path, help="write the final conic problem as JSON")
    _add_solver_flags(s)

    v = sub.add_parser("validate", help="Monte Carlo replay of a solution file")
    v.add_argument("--solution", type=Path, required=True)
    v.add_argument("--case", type=Path, help="defaults to the path stored in the solution")
    v.add_argument("--sidecar", type=Path)
    v.add_argument("--threads", type=int, default=None)
    v.add_argument("--out-dir", type=Path, default=Path("report"))
    _add_mc_flags(v)

    c = sub.add_parser("compare", help="solve modes a-e, tabulate costs and violations")
    _add_case_flags(c)
    c.add_argument("--modes", default="abcde")
    c.add_argument("--out-dir", type=Path, default=Path("compare"))
    c.add_argument("--pair", help="line,outage ids for the flow scatter (default: most binding in mode d)")
    _add_mc_flags(c)
    _add_solver_flags(c)

    w = sub.add_parser("sweep", help="mode d/e costs over violation probabilities and fluctuation levels")
    _add_case_flags(w)
    w.add_argument("--modes", default="de")
    w.add_argument("--eps", default="0.1,0.05,0.02,0.01,0.001", help="comma-separated list")
    w.add_argument("--sigma", default="5,7.5,10,12.5", help="comma-separated percent of load")
    w.add_argument("--sigma-eps", type=float, default=0.05, help="violation probability used in the sigma rows")
    w.add_argument("--sigma-ref", type=float, default=10.0, help="sigma (percent) encoded in the sidecar")
    w.add_argument("--out-dir", type=Path, default=Path("sweep"))
    _add_solver_flags(w)
    return ap


def _limit_threads(n: int | None):
    if n is None:
        return
    if n < 1:
        raise InputError("--threads must be positive")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "RAYON_NUM_THREADS"):
        os.environ[var] = str(n)


def _solver_config(args, log: Path | None = None):
    from .solver import SolverConfig

    return SolverConfig(tol=args.tol, max_add=args.max_add, lodf_threshold=args.lodf_threshold,
                        max_outer=args.max_outer, warm_start=not args.no_warm_start,
                        symmetric=not args.direct_form, log_path=str(log) if log else None)


def _resolve(case: Path, sidecar: Path | None) -> tuple[Path, Path | None]:
    """Map a bundled case name to its files; other paths pass through."""
    from .grid import BUNDLED, bundled_case

    if not case.exists() and str(case) in BUNDLED:
        case, default_sidecar = bundled_case(str(case))
        sidecar = default_sidecar if sidecar is None else sidecar
    return case, sidecar


def _load(case: Path, sidecar: Path | None, args=None):
    from dataclasses import replace

    from .grid import load_case, validate_case

    case, sidecar = _resolve(case, sidecar)
    if not case.exists():
        raise InputError(f"{case} does not exist")
    if sidecar is not None and not sidecar.exists():
        raise InputError(f"{sidecar} does not exist")
    gc = load_case(case, sidecar)
    errors = [d.message for d in validate_case(gc) if d.severity == "error"]
    if errors:
        raise InputError("; ".join(errors))
    if args is not None:
        ch = gc.chance
        gc = replace(gc, chance=replace(
            ch,
            eps_line=args.eps_line if getattr(args, "eps_line", None) else ch.eps_line,
            eps_device=args.eps_device if getattr(args, "eps_device", None) else ch.eps_device,
            eps_gen=args.eps_gen if getattr(args, "eps_gen", None) else ch.eps_gen,
        ))
    return gc


def _samples(args, prep):
    from .uncertainty import SampleSet, read_sample_csv, rescale_historical, sample_normal

    if args.samples < 0:
        raise InputError("--samples must be nonnegative")
    if args.historical is not None:
        if not args.historical.exists():
            raise InputError(f"{args.historical} does not exist")
        raw, cols = read_sample_csv(args.historical, [b.id for b in prep.case.buses])
        s = rescale_historical(raw, prep.model, cols)
        if args.samples and len(s) > args.samples:
            s = SampleSet(s.omega[: args.samples], s.provenance, None)
        return s
    return sample_normal(prep.model, args.samples, args.seed)


def cmd_solve(args) -> int:
    from .formulation import MODES, dump_problem
    from .solver import prepare, save_solution, solve_full_ccscopf

    gc = _load(args.case, args.sidecar, args)
    if MODES[args.mode].uncertain and gc.uncertainty is None:
        raise InputError("uncertainty spec required for modes d, e and s (pass --sidecar)")
    prep = prepare(gc)
    if args.log:
        args.log.parent.mkdir(parents=True, exist_ok=True)
        args.log.write_text("")
    sol = solve_full_ccscopf(prep, args.mode, _solver_config(args, args.log))
    case, sidecar = _resolve(args.case, args.sidecar)
    sol.source = {"case": str(case), "sidecar": None if sidecar is None else str(sidecar),
                  "case_sha256": _sha(case), "sidecar_sha256": _sha(sidecar),
                  "chance": [gc.chance.eps_line, gc.chance.eps_device, gc.chance.eps_gen]}
    form = sol.stats.get("formulation")
    if args.dump_problem and form is not None:
        args.dump_problem.write_text(json.dumps(dump_problem(form)))
    args.out.parent.mkdir(parents=True, exist_ok=True)
    save_solution(sol, args.out)
    print(json.dumps({"mode": sol.mode, "cost": round(sol.cost, 6), "solution": str(args.out),
                      "solves": sol.stats.get("solves"), "soc_evaluations": sol.stats.get("soc_evaluations")}))
    return EXIT_OK


def cmd_validate(args) -> int:
    from dataclasses import replace

    from .grid import ChanceParams
    from .solver import load_solution, prepare
    from .validation import simulate, write_report_files

    if not args.solution.exists():
        raise InputError(f"{args.solution} does not exist")
    sol = load_solution(args.solution)
    src = sol.source or {}
    case = args.case or (Path(src["case"]) if src.get("case") else None)
    if case is None:
        raise InputError("solution does not record its case; pass --case")
    sidecar = args.sidecar or (Path(src["sidecar"]) if src.get("sidecar") else None)
    gc = _load(case, sidecar)
    if src.get("chance"):
        gc = replace(gc, chance=ChanceParams(*src["chance"]))
    prep = prepare(gc)
    samples = _samples(args, prep)
    try:
        rep = simulate(sol, prep, samples, use_saturation=not args.no_saturation)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    write_report_files(rep, args.out_dir, f"validate_{sol.mode}")
    print(json.dumps(rep.summary(), sort_keys=True))
    return EXIT_OK


def cmd_compare(args) -> int:
    from .solver import prepare
    from .validation import (analytic_flow_std, compare_modes, costs_csv, eps_table_csv, most_binding_pair,
                             pair_flow_samples, scatter_dat)

    gc = _load(args.case, args.sidecar, args)
    bad = set(args.modes) - set("abcdes")
    if bad:
        raise InputError(f"unknown mode(s) {sorted(bad)}")
    prep = prepare(gc)
    samples = _samples(args, prep)
    cb, sols, reps = compare_modes(prep, samples, args.modes, _solver_config(args))
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "costs.csv").write_text(costs_csv(cb))
    lines = ["mode,saturation,joint_line,joint_line_fraction,joint_any,device_events,reserve_events"]
    for m in args.modes:
        for r in reps.get(m, ()):
            lines.append(f"{m},{int(r.saturation)},{r.joint_line},{r.joint_fraction:.6f},{r.joint_any},"
                         f"{r.device_events},{r.reserve_events}")
    (out / "violations.csv").write_text("\n".join(lines) + "\n")
    summary = {
        "costs": cb.costs,
        "status": cb.status,
        "normalized": cb.normalized(),
        "cost_of_security": cb.cost_of_security,
        "cost_of_security_corrective": cb.cost_of_security_corrective,
        "cost_of_uncertainty": cb.cost_of_uncertainty,
        "cost_of_uncertainty_corrective": cb.cost_of_uncertainty_corrective,
        "security_reduction_pct": cb.reduction_pct("b", "c"),
        "uncertainty_reduction_pct": cb.reduction_pct("d", "e"),
        "samples": len(samples),
        "seed": args.seed,
    }
    pair = None
    if args.pair:
        try:
            pair = tuple(int(v) for v in args.pair.split(","))
        except ValueError as exc:
            raise InputError(f"--pair expects two line ids, got {args.pair!r}") from exc
    elif "d" in sols:
        pair = most_binding_pair(sols["d"])
    if pair is not None:
        summary["pair"] = list(pair)
        for m in ("d", "e"):
            if m in sols:
                summary[f"pair_std_{m}"] = analytic_flow_std(sols[m], prep, *pair)
                flow, dev = pair_flow_samples(sols[m], prep, samples, *pair)
                (out / f"scatter_{m}.dat").write_text(
                    scatter_dat(flow, dev, f"line {pair[0]} after outage {pair[1]}, mode {m}"))
    for m in ("d", "e"):
        if m in reps:
            sol = sols[m]
            pairs = [tuple(p) for p in sol.soc_pairs]
            std = {p: analytic_flow_std(sol, prep, *p) for p in pairs}
            (out / f"eps_{m}.csv").write_text(eps_table_csv(reps[m][0], pairs, std))
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True))
    print(json.dumps({"costs": cb.costs, "status": cb.status}, sort_keys=True))
    return EXIT_OK


def _floats(text: str, flag: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise InputError(f"{flag}: {exc}") from exc
    if not vals:
        raise InputError(f"{flag} needs at least one value")
    return vals


def cmd_sweep(args) -> int:
    from .validation import sensitivity_sweep, sweep_csv

    gc = _load(args.case, args.sidecar, args)
    if gc.uncertainty is None:
        raise InputError("uncertainty spec required for the sweep (pass --sidecar)")
    eps = _floats(args.eps, "--eps")
    sig = _floats(args.sigma, "--sigma")
    rows = sensitivity_sweep(gc, eps, sig, args.modes, _solver_config(args), args.sigma_eps, args.sigma_ref)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    (args.out_dir / "sweep.csv").write_text(sweep_csv(rows))
    print(json.dumps(rows, sort_keys=True))
    return EXIT_OK


def _fail(code: int, kind: str, message: str, extra: dict | None = None) -> int:
    doc = {"error": kind, "message": message}
    if extra:
        doc.update(extra)
    print(json.dumps(doc, sort_keys=True, default=str), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _limit_threads(args.threads)
        from .conic import BackendError
        from .grid import CaseError
        from .solver import InfeasibleError, SolverError
        from .uncertainty import UncertaintyError

        handler = {"solve": cmd_solve, "validate": cmd_validate, "compare": cmd_compare, "sweep": cmd_sweep}
        try:
            return handler[args.command](args)
        except InfeasibleError as exc:
            return _fail(EXIT_INFEASIBLE, "infeasible", str(exc), {"diagnostics": exc.diagnostics})
        except (BackendError, SolverError) as exc:
            return _fail(EXIT_BACKEND, "backend", str(exc))
        except (CaseError, UncertaintyError, json.JSONDecodeError, KeyError) as exc:
            return _fail(EXIT_INPUT, "input", str(exc))
    except InputError as exc:
        return _fail(EXIT_INPUT, "input", str(exc))


if __name__ == "__main__":
    sys.exit(main())
