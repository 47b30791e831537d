"""Command-line driver: scenario files in, bound tables out.

Subcommands: quench, ti-quench, p2, interp, solve, export, oracle.
Config precedence: command-line flags override scenario-file fields, which
override built-in defaults.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys

import numpy as np

from . import oracle as orl
from . import scenarios as sc
from .algebra import parse_polynomial
from .errors import DnpoError
from .hierarchy import assemble
from .sdp import SolverSettings, bounds, export_sdpa, import_sdpa, solve


def _solver_settings(args) -> SolverSettings:
    kw = {}
    if getattr(args, "eps", None) is not None:
        kw["eps"] = args.eps
    if getattr(args, "max_iter", None) is not None:
        kw["max_iter"] = args.max_iter
    if getattr(args, "seed", None) is not None:
        kw["seed"] = args.seed
    return SolverSettings(**kw)


def _load_doc(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _emit_rows(header, rows, fmt: str, out=sys.stdout):
    if fmt == "json":
        json.dump([dict(zip(header, r)) for r in rows], out, indent=2, default=str)
        out.write("\n")
        return
    if fmt == "csv":
        w = csv.writer(out)
        w.writerow(header)
        for r in rows:
            w.writerow(["" if v is None else v for v in r])
        return
    widths = [max(len(str(h)), *(len(_fmtcell(r[i])) for r in rows)) if rows else len(str(h))
              for i, h in enumerate(header)]
    out.write("  ".join(str(h).ljust(w) for h, w in zip(header, widths)).rstrip() + "\n")
    for r in rows:
        out.write("  ".join(_fmtcell(v).ljust(w) for v, w in zip(r, widths)).rstrip() + "\n")


def _fmtcell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def _worker_count() -> int:
    cap = os.environ.get("DNPO_THREADS")
    if cap:
        return max(1, int(cap))
    return max(1, os.cpu_count() or 1)


def _run_quench(args) -> int:
    doc = _load_doc(args.scenario)
    info = sc.load_scenario(doc)
    if info["scenario"] not in ("quench", "ti-quench"):
        raise DnpoError(f"scenario file is {info['scenario']!r}, expected a quench")
    ti = info["scenario"] == "ti-quench"
    taus = args.tau if args.tau else info["taus"]
    if not taus:
        raise DnpoError("a quench run needs at least one tau")
    kappa = tuple(args.kappa) if args.kappa else info["kappa"]
    settings = _solver_settings(args)
    compare = args.compare_oracle

    rows = []
    worst = 0
    for tau in sorted(taus):
        qp = sc.QuenchProblem(info["hamiltonian"], info["bits"], info["observable"],
                              tau, kappa, ti=ti)
        spec = (sc.build_ti_quench_relaxation(qp) if ti
                else sc.build_quench_relaxation(qp))
        lo, hi, sol_lo, sol_hi = bounds(spec, settings)
        if sol_lo.status != "Optimal" or sol_hi.status != "Optimal":
            worst = 1
        ora = None
        if compare and not ti:
            ora = orl.exact_quench(info["bits"], info["hamiltonian"], tau, info["observable"])
        status = f"{sol_lo.status}/{sol_hi.status}"
        rows.append((tau, lo, hi, ora, hi - lo) if status == "Optimal/Optimal"
                    else (tau, lo, hi, ora, hi - lo))
    _emit_rows(["tau", "lower", "upper", "oracle", "gap"], rows, args.format)
    return worst


def _run_p2(args) -> int:
    settings = _solver_settings(args)
    levels = args.levels or [2, 3]
    vals = {}
    ok = True
    for k in levels:
        spec = sc.build_p2_relaxation(k)
        sol = solve(assemble(spec), settings)
        vals[k] = sol.objective_value
        ok = ok and sol.status == "Optimal"
    exact = orl.exact_p2()
    line = ", ".join(f"k={k}: {vals[k]:.8f}" for k in levels) + f", exact: {exact:.8f}"
    print(line)
    return 0 if ok else 1


def _run_interp(args) -> int:
    doc = _load_doc(args.scenario)
    info = sc.load_scenario(doc)
    if info["scenario"] != "interp":
        raise DnpoError("scenario file is not an interpolation problem")
    settings = _solver_settings(args)
    taus = args.tau if args.tau else info["taus"]
    rows = []
    worst = 0
    for tau in sorted(taus):
        ip = sc.InterpolationProblem(info["e_max"], info["data"], tau)
        spec = sc.build_interpolation_relaxation(ip, info["level"])
        lo, hi, sol_lo, sol_hi = bounds(spec, settings)
        if sol_lo.status != "Optimal" or sol_hi.status != "Optimal":
            worst = 1
        rows.append((tau, lo, hi))
    _emit_rows(["tau", "lower", "upper"], rows, args.format)
    return worst


def _run_solve(args) -> int:
    prog = import_sdpa(args.program)
    sol = solve(prog, _solver_settings(args))
    print(json.dumps(sol.to_dict(include_x=args.with_x), indent=2))
    return 0 if sol.status == "Optimal" else 1


def _run_export(args) -> int:
    doc = _load_doc(args.scenario)
    info = sc.load_scenario(doc)
    kind = info["scenario"]
    if kind == "p2":
        spec = sc.build_p2_relaxation(info["level"])
    elif kind in ("quench", "ti-quench"):
        tau = (args.tau or info["taus"])[0]
        qp = sc.QuenchProblem(info["hamiltonian"], info["bits"], info["observable"],
                              tau, info["kappa"], ti=(kind == "ti-quench"))
        spec = (sc.build_ti_quench_relaxation(qp) if kind == "ti-quench"
                else sc.build_quench_relaxation(qp))
    else:
        ip = sc.InterpolationProblem(info["e_max"], info["data"], (args.tau or info["taus"])[0])
        spec = sc.build_interpolation_relaxation(ip, info["level"])
    text = export_sdpa(assemble(spec))
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _run_oracle(args) -> int:
    doc = _load_doc(args.scenario)
    info = sc.load_scenario(doc)
    if info["scenario"] != "quench":
        raise DnpoError("oracle runs need a finite quench scenario")
    taus = args.tau if args.tau else info["taus"]
    rows = [(tau, orl.exact_quench(info["bits"], info["hamiltonian"], tau, info["observable"]))
            for tau in sorted(taus)]
    _emit_rows(["tau", "value"], rows, args.format)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="dnpo",
        description="Moment-matrix SDP bounds for time-evolved operator averages.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, scenario=True):
        if scenario:
            p.add_argument("scenario", help="path to a scenario JSON file")
        p.add_argument("--tau", type=float, nargs="+", help="evolution times")
        p.add_argument("--kappa", type=int, nargs="+", metavar="K",
                       help="relaxation order: ksigma kt [n]")
        p.add_argument("--eps", type=float, help="solver tolerance")
        p.add_argument("--max-iter", type=int, dest="max_iter")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--format", choices=("text", "csv", "json"), default="text")
        p.add_argument("--single-thread", action="store_true",
                       help="pin worker pool to one process")

    p = sub.add_parser("quench", help="finite-chain quench bounds over a tau sweep")
    common(p)
    p.add_argument("--compare-oracle", action="store_true")
    p.set_defaults(func=_run_quench)

    p = sub.add_parser("ti-quench", help="translation-invariant quench bounds")
    common(p)
    p.add_argument("--compare-oracle", action="store_true")
    p.set_defaults(func=_run_quench)

    p = sub.add_parser("p2", help="two-projector exponential benchmark")
    p.add_argument("--levels", type=int, nargs="+")
    p.add_argument("--eps", type=float)
    p.add_argument("--max-iter", type=int, dest="max_iter")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_run_p2)

    p = sub.add_parser("interp", help="interpolation/extrapolation bounds")
    common(p)
    p.set_defaults(func=_run_interp)

    p = sub.add_parser("solve", help="solve an SDPA sparse file")
    p.add_argument("program", help="path to a .dat-s file")
    p.add_argument("--eps", type=float)
    p.add_argument("--max-iter", type=int, dest="max_iter")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--with-x", action="store_true", dest="with_x")
    p.set_defaults(func=_run_solve)

    p = sub.add_parser("export", help="export a scenario as an SDPA sparse file")
    common(p)
    p.add_argument("--output", "-o")
    p.set_defaults(func=_run_export)

    p = sub.add_parser("oracle", help="dense-simulation reference values")
    common(p)
    p.set_defaults(func=_run_oracle)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DnpoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
