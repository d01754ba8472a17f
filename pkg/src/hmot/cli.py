"""Command-line front end: ``hmot <command> --config problem.json [options]``.

Exit codes: 0 success, 1 check failed (homogeneity test or hedge slack),
2 infeasible, 3 refused at the scale cap, 4 bad input or config.

Payoff grammar: numbers, coordinates ``S1..SN``, ``+ - * /``, unary minus,
parentheses, and the functions ``pos(x)``, ``abs(x)``, ``max(x, y)``,
``min(x, y)``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import load_config
from .exceptions import HMOTError, InfeasibleError, InputError, ScaleLimitError
from .hedging import dual_gap, extract_portfolio, portfolio_cost, verify_superhedge
from .lp.export import write_model
from .measures import match_atoms
from .payoff import shift_coords
from .penalized import PenaltyConfig, solve_pen_hmot
from .problem import Mode, ProblemSpec, TimeGrid
from .transport import Coupling, bounds, build_primal, check_homogeneous, feasibility_hom, solve_primal

log = logging.getLogger("hmot")

SCHEMA_VERSION = "1.0"
EXIT_OK, EXIT_FAIL, EXIT_INFEASIBLE, EXIT_SCALE, EXIT_INPUT = 0, 1, 2, 3, 4
SWEEP_HEADER = ("k", "mot_inf", "mot_sup", "hmot_inf", "hmot_sup")
PEN_HEADER = ("r", "sense", "value", "expectation", "penalty", "fw_gap", "iterations", "converged")

# stable warning codes carried in every report
WARNING_CODES = {
    "W001": "homogeneity vacuous",
    "W002": "not in convex order",
    "W003": "pairwise martingale rows give outer bounds only",
    "W004": "Frank-Wolfe stopped before the gap tolerance",
    "W005": "hedge verified on a sample of paths",
    "W006": "model beyond the scale cap was exported instead of solved",
    "W007": "solution residual above the reporting tolerance",
}


def _code_for(message: str) -> str:
    for code, text in WARNING_CODES.items():
        if text in message:
            return code
    return "W000"


class _Run:
    """Collects warnings, timing and output for one command."""

    def __init__(self, command: str):
        self.command = command
        self.warnings: list = []
        self.start = time.perf_counter()
        self._catcher = warnings.catch_warnings(record=True)
        self._caught = self._catcher.__enter__()
        warnings.simplefilter("always")

    def warn(self, code: str, message: str):
        entry = {"code": code, "message": message}
        if entry not in self.warnings:
            self.warnings.append(entry)

    def close(self):
        self._catcher.__exit__(None, None, None)
        for w in self._caught:
            msg = str(w.message)
            self.warn(_code_for(msg), msg)

    def report(self, **fields) -> dict:
        self.close()
        out = {"schema_version": SCHEMA_VERSION, "command": self.command}
        out.update(fields)
        out["warnings"] = sorted(self.warnings, key=lambda w: (w["code"], w["message"]))
        out["timing"] = {"seconds": round(time.perf_counter() - self.start, 3)}
        return out


def _emit_json(report: dict, out) -> None:
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    if out:
        Path(out).write_text(text + "\n")


def _emit_csv(header, rows, out) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for v in row])
    text = buf.getvalue()
    sys.stdout.write(text)
    if out:
        Path(out).write_text(text)
    return text


def _parse_r(text):
    if text is None:
        return None
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InputError(f"--r expects numbers, got {text!r}") from None
    if not vals:
        raise InputError("--r is empty")
    return vals


def _spec_from_args(args) -> ProblemSpec:
    cfg = load_config(args.config)
    spec = cfg.spec
    changes = {}
    if getattr(args, "mode", None):
        changes["mode"] = Mode(args.mode)
    if getattr(args, "sense", None):
        changes["sense"] = "both" if args.sense == "both" else args.sense
    if getattr(args, "metric", None):
        changes["metric"] = args.metric
    r = _parse_r(getattr(args, "r", None))
    if r is not None and args.command != "pen":
        changes["r"] = r[0]
    mode = changes.get("mode", spec.mode)
    if mode in (Mode.RHMOT, Mode.PEN) and changes.get("r", spec.r) is None:
        changes["r"] = 0.0 if mode is Mode.RHMOT else 1.0
    return spec.replace(**changes) if changes else spec


def _model_stats(primal) -> dict:
    m = primal.model
    return {"n_cols": m.n_cols, "n_rows": m.n_rows, "nnz": int(m.A.nnz), "n_paths": primal.n_paths}


def _sense_entry(sr) -> dict:
    sol = sr.solution
    entry = {"status": sr.status, "backend": sol.backend, "iterations": sol.iterations}
    if sol.optimal:
        entry.update({
            "value": sol.objective,
            "dual_objective": sol.dual_objective,
            "duality_gap": sol.duality_gap,
            "primal_residual": sol.primal_residual,
            "dual_residual": sol.dual_residual,
            "cs_residual": sol.cs_residual,
        })
    return entry


def _check_residuals(run: _Run, sense: str, sol, tol: float):
    if sol.optimal and (max(sol.primal_residual, sol.dual_residual) > 1e-8 or sol.duality_gap > tol):
        run.warn("W007", f"{sense}: {WARNING_CODES['W007']} (gap {sol.duality_gap:.3g})")


# ---------------------------------------------------------------------------
# commands


def cmd_bounds(args) -> int:
    run = _Run("bounds")
    spec = _spec_from_args(args)
    if spec.pairwise:
        run.warn("W003", WARNING_CODES["W003"])
    if spec.mode is Mode.PEN:
        return _bounds_pen(run, spec, args)
    try:
        primal = build_primal(spec)
    except ScaleLimitError as exc:
        _emit_json(run.report(mode=spec.mode.value, status="scale_limit", message=str(exc),
                              n_vars=exc.n_vars, cap=exc.cap), args.out)
        return EXIT_SCALE
    res = bounds(spec, primal=primal)
    senses = {}
    values = {}
    for sense, sr in res.results.items():
        senses[sense] = _sense_entry(sr)
        if sr.status == "optimal":
            values[sense] = sr.value
            _check_residuals(run, sense, sr.solution, args.tol)
            if args.couplings and sr.coupling is not None:
                sr.coupling.to_csv(f"{args.couplings}_{sense}.csv")
    status = "optimal" if all(s["status"] == "optimal" for s in senses.values()) else res.status
    fields = dict(
        mode=spec.mode.value, senses=senses, values=values, status=status, model=_model_stats(primal),
        duality_gaps={k: v["duality_gap"] for k, v in senses.items() if "duality_gap" in v},
    )
    if res.diagnosis:
        fields["diagnosis"] = res.diagnosis
    _emit_json(run.report(**fields), args.out)
    if any(s["status"] == "infeasible" for s in senses.values()):
        return EXIT_INFEASIBLE
    return EXIT_OK if status == "optimal" else EXIT_FAIL


def _bounds_pen(run, spec, args) -> int:
    senses, values = {}, {}
    for sense in spec.senses():
        res = solve_pen_hmot(spec, _pen_config(spec, spec.r, args), sense)
        if not res.converged:
            run.warn("W004", f"{sense}: {WARNING_CODES['W004']} (gap {res.fw_gap:.3g})")
        senses[sense] = {"status": "optimal" if res.converged else "stopped", "value": res.value,
                         "expectation": res.expectation, "penalty": res.penalty,
                         "fw_gap": res.fw_gap, "iterations": res.iterations}
        values[sense] = res.value
    _emit_json(run.report(mode="pen", senses=senses, values=values, status="optimal"), args.out)
    return EXIT_OK


def _pen_config(spec, r, args) -> PenaltyConfig:
    kw = {}
    if getattr(args, "max_iter", None):
        kw["max_iter"] = args.max_iter
    return PenaltyConfig(r=r, **kw)


def _sweep_spec(spec: ProblemSpec, k: int, mode: Mode) -> ProblemSpec:
    n = len(spec.marginals)
    labels = spec.grid.labels[n - k:]
    return ProblemSpec(
        TimeGrid(labels), spec.marginals[n - k:], shift_coords(spec.payoff, n - k), mode, "both",
        solver=spec.solver,
    )


def _sweep_job(job):
    spec, k, out_dir = job
    row = {"k": k}
    notes = []
    for mode in (Mode.MOT, Mode.HMOT):
        sub = _sweep_spec(spec, k, mode)
        try:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                res = bounds(sub)
            notes += [str(w.message) for w in caught]
        except ScaleLimitError as exc:
            path = None
            if out_dir is not None:
                path = Path(out_dir) / f"sweep_k{k}_{mode.value}.mps"
                primal = build_primal(sub.replace(sense="sup"), max_vars=0)
                write_model(primal.model, path, "mps")
            notes.append(f"k={k} {mode.value}: {WARNING_CODES['W006']} ({exc.n_vars} variables)"
                         + (f" -> {path}" if path else ""))
            row[f"{mode.value}_inf"] = row[f"{mode.value}_sup"] = None
            row["refused"] = True
            continue
        row[f"{mode.value}_inf"] = res.inf
        row[f"{mode.value}_sup"] = res.sup
        if res.status != "optimal":
            row["infeasible"] = True
    return row, notes


def cmd_sweep(args) -> int:
    run = _Run("sweep")
    spec = load_config(args.config).spec
    n = len(spec.marginals)
    steps = list(range(2, n + 1)) if not args.steps else [int(s) for s in args.steps.split(",")]
    if any(k < 2 or k > n for k in steps):
        raise InputError(f"--steps must lie in 2..{n}")
    out_dir = Path(args.out).parent if args.out else Path.cwd()
    jobs = [(spec, k, out_dir) for k in steps]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_job, jobs))
    else:
        results = [_sweep_job(j) for j in jobs]
    rows = []
    code = EXIT_OK
    for row, notes in results:
        for msg in notes:
            run.warn(_code_for(msg), msg)
        if row.get("refused"):
            code = EXIT_SCALE
        elif row.get("infeasible") and code == EXIT_OK:
            code = EXIT_INFEASIBLE
        rows.append([row["k"]] + [row.get(h) for h in SWEEP_HEADER[1:]])
    _emit_csv(SWEEP_HEADER, rows, args.out)
    report = run.report(steps=steps, rows=[dict(zip(SWEEP_HEADER, r)) for r in rows])
    if args.report:
        Path(args.report).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    for w in report["warnings"]:
        log.warning("%s %s", w["code"], w["message"])
    return code


def cmd_check_hom(args) -> int:
    run = _Run("check-hom")
    spec = load_config(args.config).spec
    coupling = Coupling.read_csv(args.coupling)
    if coupling.n_times != len(spec.grid):
        raise InputError(f"grid mismatch: coupling has {coupling.n_times} times, config has {len(spec.grid)}")
    for t, mu in enumerate(spec.marginals):
        w = coupling.marginal_weights(t + 1)
        support = coupling.values[t][w > 0]
        i, _ = match_atoms(support, mu.values)
        if len(i) != len(support):
            bad = np.setdiff1d(np.arange(len(support)), i)[0]
            raise InputError(f"grid mismatch: coupling atom {support[bad]} at time {t + 1} is not on the config grid")
    rep = check_homogeneous(coupling, spec.delta, tol=args.tol)
    _emit_json(run.report(**rep.to_dict()), args.out)
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_hedge(args) -> int:
    run = _Run("hedge")
    spec = _spec_from_args(args)
    if spec.pairwise:
        run.warn("W003", WARNING_CODES["W003"])
    try:
        primal = build_primal(spec)
    except ScaleLimitError as exc:
        _emit_json(run.report(status="scale_limit", message=str(exc)), args.out)
        return EXIT_SCALE
    portfolios, reports, costs, gaps, values = {}, {}, {}, {}, {}
    code = EXIT_OK
    for sense in spec.senses():
        sol = solve_primal(primal, sense)
        if not sol.optimal:
            reports[sense] = {"status": sol.status}
            code = EXIT_INFEASIBLE if sol.status == "infeasible" else EXIT_FAIL
            continue
        pf = extract_portfolio(primal, sol, sense)
        cost = portfolio_cost(pf, spec.marginals)
        rep = verify_superhedge(pf, spec, tol=args.tol)
        if not rep.exhaustive:
            run.warn("W005", f"{sense}: {WARNING_CODES['W005']} (seed {rep.seed})")
        portfolios[sense] = pf.to_dict()
        reports[sense] = rep.to_dict()
        costs[sense] = cost
        values[sense] = sol.objective
        gaps[sense] = dual_gap(sol.objective, cost)
        if not rep.passed and code == EXIT_OK:
            code = EXIT_FAIL
    _emit_json(run.report(mode=spec.mode.value, values=values, costs=costs, dual_gaps=gaps,
                          verification=reports, portfolios=portfolios), args.out)
    return code


def cmd_export(args) -> int:
    spec = _spec_from_args(args)
    if spec.sense == "both":
        spec = spec.replace(sense="sup")
    primal = build_primal(spec, max_vars=0)
    out = args.out or f"{spec.mode.value}.{args.export_format}"
    write_model(primal.model, out, args.export_format)
    m = primal.model
    print(f"variables {m.n_cols}")
    print(f"rows {m.n_rows}")
    print(f"nonzeros {m.A.nnz}")
    print(f"written {out}")
    return EXIT_OK


def cmd_pen(args) -> int:
    run = _Run("pen")
    spec = _spec_from_args(args)
    grid = _parse_r(args.r) or [float(spec.r) if spec.r is not None else 1.0]
    rows = []
    stem = Path(args.out).with_suffix("") if args.out else None
    for i, r in enumerate(grid):
        for sense in spec.senses():
            res = solve_pen_hmot(spec, _pen_config(spec, r, args), sense)
            if not res.converged:
                run.warn("W004", f"r={r!r} {sense}: {WARNING_CODES['W004']}")
            rows.append([r, sense, res.value, res.expectation, res.penalty, res.fw_gap, res.iterations,
                         str(res.converged).lower()])
            if stem is not None:
                res.write_trace(f"{stem}_trace_{sense}_{i}.csv")
    _emit_csv(PEN_HEADER, rows, args.out)
    for w in run.report()["warnings"]:
        log.warning("%s %s", w["code"], w["message"])
    return EXIT_OK


def cmd_feasibility(args) -> int:
    run = _Run("feasibility")
    spec = load_config(args.config).spec
    res = feasibility_hom(spec.marginals, martingale=args.martingale, max_vars=spec.solver.max_vars,
                          backend=spec.solver.backend)
    _emit_json(run.report(**res.to_dict()), args.out)
    if res.feasible is None:
        return EXIT_SCALE
    return EXIT_OK if res.feasible else EXIT_INFEASIBLE


# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    # usage errors are input errors, not the argparse default of 2 (infeasible here)
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hmot", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=f"hmot {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, problem=True):
        sp.add_argument("--config", required=True, help="problem config (JSON)")
        sp.add_argument("--out", help="output file")
        sp.add_argument("--tol", type=float, default=1e-7, help="check tolerance (default 1e-7)")
        if problem:
            sp.add_argument("--sense", choices=("inf", "sup", "both"))
            sp.add_argument("--mode", choices=[m.value for m in Mode])
            sp.add_argument("--metric", choices=("tv", "w1"))
            sp.add_argument("--r", help="relaxation/penalty level (comma list for pen)")

    sp = sub.add_parser("bounds", help="robust price bounds")
    common(sp)
    sp.add_argument("--couplings", help="write optimal couplings to PREFIX_<sense>.csv")
    sp.add_argument("--max-iter", type=int, help="Frank-Wolfe iteration cap in pen mode")
    sp.set_defaults(func=cmd_bounds)

    sp = sub.add_parser("sweep", help="MOT/HMOT bounds using the last k marginals")
    common(sp, problem=False)
    sp.add_argument("--steps", help="comma list of k values (default 2..N)")
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--report", help="also write a JSON run report")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("check-hom", help="test a coupling CSV for homogeneity")
    common(sp, problem=False)
    sp.add_argument("--coupling", required=True, help="CSV with x1,...,xN,weight rows")
    sp.set_defaults(func=cmd_check_hom)

    sp = sub.add_parser("hedge", help="extract and verify the dual hedge")
    common(sp)
    sp.set_defaults(func=cmd_hedge)

    sp = sub.add_parser("export", help="write the LP as MPS or LP text")
    common(sp)
    sp.add_argument("--export-format", choices=("mps", "lp"), default="mps")
    sp.set_defaults(func=cmd_export)

    sp = sub.add_parser("pen", help="Gini-penalized values over an r grid")
    common(sp)
    sp.add_argument("--max-iter", type=int, help="Frank-Wolfe iteration cap")
    sp.set_defaults(func=cmd_pen)

    sp = sub.add_parser("feasibility", help="does a homogeneous coupling exist")
    common(sp, problem=False)
    sp.add_argument("--martingale", action="store_true")
    sp.set_defaults(func=cmd_feasibility)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # --help exits 0, usage errors exit EXIT_INPUT
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ScaleLimitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCALE
    except InfeasibleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except HMOTError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
