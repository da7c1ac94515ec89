"""Command-line front end.

Every run writes a results bundle into a fresh directory. The bundle is
assembled in a temporary sibling directory and renamed into place, so an
interrupted run never leaves a half-written bundle behind.
"""
import argparse
import csv
import json
import logging
import math
import os
import shutil
import sys
import tempfile
import traceback
from pathlib import Path

import numpy as np

from . import pipelines as P
from .config import ConfigError, dump_config, load_config, replace
from .models import dump_network
from .integrate import SimulationError, write_trajectory_csv
from .optimize import write_trace_csv
from .svg import HistogramSpec, Marker, emit_histogram

log = logging.getLogger("netctl")

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_BUDGET = 4
EXIT_SOLVER = 5
EXIT_OUTPUT = 6
EXIT_GRADCHECK = 7

EXIT_CODES = f"""exit codes:
  {EXIT_OK}  success
  {EXIT_INTERNAL}  unexpected internal error
  {EXIT_USAGE}  usage error (bad arguments, unknown subcommand)
  {EXIT_CONFIG}  configuration file unreadable, malformed or invalid
  {EXIT_BUDGET}  infeasible node budget
  {EXIT_SOLVER}  simulation or solver failure
  {EXIT_OUTPUT}  output directory exists (use --force) or cannot be written
  {EXIT_GRADCHECK}  gradient check exceeded its tolerance

On failure a JSON error record is printed to stderr and, when the output
directory is writable, saved as error.json in it.

environment:
  NETCTL_LOG  log level (DEBUG, INFO, WARNING, ERROR); default WARNING
"""

GRADCHECK_TOL = 1e-5

COMMANDS = {
    "simulate": "uncontrolled response of the network (trajectory.csv)",
    "select": "joint node selection and control design (result.csv, trace.csv)",
    "compare": "relax-and-round comparison method (result.csv)",
    "exhaustive": "final errors of every selection at the budget (baseline.csv)",
    "random": "final errors of random selections at the budget (baseline.csv)",
    "gradcheck": "adjoint gradients against finite differences",
    "figure": "select + compare + baseline + histogram.svg",
}


class CliError(Exception):
    def __init__(self, code, kind, msg):
        super().__init__(msg)
        self.code = code
        self.kind = kind


def _u64(text):
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _workers(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("workers must be at least 1")
    return v


def build_parser():
    parser = argparse.ArgumentParser(
        prog="netctl",
        description="Control node selection and open-loop control of oscillator networks.",
        epilog=EXIT_CODES, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", metavar="command", required=True)
    for name, help_ in COMMANDS.items():
        p = sub.add_parser(name, help=help_, description=help_, epilog=EXIT_CODES,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--config", required=True,
                       help="config file, or a pinned name: duffing-n10, duffing-n60, "
                            "memory-n25, duffing-n20-ci")
        p.add_argument("--seed", type=_u64, default=None,
                       help="master seed (overrides the config's seed)")
        p.add_argument("--out", required=True, help="results bundle directory")
        p.add_argument("--workers", type=_workers, default=os.cpu_count() or 1,
                       help="worker processes for baseline evaluations (default: all cores)")
        p.add_argument("--force", action="store_true",
                       help="replace an existing results bundle")
    return parser


def _setup_logging():
    name = os.environ.get("NETCTL_LOG", "WARNING").strip().upper()
    level = int(name) if name.isdigit() else getattr(logging, name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)


def _g(v):
    return format(float(v), ".17g")


def write_result_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "pi", "J", "e"])
        for r in rows:
            w.writerow([r.method, r.selection.bits, _g(r.objective), _g(r.error)])


def write_error_steps_csv(series, path, methods=None):
    series = [np.asarray(s) for s in series]
    methods = methods or [f"e_{i}" for i in range(len(series))]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k"] + list(methods))
        for k in range(len(series[0])):
            w.writerow([k] + [_g(s[k]) for s in series])


def _baseline(exp, M, workers, warnings):
    s = exp.spec
    method = s.baseline_method
    total = math.comb(exp.N, M)
    if method == "auto":
        method = "exhaustive" if total <= s.baseline_cap else "random"
    elif method == "exhaustive" and total > s.baseline_cap:
        msg = (f"C({exp.N},{M}) = {total} exceeds baseline.cap = {s.baseline_cap}; "
               f"sampled {s.baseline_count} random selections instead")
        log.warning(msg)
        warnings.append(msg)
        method = "random"
    if method == "exhaustive":
        return P.exhaustive_baseline(exp, M=M, workers=workers)
    return P.random_baseline(exp, M=M, workers=workers)


def cmd_simulate(spec, out, args, warnings):
    traj = P.uncontrolled_response(spec)
    write_trajectory_csv(traj, out / "trajectory.csv")


def cmd_select(spec, out, args, warnings):
    exp = P.resolve(spec)
    res = P.algorithm1(exp, workers=args.workers)
    write_result_csv([res], out / "result.csv")
    write_trace_csv(res.trace, out / "trace.csv")
    write_error_steps_csv([P.error_vs_steps(res, exp)], out / "error_steps.csv", [res.method])


def cmd_compare(spec, out, args, warnings):
    exp = P.resolve(spec)
    res = P.relax_round_pipeline(exp)
    write_result_csv([res], out / "result.csv")
    write_error_steps_csv([P.error_vs_steps(res, exp)], out / "error_steps.csv", [res.method])


def cmd_exhaustive(spec, out, args, warnings):
    exp = P.resolve(spec)
    try:
        dist = P.exhaustive_baseline(exp, workers=args.workers)
    except P.BaselineTooLarge as exc:
        raise CliError(EXIT_BUDGET, "baseline-too-large", str(exc)) from None
    dist.to_csv(out / "baseline.csv")


def cmd_random(spec, out, args, warnings):
    exp = P.resolve(spec)
    P.random_baseline(exp, workers=args.workers).to_csv(out / "baseline.csv")


def cmd_gradcheck(spec, out, args, warnings):
    reports = P.gradient_checks(spec)
    worst = 0.0
    with open(out / "gradcheck.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scheme", "instance", "max_rel_error"])
        for kind, i, rep in reports:
            w.writerow([kind, i, _g(rep.max_rel_error)])
            rep.to_csv(out / f"gradcheck_{kind}_{i}.csv")
            worst = max(worst, rep.max_rel_error)
    print(f"max_rel_error {worst:.3e} ({'ok' if worst < GRADCHECK_TOL else 'FAILED'})")
    if not worst < GRADCHECK_TOL:
        raise CliError(EXIT_GRADCHECK, "gradcheck",
                       f"max_rel_error {worst:.3e} exceeds {GRADCHECK_TOL:g}")


def cmd_figure(spec, out, args, warnings):
    exp = P.resolve(spec)
    res = P.algorithm1(exp, workers=args.workers)
    cmp_ = P.relax_round_pipeline(exp)
    dist = _baseline(exp, res.selection.M, args.workers, warnings)
    write_result_csv([res, cmp_], out / "result.csv")
    write_trace_csv(res.trace, out / "trace.csv")
    write_error_steps_csv([P.error_vs_steps(res, exp), P.error_vs_steps(cmp_, exp)],
                          out / "error_steps.csv", [res.method, cmp_.method])
    dist.to_csv(out / "baseline.csv")
    title = (f"{spec.model} N={exp.N}, M={res.selection.M}: {dist.method} baseline "
             f"({len(dist)} selections)")
    hist = HistogramSpec(spec.bins, [Marker("selection algorithm", res.error, "algorithm"),
                                     Marker("relax and round", cmp_.error, "comparison")],
                         title)
    emit_histogram(dist, hist, out / "histogram.svg")


HANDLERS = {
    "simulate": cmd_simulate, "select": cmd_select, "compare": cmd_compare,
    "exhaustive": cmd_exhaustive, "random": cmd_random, "gradcheck": cmd_gradcheck,
    "figure": cmd_figure,
}


def _classify(exc):
    if isinstance(exc, CliError):
        return exc.code, exc.kind
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG, "config"
    if isinstance(exc, P.BudgetError):
        return EXIT_BUDGET, "budget"
    if isinstance(exc, (P.PipelineError, SimulationError)):
        return EXIT_SOLVER, "solver"
    if isinstance(exc, OSError):
        return EXIT_OUTPUT, "io"
    return EXIT_INTERNAL, "internal"


def _error_record(exc, command):
    code, kind = _classify(exc)
    rec = {"status": "error", "command": command, "exit_code": code, "kind": kind,
           "type": type(exc).__name__, "message": str(exc)}
    stage = getattr(exc, "stage", None)
    if stage:
        rec["stage"] = stage
    step = getattr(exc, "step", None) or getattr(getattr(exc, "cause", None), "step", None)
    if step is not None:
        rec["step"] = step
    if code == EXIT_INTERNAL:
        rec["traceback"] = traceback.format_exc()
    return code, rec


def _publish(tmp, out, force):
    """Move the finished bundle at ``tmp`` to ``out``."""
    if out.exists():
        if not force:
            raise CliError(EXIT_OUTPUT, "exists", f"{out} exists; use --force to replace it")
        old = Path(tempfile.mkdtemp(prefix=f".{out.name}.old-", dir=out.parent))
        os.replace(out, old / "bundle")
        os.replace(tmp, out)
        shutil.rmtree(old)
    else:
        os.replace(tmp, out)


def run(args):
    """Execute one subcommand; returns the exit status."""
    out = Path(args.out)
    tmp = None
    try:
        if out.exists() and not args.force:
            raise CliError(EXIT_OUTPUT, "exists", f"{out} exists; use --force to replace it")
        spec = load_config(args.config)
        if args.seed is not None:
            spec = replace(spec, seed=args.seed)
        out.parent.mkdir(parents=True, exist_ok=True)
        tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.tmp-", dir=out.parent))
        (tmp / "spec.cfg").write_text(dump_config(spec))
        (tmp / "network.txt").write_text(dump_network(P.build_model(spec)[0]))
        warnings = []
        HANDLERS[args.command](spec, tmp, args, warnings)
        if warnings:
            (tmp / "warnings.txt").write_text("\n".join(warnings) + "\n")
        _publish(tmp, out, args.force)
        tmp = None
        return EXIT_OK
    except Exception as exc:  # every failure becomes an error record
        code, rec = _error_record(exc, args.command)
        print(json.dumps(rec, sort_keys=True), file=sys.stderr)
        if tmp is not None and rec["kind"] != "exists":
            try:
                (tmp / "error.json").write_text(json.dumps(rec, indent=2, sort_keys=True) + "\n")
                _publish(tmp, out, args.force)
                tmp = None
            except Exception:
                log.debug("could not save the error record", exc_info=True)
        return code
    finally:
        if tmp is not None:
            shutil.rmtree(tmp, ignore_errors=True)


def main(argv=None):
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    return run(args)


if __name__ == "__main__":
    sys.exit(main())
