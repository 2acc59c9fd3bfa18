"""Command line entry point: solve, trials, scale, selftest.

Reports are JSON lines (one object per trial, then a summary); ``scale``
prints a plain-text table. Exit status is 0 on pass, 1 on a failed check
and 2 on a usage or input error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import harness
from .io import FormatError, write_sparse
from .sgd import MODES

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _parse_lambda(text):
    """A non-negative float, or ``smin2`` for the squared smallest singular value."""
    if text == "smin2":
        return text
    try:
        lam = float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from exc
    if lam < 0:
        raise argparse.ArgumentTypeError("lambda must be non-negative")
    return lam


def _add_instance_args(p):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--matrix", metavar="FILE", help="coordinate text or dense CSV matrix")
    src.add_argument("--generate", metavar="SPEC",
                     help="synthetic instance, e.g. m=50,n=40,rank=5,smin=1,smax=2,noise=0.1,seed=1")
    p.add_argument("--rhs", default=None, metavar="FILE|planted|random",
                   help="right-hand side (default: planted for --generate, random for --matrix)")
    p.add_argument("--noise", type=float, default=None,
                   help="planted residual norm relative to ||A x*|| (overrides the spec)")


def _add_solver_args(p):
    p.add_argument("--epsilon", type=float, default=0.3)
    p.add_argument("--lambda", dest="lam", type=_parse_lambda, default=0.0,
                   help="regularization (float or 'smin2')")
    p.add_argument("--mode", choices=MODES, default="standard")
    p.add_argument("--seed", type=int, default=0)


def build_parser():
    parser = argparse.ArgumentParser(prog="qireg", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="one seeded solve, scored against the dense solution")
    _add_instance_args(p)
    _add_solver_args(p)
    p.add_argument("--description", metavar="FILE", help="write the sparse coefficients here")
    p.add_argument("--out", metavar="FILE")
    p.add_argument("--no-timings", action="store_true", help="omit wall times from the report")

    p = sub.add_parser("trials", help="many seeded solves and a summary")
    _add_instance_args(p)
    _add_solver_args(p)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--min-success", type=float, default=0.8,
                   help="exit 1 when the success fraction is below this")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", metavar="FILE")
    p.add_argument("--no-timings", action="store_true")

    p = sub.add_parser("scale", help="dimension-independence table")
    _add_instance_args(p)
    _add_solver_args(p)
    p.add_argument("--dims", default="100,400,1600", help="comma-separated ambient dimensions")
    p.add_argument("--seeds", type=int, default=3, help="solves per dimension")
    p.add_argument("--out", metavar="FILE", help="also write rows and verdict as JSON lines")

    p = sub.add_parser("selftest", help="moment, distribution, sketch and output checks")
    p.add_argument("--check", choices=("all", *harness.CHECKS), default="all")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", metavar="FILE")
    return parser


def _instance(args):
    if args.generate:
        try:
            spec = harness.InstanceSpec.parse(args.generate)
        except (harness.InstanceError, TypeError) as exc:
            raise UsageError(f"--generate: {exc}") from exc
        changes = {}
        if args.rhs not in (None, "planted", "random"):
            raise UsageError("--rhs FILE needs --matrix")
        if args.rhs is not None:
            changes["rhs"] = args.rhs
        if args.noise is not None:
            changes["noise"] = args.noise
        if changes:
            spec = harness.InstanceSpec(**{**spec.__dict__, **changes})
        return harness.generate_instance(spec)
    rhs = args.rhs or "random"
    return harness.load_instance(args.matrix, rhs, seed=args.seed, noise=args.noise or 0.0)


def _lambda(args, inst):
    if args.lam == "smin2":
        return inst.spectrum().sigma_min ** 2
    return args.lam


def _plain(obj):
    """``json`` fallback for numpy scalars."""
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not serializable: {type(obj).__name__}")


def _dumps(obj):
    return json.dumps(obj, default=_plain)


def _emit(lines, out):
    text = "".join(line + "\n" for line in lines)
    sys.stdout.write(text)
    if out:
        with open(out, "w") as fh:
            fh.write(text)


def cmd_solve(args):
    inst = _instance(args)
    lam = _lambda(args, inst)
    report, res = harness.run_trial(inst, args.epsilon, lam, args.seed, args.mode, keep_result=True)
    if args.description:
        write_sparse(args.description, res.coefficients)
    _emit([report.to_json(not args.no_timings)], args.out)
    return EXIT_OK if report.success else EXIT_FAIL


def cmd_trials(args):
    if args.trials < 1:
        raise UsageError("--trials must be positive")
    inst = _instance(args)
    lam = _lambda(args, inst)
    reports, summary = harness.run_trials(inst, args.epsilon, lam, args.trials, args.mode,
                                          master_seed=args.seed, threads=args.threads)
    lines = [r.to_json(not args.no_timings) for r in reports] + [_dumps(summary)]
    _emit(lines, args.out)
    ok = summary["success_fraction"] >= args.min_success and summary["sparsity_law_all"]
    return EXIT_OK if ok else EXIT_FAIL


def cmd_scale(args):
    try:
        dims = [int(x) for x in args.dims.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"--dims: {exc}") from exc
    if not dims:
        raise UsageError("--dims is empty")
    inst = _instance(args)
    lam = _lambda(args, inst)
    seeds = [args.seed ^ i for i in range(args.seeds)]
    rows = harness.scaling_experiment(inst, dims, args.epsilon, lam, seeds=seeds, seed=args.seed,
                                      mode=args.mode)
    verdict = harness.scaling_verdict(rows)
    print(harness.format_table(rows))
    print(" ".join(f"{k}={v}" for k, v in verdict.items()))
    if args.out:
        with open(args.out, "w") as fh:
            for r in rows:
                fh.write(_dumps({"kind": "scale_row", **r}) + "\n")
            fh.write(_dumps({"kind": "scale_verdict", **verdict}) + "\n")
    return EXIT_OK if verdict["passed"] else EXIT_FAIL


def cmd_selftest(args):
    names = list(harness.CHECKS) if args.check == "all" else [args.check]
    results = [harness.CHECKS[name](seed=args.seed) for name in names]
    _emit([_dumps(r.as_dict()) for r in results], args.out)
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


COMMANDS = {"solve": cmd_solve, "trials": cmd_trials, "scale": cmd_scale, "selftest": cmd_selftest}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, FormatError, harness.InstanceError, OSError, ValueError) as exc:
        print(f"qireg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
