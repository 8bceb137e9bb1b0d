"""Command-line entry point: ``exosim check|solve|simulate <scenario.json>``.

Exit codes: 0 success (converged), 1 input error, 2 solver non-convergence.
"""
import argparse
import json
import math
import os
import sys

from .nlp import solve_sqp
from .ocp import (empty_trajectory, evaluate_cost, extract_trajectory,
                  simulate, write_trajectory_csv)
from .scenario import ScenarioError, parse_scenario

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NOT_CONVERGED = 2

# integration blow-ups, singular contact sets and non-finite model outputs
EVAL_ERRORS = (RuntimeError, ArithmeticError, ValueError)

TRAJECTORY_FILE = "trajectory.csv"
SUMMARY_FILE = "summary.json"


def _err(msg):
    print(msg, file=sys.stderr)


def _finite(v):
    v = float(v)
    return v if math.isfinite(v) else None


def _summary(nlp, point, status, cost, kkt, iterations):
    return {
        "status": status,
        "cost": _finite(cost),
        "kkt": None if kkt is None else _finite(kkt),
        "iterations": int(iterations),
        "stage_durations": [float(v) for v in nlp.durations(point)],
        "design_parameters": {n: float(v) for n, v in zip(nlp.param_names, nlp.params(point))},
    }


def _write_outputs(out_dir, trajectory, summary):
    os.makedirs(out_dir, exist_ok=True)
    write_trajectory_csv(trajectory, os.path.join(out_dir, TRAJECTORY_FILE))
    with open(os.path.join(out_dir, SUMMARY_FILE), "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")


def run_scenario(scenario, out_dir=".", mode="solve", verbose=False):
    """Transcribe, then solve or forward-simulate, and write the CSV and
    summary JSON into ``out_dir``. Returns the process exit code."""
    nlp = scenario.transcribe()
    z0 = scenario.initial_point(nlp)
    if mode == "simulate":
        try:
            traj = simulate(nlp, z0)
        except EVAL_ERRORS as exc:
            _err(f"error: forward simulation failed: {exc}")
            return EXIT_INPUT
        summary = _summary(nlp, z0, "simulated", evaluate_cost(nlp, z0), None, 0)
        code = EXIT_OK
    else:
        try:
            sol = solve_sqp(nlp, z0, scenario.solver_settings(verbose=verbose))
        except EVAL_ERRORS as exc:
            _err(f"error: solver aborted: {exc}")
            summary = _summary(nlp, z0, "evaluation_failure", math.nan, None, 0)
            try:
                _write_outputs(out_dir, empty_trajectory(nlp.problem), summary)
            except OSError as werr:
                _err(f"error: {werr}")
            return EXIT_NOT_CONVERGED
        if sol.clipped_start:
            _err("warning: initial guess was clipped to the variable bounds")
        try:
            traj = extract_trajectory(nlp, sol)
        except EVAL_ERRORS as exc:
            _err(f"warning: dense re-integration failed ({exc}); trajectory left empty")
            traj = empty_trajectory(nlp.problem)
        summary = _summary(nlp, sol.point, sol.status, sol.cost, sol.kkt_residual, sol.iterations)
        code = EXIT_OK if sol.converged else EXIT_NOT_CONVERGED
        if not sol.converged:
            _err(f"solver stopped with status {sol.status} after {sol.iterations} iterations "
                 f"(kkt {sol.kkt_residual:.3e}, violation {sol.constraint_violation:.3e})")
    try:
        _write_outputs(out_dir, traj, summary)
    except OSError as exc:
        _err(f"error: {exc}")
        return EXIT_INPUT
    return code


def _parser():
    ap = argparse.ArgumentParser(prog="exosim", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("check", help="validate a scenario file")
    p.add_argument("scenario")
    p = sub.add_parser("solve", help="solve the optimal control problem")
    p.add_argument("scenario")
    p.add_argument("--out", default=".", help="output directory (default: current directory)")
    p.add_argument("--verbose", action="store_true", help="log solver iterations to stderr")
    p = sub.add_parser("simulate", help="forward-simulate the initial-guess controls")
    p.add_argument("scenario")
    p.add_argument("--out", default=".", help="output directory (default: current directory)")
    return ap


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        scenario = parse_scenario(args.scenario)
    except ScenarioError as exc:
        for line in exc.errors:
            _err(f"error: {line}")
        return EXIT_INPUT
    if args.command == "check":
        print(f"{args.scenario}: ok")
        return EXIT_OK
    mode = "simulate" if args.command == "simulate" else "solve"
    return run_scenario(scenario, args.out, mode, getattr(args, "verbose", False))


if __name__ == "__main__":
    sys.exit(main())
