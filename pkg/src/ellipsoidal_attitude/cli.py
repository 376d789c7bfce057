"""Command-line entry point.

Exit codes: 0 on success, 1 when the inputs fail validation, 2 when the
filter fails at runtime. Diagnostics go to stderr; machine-readable results
go to files under ``--out`` or, for ``check-convergence`` and
``monte-carlo``, to stdout as JSON.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .ellipsoid import optimal_q
from .errors import EstimationError, ScenarioError
from .filter import DEFAULT_C, convergence_check
from .sim import NOISE_MODES, load_scenario, monte_carlo, run_estimation, simulate_truth, write_run, write_truth
from .so3 import is_spd

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0.0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ellipsoidal-attitude", description="Set-membership attitude estimation on SO(3).")
    sub = p.add_subparsers(dest="command", required=True)

    def scenario_args(sp, out_default):
        sp.add_argument("--scenario", default="pendulum_baseline.json", help="scenario JSON file or bundled fixture name")
        sp.add_argument("--out", default=out_default, help="output directory")
        sp.add_argument("--seed", type=_seed, help="override the scenario seed")
        sp.add_argument("--noise-mode", choices=NOISE_MODES, help="override the scenario noise placement")
        sp.add_argument("--q", type=_positive_float, help="fix the fusion scalar instead of searching it")
        sp.add_argument("--c", type=float, help="contraction constant in (0, 1)")

    scenario_args(sub.add_parser("simulate", help="write the true trajectory"), "runs")
    scenario_args(sub.add_parser("estimate", help="run the filter and write records and summary"), "runs")
    mc = sub.add_parser("monte-carlo", help="repeat estimation over consecutive seeds")
    scenario_args(mc, None)
    mc.add_argument("--trials", type=int, default=100)
    mc.add_argument("--jobs", type=int, default=1, help="worker processes")

    cc = sub.add_parser("check-convergence", help="evaluate the contraction condition for given matrices")
    cc.add_argument("--pm", required=True, help="6x6 measured-state uncertainty matrix (JSON or text)")
    cc.add_argument("--pf", required=True, help="6x6 predicted uncertainty matrix")
    cc.add_argument("--af", required=True, help="6x6 flow Jacobian")
    cc.add_argument("--q", type=_positive_float, help="fusion scalar; defaults to the trace-optimal value")
    cc.add_argument("--c", type=float, default=DEFAULT_C)
    return p


def _scenario(args):
    s = load_scenario(args.scenario)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.noise_mode is not None:
        changes["noise_mode"] = args.noise_mode
    if args.q is not None:
        changes["q"] = args.q
    if args.c is not None:
        if not 0.0 < args.c < 1.0:
            raise ScenarioError("must lie in (0, 1)", "--c")
        changes["c"] = args.c
    return replace(s, **changes) if changes else s


def read_matrix(path, name: str) -> np.ndarray:
    """Load a 6x6 matrix from a JSON array or a whitespace/comma separated text file."""
    p = Path(path)
    if not p.exists():
        raise ScenarioError(f"file not found: {path}", name)
    text = p.read_text()
    try:
        M = np.array(json.loads(text), dtype=float)
    except (json.JSONDecodeError, ValueError, TypeError):
        try:
            M = np.loadtxt(p, delimiter="," if "," in text else None, ndmin=2)
        except ValueError as exc:
            raise ScenarioError(f"cannot parse matrix: {exc}", name) from None
    if M.shape != (6, 6) or not np.all(np.isfinite(M)):
        raise ScenarioError(f"expected a finite 6x6 matrix, got shape {M.shape}", name)
    return M


def _check_convergence(args) -> int:
    P_m = read_matrix(args.pm, "--pm")
    P_f = read_matrix(args.pf, "--pf")
    A_f = read_matrix(args.af, "--af")
    for M, name in ((P_m, "--pm"), (P_f, "--pf")):
        if not is_spd(M):
            raise ScenarioError("must be symmetric positive definite", name)
    if not 0.0 < args.c < 1.0:
        raise ScenarioError("must lie in (0, 1)", "--c")
    q = args.q if args.q is not None else optimal_q(P_m, np.zeros(6), P_f)
    report = convergence_check(P_m, P_f, A_f, q, args.c)
    print(json.dumps(report.as_dict(), indent=2))
    return EXIT_OK


def _run(args) -> int:
    if args.command == "check-convergence":
        return _check_convergence(args)
    s = _scenario(args)
    if args.command == "simulate":
        path = write_truth(args.out, simulate_truth(s), s.inertia.h)
        print(f"wrote {path}", file=sys.stderr)
        return EXIT_OK
    if args.command == "estimate":
        records, summary = run_estimation(s)
        write_run(args.out, records, summary)
        if summary.status != "ok":
            print(f"error: {summary.error}", file=sys.stderr)
            return EXIT_RUNTIME
        print(f"wrote {Path(args.out) / 'records.csv'} and summary.json", file=sys.stderr)
        return EXIT_OK
    if args.trials < 1:
        raise ScenarioError("must be at least 1", "--trials")
    result = monte_carlo(s, args.trials, max(1, args.jobs))
    text = json.dumps(result, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "monte_carlo.json").write_text(text + "\n")
    print(text)
    print(f"containment rate {result['containment_rate']:.4f} over {result['total_instants']} instants", file=sys.stderr)
    return EXIT_RUNTIME if result["aborted_trials"] else EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_VALIDATION
    try:
        return _run(args)
    except ScenarioError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (EstimationError, np.linalg.LinAlgError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
