"""Command-line entry point: ``mechband {solve,validate,discover-lorenz,bench}``.

Exit codes: 0 success, 1 input or solver error, 2 validation threshold
failure, 3 optimizer divergence.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import bench
from .errors import Diverged, MechbandError
from .files import fmt, load_spec, write_trajectory
from .gradients import grad_check, solve_spec

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VALIDATION = 2
EXIT_DIVERGED = 3

THREADS_ENV = "MECHBAND_THREADS"


def _fail(exc: Exception) -> int:
    msg = str(exc)
    name = type(exc).__name__
    if not msg.startswith(name):
        msg = f"{name}: {msg}"
    print(f"error: {msg}", file=sys.stderr)
    return EXIT_ERROR


def cmd_solve(args) -> int:
    try:
        spec = load_spec(args.spec)
        sol = solve_spec(spec)
    except (MechbandError, OSError) as exc:
        return _fail(exc)
    if args.out:
        rows = write_trajectory(sol, spec.s, args.out)
        print(f"wrote {rows} rows to {args.out}")
    else:
        write_trajectory(sol, spec.s, sys.stdout)
    if args.grad_check:
        errors = grad_check(spec, seed=args.seed)
        for name, err in errors.items():
            print(f"grad-check d{name}: relative error {fmt(err)}")
        print(f"grad-check max relative error {fmt(max(errors.values()))}")
    return EXIT_OK


def cmd_validate(args) -> int:
    from .experiments.validation import MSE_THRESHOLD, run_validation

    try:
        rows = run_validation(steps=args.steps, dt=args.dt)
    except MechbandError as exc:
        return _fail(exc)
    width = max(len(r.mse) for r in rows)
    header = ["name", "order"] + [f"mse_d{k}" for k in range(width)] + ["passed"]
    lines = [header]
    for r in rows:
        mse = [fmt(x) for x in r.mse] + [""] * (width - len(r.mse))
        lines.append([r.name, str(r.order)] + mse + [str(r.passed).lower()])
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {r.name:<22} mse(y)={r.mse[0]:.3e} threshold={MSE_THRESHOLD:g}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            csv.writer(fh).writerows(lines)
    ok = all(r.passed for r in rows)
    print(f"{sum(r.passed for r in rows)}/{len(rows)} passed")
    return EXIT_OK if ok else EXIT_VALIDATION


def cmd_discover_lorenz(args) -> int:
    from dataclasses import replace

    from .experiments.lorenz import COEFF_NAMES, TRUTH, LorenzConfig, discover_lorenz

    cfg = LorenzConfig(seed=args.seed)
    if args.steps is not None:
        cfg = replace(cfg, opt_steps=args.steps)
    if args.batch is not None:
        cfg = replace(cfg, batch=args.batch)
    try:
        res = discover_lorenz(cfg)
    except Diverged as exc:
        print(f"error: Diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (MechbandError, ValueError) as exc:
        return _fail(exc)

    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "coefficients.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["name", "truth", "best", "final"])
            for i, name in enumerate(COEFF_NAMES):
                w.writerow([name, fmt(TRUTH[i]), fmt(res.coefficients[i]), fmt(res.final_coefficients[i])])
        with open(out / "loss.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "loss", "loss_ema"])
            for k, (raw, smooth) in enumerate(zip(res.loss, res.loss_ema)):
                w.writerow([k, fmt(raw), fmt(smooth)])

    print(f"{'name':<5} {'truth':>12} {'recovered':>12} {'abs err':>10}")
    for i, name in enumerate(COEFF_NAMES):
        err = abs(res.coefficients[i] - TRUTH[i])
        print(f"{name:<5} {TRUTH[i]:>12.4f} {res.coefficients[i]:>12.4f} {err:>10.4f}")
    if len(res.loss):
        print(f"best step {res.best_step}, loss {fmt(res.loss[res.best_step])}")
    return EXIT_OK


def cmd_bench(args) -> int:
    cases = bench.preset_cases(args.preset, repeats=args.repeats)
    try:
        results = bench.run_bench(cases, seed=args.seed, parallel=args.parallel, skip_oversized=True)
    except MechbandError as exc:
        return _fail(exc)
    if args.out:
        bench.write_csv(results, args.out)
    for r in results:
        c = r.case
        timing = "skipped" if r.skipped else f"{r.median_seconds:.4e} s"
        print(f"{c.solver:<6} T={c.T:<5} batch={c.batch:<5} {timing:>14} bytes={r.retained_bytes} residual={r.residual:.2e}")
    for solver, limit, op in (("banded", 1.3, "<="), ("dense", 2.3, ">=")):
        for batch in sorted({r.case.batch for r in results if r.case.solver == solver}):
            slope = bench.solver_slope(results, solver, batch)
            if np.isfinite(slope):
                print(f"slope {solver} batch={batch}: {slope:.3f} (target {op} {limit})")
    bad = [r for r in results if not r.skipped and not r.residual <= bench.RESIDUAL_TOL]
    if bad:
        for r in bad:
            print(f"error: residual {r.residual:.3e} exceeds {bench.RESIDUAL_TOL:g} ({r.case})", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    # usage errors are input errors, keeping exit code 2 for validation
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mechband", description="Block-banded linear ODE solver.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve a JSON spec and write the trajectory CSV")
    s.add_argument("--spec", required=True)
    s.add_argument("--out", help="CSV path; standard output when omitted")
    s.add_argument("--grad-check", action="store_true", help="compare analytic and finite-difference gradients")
    s.add_argument("--seed", type=int, default=0, help="seed for the gradient check target")
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("validate", help="closed-form ODE validation suite")
    v.add_argument("--steps", type=int, default=1000)
    v.add_argument("--dt", type=float, default=0.01)
    v.add_argument("--out")
    v.set_defaults(func=cmd_validate)

    d = sub.add_parser("discover-lorenz", help="recover the Lorenz coefficients")
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--steps", type=int, default=None, help="optimizer steps (default from config)")
    d.add_argument("--batch", type=int, default=None, help="windows per step (default from config)")
    d.add_argument("--out", help="directory for coefficients.csv and loss.csv")
    d.set_defaults(func=cmd_discover_lorenz)

    b = sub.add_parser("bench", help="banded vs dense runtime and memory")
    b.add_argument("--preset", choices=("lorenz", "scaling"), default="scaling")
    b.add_argument("--out")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--repeats", type=int, default=7)
    b.add_argument("--parallel", action="store_true", help="allow multi-threaded BLAS in timed regions")
    b.set_defaults(func=cmd_bench)
    return p


def _thread_limit() -> int | None:
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise SystemExit(f"error: {THREADS_ENV} must be a positive integer, got {raw!r}")
    if n < 1:
        raise SystemExit(f"error: {THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(message)s")
    with threadpool_limits(limits=_thread_limit()):
        return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
