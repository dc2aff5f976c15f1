"""Command-line entry point.

Exit codes: 0 success, 1 simulation blow-up, 2 configuration error,
3 verification failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .harness import (MODES, InsufficientPeaksError, SimulationBlowUp,
                      export_csv, fit_decay, read_csv, run_mode)
from .kernels import DegenerateKernelError, QuadratureError
from .scenario import ConfigError, load_scenario
from .verify import RESOLUTIONS, Tolerances, verify_all

EXIT_OK, EXIT_BLOWUP, EXIT_CONFIG, EXIT_VERIFY = 0, 1, 2, 3

log = logging.getLogger("delaywave")


def _window(text: str):
    try:
        a, b = (float(p) for p in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"window must look like t0:t1, got {text!r}")
    if not b > a:
        raise argparse.ArgumentTypeError("window end must exceed its start")
    return a, b


def _summary(out) -> dict:
    t = out.column("t")
    e = out.column("e")
    tail = e[t >= 0.75 * t[-1]]
    return {"mode": out.mode, "scenario": out.meta.get("scenario"),
            "t_final": float(t[-1]),
            "max_abs_e_last_quarter": float(np.nanmax(np.abs(tail))) if tail.size else None,
            "theta_hat_final": float(out.column("theta_hat")[-1]),
            "wall_time_s": round(out.meta.get("wall_time", 0.0), 3)}


def _run_one(path, mode, out_dir, diagnostics):
    s = load_scenario(path)
    out = run_mode(s, mode, diagnostics=diagnostics)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{s.name}_{mode}.csv"
    export_csv(out, csv_path)
    summary = _summary(out)
    summary["csv"] = str(csv_path)
    return summary


def cmd_run(args) -> int:
    summary = _run_one(args.scenario, args.mode, args.out, not args.no_diagnostics)
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_verify(args) -> int:
    s = load_scenario(args.scenario)
    tol = Tolerances(boundary=args.tol_boundary, oracle=args.tol_oracle,
                     identity=args.tol_identity, min_order=args.min_order)
    rep = verify_all(s, resolutions=tuple(args.resolutions),
                     theta_offset=args.corrupt_theta, tol=tol)
    print(rep.table())
    if args.csv:
        rep.write_csv(args.csv)
    return EXIT_OK if rep.ok else EXIT_VERIFY


def _sweep_job(job):
    path, mode, out_dir = job
    try:
        return str(path), EXIT_OK, _run_one(path, mode, out_dir, False)
    except SimulationBlowUp as exc:
        return str(path), EXIT_BLOWUP, str(exc)
    except (ConfigError, QuadratureError, DegenerateKernelError, ValueError) as exc:
        return str(path), EXIT_CONFIG, str(exc)


def cmd_sweep(args) -> int:
    paths = sorted(Path(args.directory).glob("*.cfg"))
    if not paths:
        raise ConfigError(f"no *.cfg scenarios in {args.directory}")
    out_dir = args.out or args.directory
    jobs = [(p, args.mode, out_dir) for p in paths]
    with ProcessPoolExecutor(max_workers=args.jobs) as pool:
        results = list(pool.map(_sweep_job, jobs))
    worst = EXIT_OK
    for path, code, info in results:
        status = "ok" if code == EXIT_OK else f"exit {code}"
        detail = info if code else json.dumps(info)
        print(f"{path}: {status} {detail}")
        worst = max(worst, code)
    return worst


def cmd_fit(args) -> int:
    data = read_csv(args.csv)
    if args.column not in data:
        raise ConfigError(f"column {args.column!r} not in {args.csv}")
    fit = fit_decay(data["t"], data[args.column], args.window)
    print(json.dumps({"column": args.column, "M": fit.M, "mu": fit.mu,
                      "fit_window": list(fit.fit_window), "residual": fit.residual,
                      "n_peaks": fit.n_peaks}, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="delaywave", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate one scenario and write its CSV")
    r.add_argument("scenario")
    r.add_argument("--mode", choices=MODES, default="full")
    r.add_argument("--out", default=".")
    r.add_argument("--no-diagnostics", action="store_true",
                   help="skip observer/predictor error columns (faster)")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="kernel residuals and identities")
    v.add_argument("scenario")
    v.add_argument("--resolutions", type=int, nargs="+", default=list(RESOLUTIONS))
    v.add_argument("--corrupt-theta", type=float, default=0.0,
                   help="offset added to theta in the f-kernel checks")
    v.add_argument("--csv", help="write kernel_name,grid_h,residual_max rows here")
    d = Tolerances()
    v.add_argument("--tol-boundary", type=float, default=d.boundary)
    v.add_argument("--tol-oracle", type=float, default=d.oracle)
    v.add_argument("--tol-identity", type=float, default=d.identity)
    v.add_argument("--min-order", type=float, default=d.min_order)
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("sweep", help="run every *.cfg in a directory in parallel")
    s.add_argument("directory")
    s.add_argument("--jobs", type=int, default=None)
    s.add_argument("--mode", choices=MODES, default="full")
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_sweep)

    f = sub.add_parser("fit", help="exponential envelope fit of a CSV column")
    f.add_argument("csv")
    f.add_argument("--column", default="e")
    f.add_argument("--window", type=_window, required=True)
    f.set_defaults(func=cmd_fit)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SimulationBlowUp as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except (ConfigError, QuadratureError, DegenerateKernelError,
            InsufficientPeaksError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
