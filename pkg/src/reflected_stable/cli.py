"""``reflected-stable`` command line.

Exit codes: 0 success, 1 a module raised, 2 bad flags or configuration,
3 ``validate`` ran but some checks failed.
"""
from __future__ import annotations

import os

# must run before numpy loads its BLAS
if os.environ.get("RS_THREADS"):
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[_var] = os.environ["RS_THREADS"]

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import ergodics as er
from . import io
from . import montecarlo as mc
from . import resolvent as rs
from . import semigroup as sg
from .config import BVP_SOURCES, ConfigError, RunConfig, parse_config
from .errors import ReflectedStableError
from .validate import CHECKS, Context, bvp_source, run_validation

log = logging.getLogger("reflected_stable")

EXIT_OK, EXIT_MODULE, EXIT_CONFIG, EXIT_FAILED = 0, 1, 2, 3


def _json_arg(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise argparse.ArgumentTypeError(f"not valid JSON: {e}") from None


def _common(p: argparse.ArgumentParser):
    g = p.add_argument_group("configuration (flags override the config file)")
    g.add_argument("--config", help="JSON run configuration")
    g.add_argument("--alpha", type=float)
    g.add_argument("--domain", type=float, nargs=2, metavar=("L", "R"))
    g.add_argument("--grid-n", type=int, dest="grid_n")
    g.add_argument("--reflection", type=_json_arg, help='e.g. \'{"tag": "dirac", "y0": 0}\'')
    g.add_argument("--t", type=float, nargs="+")
    g.add_argument("--delta", type=float)
    g.add_argument("--time-steps", type=int, dest="time_steps")
    g.add_argument("--depth", type=int)
    g.add_argument("--lambdas", type=float, nargs="+")
    g.add_argument("--paths", type=int)
    g.add_argument("--h", type=float)
    g.add_argument("--seed", type=int)
    g.add_argument("--quadrature-order", type=int, dest="quadrature_order")
    g.add_argument("--bvp-f", choices=BVP_SOURCES, dest="bvp_f")
    g.add_argument("--out", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")


OVERRIDES = ("alpha", "domain", "grid_n", "reflection", "t", "delta", "time_steps", "depth", "lambdas",
             "paths", "h", "seed", "quadrature_order", "bvp_f", "out")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reflected-stable",
                                     description="Stable processes on an interval with instantaneous return.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in [("kernel", "reflected transition kernel k_t for each --t"),
                           ("resolvent", "resolvent series for each lambda and a boundary-value solve"),
                           ("stationary", "stationary density and TV decay fits"),
                           ("simulate", "Monte Carlo paths and cross-validation distances"),
                           ("validate", "run the full validation suite")]:
        p = sub.add_parser(name, help=helptext)
        _common(p)
        if name == "kernel":
            p.add_argument("--binary", action="store_true", help="also write RSK1 binary dumps")
        if name == "validate":
            p.add_argument("--only", nargs="+", choices=list(CHECKS), help="run a subset of the checks")
    return parser


def _x(ctx: Context):
    return ctx.grid.centers


def cmd_kernel(ctx: Context, out: Path, args) -> List[Path]:
    artifacts = []
    report = []
    for t in ctx.cfg.t:
        K = sg.duhamel_series(ctx.g, ctx.k, t, depth=ctx.cfg.depth, time_steps=ctx.cfg.time_steps, J=ctx.J)
        artifacts.append(io.write_kernel_csv(out / f"kernel_t{t:g}.csv", t, K.K))
        if args.binary:
            artifacts.append(io.write_kernel_binary(out / f"kernel_t{t:g}.rsk", t, K.K))
        report.append({"t": t, "row_sum_defect": K.row_sum_defect, "truncation_bound": K.truncation_bound,
                       "eta": K.eta, "depth": K.series_depth, "depth_evaluated": K.depth_evaluated,
                       "time_steps": K.time_steps, "min_entry": float(K.K.min())})
        print(f"t={t:g}: row-sum defect {K.row_sum_defect:.3e} (bound {K.truncation_bound:.3e})")
    artifacts.append(io.write_json(out / "kernel_report.json", report))
    return artifacts


def cmd_resolvent(ctx: Context, out: Path, args) -> List[Path]:
    bundles = [rs.resolvent_series(ctx.g, ctx.k, lam, J=ctx.J) for lam in sorted(ctx.cfg.lambdas)]
    report = {"bundles": [], "identity_defects": []}
    for b in bundles:
        report["bundles"].append({"lambda": b.lam, "spectral_radius": b.spectral_radius_est,
                                  "series_depth": b.depth, "series_defect": b.series_defect,
                                  "series_bound": b.series_bound, "markov_defect": b.markov_defect,
                                  "renewal_defect": rs.renewal_defect(b),
                                  "min_singular_value": b.min_singular_value})
        print(f"lambda={b.lam:g}: radius {b.spectral_radius_est:.4f}, lam R 1 - 1 = {b.markov_defect:.2e}")
    for a, b in zip(bundles, bundles[1:]):
        report["identity_defects"].append({"lambdas": [a.lam, b.lam], "defect": rs.resolvent_identity_defect(a, b)})
    artifacts = [io.write_json(out / "resolvent_report.json", report)]
    f = bvp_source(ctx.cfg.bvp_f, ctx.grid)
    for lam in ctx.cfg.lambdas:
        sol = rs.solve_reflected_bvp(ctx.g, ctx.k, lam, f, J=ctx.J)
        artifacts.append(io.write_csv(out / f"bvp_lambda{lam:g}.csv", ["x", "u", "f", "residual"],
                                      zip(_x(ctx), sol.u, sol.f, sol.residual)))
    return artifacts


def cmd_stationary(ctx: Context, out: Path, args) -> List[Path]:
    K = ctx.exp_kernel(ctx.cfg.delta)
    st = er.stationary_density(K)
    h = ctx.grid.h
    artifacts = [io.write_csv(out / "pi.csv", ["x", "mass", "density"], zip(_x(ctx), st.pi, st.pi / h))]
    n = ctx.grid.n
    starts = {"left": 0, "center": n // 2, "right": n - 1}
    fits = er.tv_convergence(K, st.pi, [np.eye(n)[i] for i in starts.values()], 15.0)
    rows = []
    for name, f in zip(starts, fits):
        rows.extend((name, t, d) for t, d in zip(f.times, f.distances))
    artifacts.append(io.write_csv(out / "tv_decay.csv", ["start", "t", "tv"], rows))
    summary = {"delta_t": ctx.cfg.delta, "residual": st.residual, "iterations": st.iterations,
               "eigen_defect": st.eigen_defect,
               "fits": [{"start": s, "M": f.M, "omega": f.omega, "r_squared": f.r_squared, "points": f.points}
                        for s, f in zip(starts, fits)]}
    artifacts.append(io.write_json(out / "decay_fit.json", summary))
    print(f"pi residual {st.residual:.2e}; omega " + ", ".join(f"{f.omega:.3f}" for f in fits))
    return artifacts


def cmd_simulate(ctx: Context, out: Path, args) -> List[Path]:
    kb = ctx.killed_batch
    rb = ctx.reflected_batch
    artifacts = [io.write_csv(out / "killed_paths.csv", ["tau", "pre_exit", "exit"],
                              zip(kb.tau, kb.pre_exit, kb.exit))]
    edges = mc.exit_bins(ctx.D)
    det = sg.exit_law(ctx.g, ctx.x0, edges, ctx.G)
    emp = mc.exit_histogram(kb, edges)
    artifacts.append(io.write_csv(out / "exit_law.csv", ["lo", "hi", "empirical", "deterministic"],
                                  zip(edges[:-1], edges[1:], emp, det)))
    row = ctx.exp_K1.K[ctx.x0]
    fin = mc.histogram(rb.final, ctx.grid.edges)
    artifacts.append(io.write_csv(out / "reflected_t1.csv", ["x", "empirical", "deterministic"],
                                  zip(_x(ctx), fin, row)))
    artifacts.append(io.write_csv(out / "reflection_counts.csv", ["path", "reflections", "flagged"],
                                  zip(range(rb.paths), rb.reflections, rb.flagged.astype(int))))
    summary = {"paths": kb.paths, "h": ctx.cfg.h, "seed": ctx.cfg.seed,
               "mean_exit_time": float(np.mean(kb.tau[kb.exited])), "exited_fraction": float(kb.exited.mean()),
               "exit_law_tv": er.tv_distance(emp, det), "k1_tv": er.tv_distance(fin, row),
               "accumulation_rate": rb.accumulation_rate}
    artifacts.append(io.write_json(out / "simulate_summary.json", summary))
    print(f"mean exit {summary['mean_exit_time']:.4f}; exit-law TV {summary['exit_law_tv']:.4f}; "
          f"k_1 TV {summary['k1_tv']:.4f}")
    return artifacts


def cmd_validate(ctx: Context, out: Path, args):
    rep = run_validation(ctx.cfg, only=args.only, ctx=ctx)
    for e in rep.entries:
        print(f"{e.status.upper():4s} {e.check}: {json.dumps(e.value, default=io.json_default)}")
    path = io.write_json(out / "run_report.json", rep.to_json())
    return [path], rep


COMMANDS = {"kernel": cmd_kernel, "resolvent": cmd_resolvent, "stationary": cmd_stationary,
            "simulate": cmd_simulate, "validate": cmd_validate}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg: RunConfig = parse_config(args.config, {k: getattr(args, k) for k in OVERRIDES})
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    ctx = Context(cfg)
    try:
        result = COMMANDS[args.command](ctx, out, args)
    except ReflectedStableError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_MODULE
    rep = None
    if args.command == "validate":
        result, rep = result
    io.write_manifest(out, cfg.as_dict(), result, args.command)
    if rep is not None and not rep.passed:
        print("failed checks: " + ", ".join(rep.failed), file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
