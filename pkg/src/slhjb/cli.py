"""Command-line interface: ``slhjb {quad,solve,mc,converge}``.

Failures print one line ``error: <kind>: <message>`` on stderr and exit with
status 1. ``SLHJB_NUM_THREADS`` sets the thread count of the compiled kernels.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

from . import __version__, kernels
from .analytics import run_convergence_study
from .config import (
    SCHEMA_VERSION,
    emit_csv,
    load_config,
    load_surface,
    parse_config,
    save_surface,
)
from .errors import ConfigurationError, SLHJBError
from .interpolation import EXTRAPOLATION_MODES, INTERPOLANTS, Grid
from .montecarlo import SimConfig, mc_value
from .problem import TimeMesh
from .quadrature import rule_for
from .solver import STEPPERS, backward_solve


def _domain(text):
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'lo,hi', got {text!r}") from None
    if not lo < hi:
        raise argparse.ArgumentTypeError("domain bounds must be increasing")
    return lo, hi


def _k_range(text):
    try:
        a, b = (int(v) for v in text.split(".."))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'first..last', got {text!r}") from None
    if a > b or a < 0:
        raise argparse.ArgumentTypeError("k-range needs 0 <= first <= last")
    return a, b


def _model(path):
    return load_config(path) if path else parse_config("")


def cmd_quad(args, out):
    rule = rule_for(args.order, args.dim, reduce=args.reduce)
    fh = open(args.out, "w", newline="", encoding="utf-8") if args.out else out
    try:
        w = csv.writer(fh)
        w.writerow([f"node_{j + 1}" for j in range(rule.dim)] + ["weight"])
        for node, weight in zip(rule.nodes, rule.weights):
            w.writerow([repr(float(v) + 0.0) for v in node] + [repr(float(weight))])
    finally:
        if args.out:
            fh.close()
    return 0


def cmd_solve(args, out):
    cfg = _model(args.model)
    problem = cfg.build_problem()
    N = args.N
    J = args.J if args.J is not None else N * N // 4
    lo, hi = args.domain if args.domain else cfg.domain_bounds()
    grid = Grid.uniform(lo, hi, J, args.extrapolation)
    M = args.gh_order if args.gh_order is not None else cfg.M[0]
    surface = backward_solve(problem, grid, TimeMesh(N, problem.horizon), rule_for(M),
                             interp=args.interp or cfg.interp, stepper=args.stepper or cfg.stepper,
                             keep="all" if args.all_slices else "initial")
    if args.out:
        emit_csv(surface, args.out)
    if args.surface:
        save_surface(surface, args.surface, all_slices=args.all_slices)
    s0 = cfg.build_payoff().reference_strike
    print(f"V(0, s={s0:g}) = {surface.value_at(math.log(s0)):.10g}  "
          f"[N={N} J={J} M={M} backend={kernels.BACKEND} cpu={surface.cpu_seconds:.2f}s]", file=out)
    return 0


def cmd_mc(args, out):
    cfg = _model(args.model)
    problem = cfg.build_problem()
    if (args.policy is None) == (args.control is None):
        raise ConfigurationError("give exactly one of --policy or --control")
    if args.policy:
        control = load_surface(args.policy)
        if control.model_hash != problem.digest():
            raise ConfigurationError(f"{args.policy}: surface was computed for a different model")
        if any(p is None for p in control.policy):
            raise ConfigurationError(f"{args.policy}: feedback simulation needs a surface saved with all slices")
        N = args.N or control.mesh.N
    else:
        kind, _, value = args.control.partition(":")
        if kind != "const" or not value:
            raise ConfigurationError(f"--control expects 'const:<value>', got {args.control!r}")
        control = float(value)
        N = args.N or 1
    s0 = args.s0 if args.s0 is not None else cfg.build_payoff().reference_strike
    sim = SimConfig(n_paths=args.paths, seed=args.seed, N=N, antithetic=args.antithetic)
    est, se = mc_value(problem, control, math.log(s0), sim)
    print(f"estimate={est:.10g} se={se:.4g} paths={args.paths} seed={args.seed}", file=out)
    if args.reference is not None:
        if args.reference == "bs":
            ref = cfg.exact_reference()
            if ref is None:
                raise ConfigurationError("no closed-form reference for this payoff")
            ref = float(ref(s0))
        else:
            ref = float(args.reference)
        diff = est - ref
        within = abs(diff) <= 3 * se
        print(f"reference={ref:.10g} diff={diff:.4g} within_3se={'yes' if within else 'no'}", file=out)
    return 0


def _report_path(base, M, several):
    if not several:
        return Path(base)
    p = Path(base)
    return p.with_name(f"{p.stem}_M{M}{p.suffix or '.csv'}")


def cmd_converge(args, out):
    cfg = load_config(args.study)
    if args.k_range:
        cfg.k_range = args.k_range
    if args.gh_order:
        cfg.M = tuple(args.gh_order)
    target = args.out or cfg.output or Path(args.study).with_suffix(".csv").name
    several = len(cfg.M) > 1
    for plan in cfg.plans():
        report = run_convergence_study(plan)
        path = _report_path(target, plan.M, several)
        emit_csv(report, path)
        print(f"# M={plan.M} interp={plan.interp} stepper={plan.stepper} reference={plan.reference} -> {path}", file=out)
        print(",".join(report.header()), file=out)
        for row, cells in zip(report.rows, report.table()):
            print(",".join(cells) + (f"  # {row.note}" if row.note else ""), file=out)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="slhjb", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version",
                        version=f"slhjb {__version__} (config schema {SCHEMA_VERSION})")
    sub = parser.add_subparsers(dest="command", required=True)

    q = sub.add_parser("quad", help="print a Gauss-Hermite rule as CSV")
    q.add_argument("--order", "-M", type=int, required=True)
    q.add_argument("--dim", "-p", type=int, default=1)
    q.add_argument("--reduce", action="store_true", help="apply Caratheodory reduction to the tensor rule")
    q.add_argument("--out")
    q.set_defaults(func=cmd_quad)

    s = sub.add_parser("solve", help="run the backward recursion once")
    s.add_argument("--model", help="config file with [model] and [payoff] blocks (default: call example)")
    s.add_argument("--N", type=int, default=64)
    s.add_argument("--J", type=int, help="grid intervals (default N^2/4)")
    s.add_argument("--gh-order", type=int)
    s.add_argument("--stepper", choices=STEPPERS)
    s.add_argument("--interp", choices=INTERPOLANTS)
    s.add_argument("--domain", type=_domain, help="log-price bounds 'lo,hi'")
    s.add_argument("--extrapolation", choices=EXTRAPOLATION_MODES, default="payoff_asymptotic")
    s.add_argument("--out", help="CSV of x, s, V(0, x), policy(0, x)")
    s.add_argument("--surface", help="write the surface to this .npz file")
    s.add_argument("--all-slices", action="store_true", help="keep and save every time slice")
    s.set_defaults(func=cmd_solve)

    m = sub.add_parser("mc", help="Monte Carlo value of a fixed or feedback policy")
    m.add_argument("--model")
    m.add_argument("--paths", type=int, default=100_000)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--policy", help="surface file saved with --all-slices")
    m.add_argument("--control", help="constant control, 'const:<value>'")
    m.add_argument("--N", type=int, help="time steps (default: surface mesh, or 1 for a constant control)")
    m.add_argument("--s0", type=float, help="initial price (default: reference strike)")
    m.add_argument("--antithetic", action="store_true")
    m.add_argument("--reference", help="number, or 'bs' for the closed form")
    m.set_defaults(func=cmd_mc)

    c = sub.add_parser("converge", help="refinement study to CSV")
    c.add_argument("--study", required=True)
    c.add_argument("--out")
    c.add_argument("--k-range", type=_k_range)
    c.add_argument("--gh-order", type=int, action="append")
    c.set_defaults(func=cmd_converge)
    return parser


def main(argv=None, out=None):
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, out)
    except SLHJBError as exc:
        print(f"error: {exc.kind}: {exc}", file=sys.stderr)
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
    except ValueError as exc:
        print(f"error: invalid-argument: {exc}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
