"""Command-line entry point: ``tdsekit <command> [options]``.

Commands: ``toolkit build|inspect``, ``run``, ``sweep-dt``, ``sweep-deps``,
``cost`` and ``ensemble``. Options may also come from a ``key=value`` file
given with ``--config``; explicit flags win.

Exit codes: 0 on success, 2 for usage or input errors, 3 for numerical failures.
"""

import argparse
import csv
import logging
import math
import sys

import numpy as np

from . import bench
from .errors import NumericalFailure, TdseKitError
from .field import TimeGrid, parse_field_spec
from .linalg import l2_error, unitarity_residual
from .model import build_ensemble, build_linear_rotor, build_two_level, load_system
from .propagate import (
    CALIBRATED_EXPONENTS,
    LITERAL_EXPONENTS,
    MethodId,
    propagate,
    run_ensemble,
    run_reference,
)
from .toolkit import (
    AmplitudeGrid,
    build_correctors,
    build_quantified_pairs,
    build_toolkit,
    load_toolkit,
    save_toolkit,
)

log = logging.getLogger("tdsekit")

# Default field and horizon for each built-in model.
MODEL_DEFAULTS = {
    "two-level": ("sin:1:1", 10.0),
    "rotor": (f"sin:20:{2 * math.pi!r}", 1.5),
}
FIELD_PRESETS = {"hcn": "sin:5e-5:5e-6"}
EXPONENTS = {"calibrated": CALIBRATED_EXPONENTS, "literal": LITERAL_EXPONENTS}


class UsageError(Exception):
    pass


def read_config(path):
    """Flat ``key=value`` lines; ``#`` starts a comment. Keys use flag spelling."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise UsageError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
            out[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return out


def _common(p):
    p.add_argument("--config", help="key=value file with defaults for any option")
    p.add_argument("--model", default="two-level", help="two-level | rotor | file:PATH")
    p.add_argument("--field", help="sin:AMP:OMEGA | pwc:PATH | csv:PATH | hcn")
    p.add_argument("--method", help="method id, or a comma-separated list (default TK; all for cost)")
    p.add_argument("--T", type=float, help="final time")
    p.add_argument("--N", type=int, default=64, help="number of time steps (coarsest in sweeps)")
    p.add_argument("--m", type=int, help="amplitude levels (omit for an infinite toolkit)")
    p.add_argument("--eps-min", type=float)
    p.add_argument("--eps-max", type=float)
    p.add_argument("--c", type=float, default=None, help="couple deps = c dt for ITK-high sweeps")
    p.add_argument("--tol", type=float, default=5e-3, help="target error for the cost search")
    p.add_argument("--tol-ref", type=float, default=1e-11, help="reference convergence tolerance")
    p.add_argument("--n-alpha", type=int, default=100, help="quantization levels for ITK_HIGH_Q")
    p.add_argument("--exponents", choices=sorted(EXPONENTS), default="calibrated",
                   help="corrector exponent convention for ITK_LOW")
    p.add_argument("--levels", type=int, default=5, help="number of dyadic points in a sweep")
    p.add_argument("--members", type=int, default=8, help="ensemble size")
    p.add_argument("--cache", help="toolkit cache file")
    p.add_argument("--out", help="output file (CSV)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--no-reference", action="store_true", help="skip the reference solve in run")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="tdsekit", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    tk = sub.add_parser("toolkit", help="build or inspect a toolkit cache")
    tk.add_argument("action", choices=["build", "inspect"])
    _common(tk)
    for name, text in [
        ("run", "propagate once and report the error at T"),
        ("sweep-dt", "error against the time step"),
        ("sweep-deps", "TK error against the amplitude spacing"),
        ("cost", "cheapest power-of-two parameters reaching --tol"),
        ("ensemble", "orientation-averaged propagation"),
    ]:
        _common(sub.add_parser(name, help=text))
    return parser


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        cfg = read_config(args.config)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = sorted(set(cfg) - known)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        for a in sub._actions:
            if a.dest in cfg and a.type is not None:
                cfg[a.dest] = a.type(cfg[a.dest])
            elif a.dest in cfg and a.const is True:
                cfg[a.dest] = cfg[a.dest].lower() in ("1", "true", "yes", "on")
        sub.set_defaults(**cfg)
        args = parser.parse_args(argv)
    return args


# --- option resolution --------------------------------------------------------------


def resolve_model(args):
    spec = args.model
    if spec == "two-level":
        return build_two_level()
    if spec == "rotor":
        return build_linear_rotor()
    if spec.startswith("file:"):
        return load_system(spec[5:])
    raise UsageError(f"unknown model {spec!r}")


def resolve_field(args):
    default_field, default_T = MODEL_DEFAULTS.get(args.model, ("sin:1:1", 1.0))
    spec = args.field or default_field
    spec = FIELD_PRESETS.get(spec, spec)
    f = parse_field_spec(spec)
    T = args.T if args.T is not None else getattr(f, "T", default_T)
    return f, float(T)


def resolve_methods(args, default="TK"):
    spec = args.method or default
    try:
        return [MethodId(x.strip().upper().replace("-", "_")) for x in spec.split(",")]
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def amplitude_range(args, f):
    lo, hi = f.bounds
    if args.eps_min is not None:
        lo = args.eps_min
    if args.eps_max is not None:
        hi = args.eps_max
    return lo, hi


def header(args, T, extra=""):
    ex = EXPONENTS[args.exponents]
    print(f"# tdsekit {args.command}: model={args.model} field={args.field or 'default'} T={T!r} "
          f"N={args.N} m={args.m} corrector_exponents=({ex.alpha_factor:g}, {ex.beta_factor:g})"
          + extra)


def get_toolkit(args, system, grid, f, lazy=True):
    if args.cache:
        tk = load_toolkit(args.cache, system)
        return tk
    if args.m is None:
        return None
    lo, hi = amplitude_range(args, f)
    return build_toolkit(system, AmplitudeGrid(lo, hi, args.m), grid.dt, jobs=args.jobs, lazy=lazy)


# --- commands -----------------------------------------------------------------------


def cmd_toolkit(args):
    system = resolve_model(args)
    f, T = resolve_field(args)
    grid = TimeGrid(T, args.N)
    if args.action == "build":
        if not args.cache or args.m is None:
            raise UsageError("toolkit build needs --m and --cache")
        lo, hi = amplitude_range(args, f)
        tk = build_toolkit(system, AmplitudeGrid(lo, hi, args.m), grid.dt, jobs=args.jobs)
        save_toolkit(tk, args.cache)
        header(args, T)
        print(f"wrote {args.m + 1} levels (n={tk.n}, dt={tk.dt!r}) to {args.cache}")
        return 0
    if not args.cache:
        raise UsageError("toolkit inspect needs --cache")
    tk = load_toolkit(args.cache, system)
    worst = max(unitarity_residual(tk.propagator(k)) for k in range(tk.m + 1))
    print(f"n            {tk.n}")
    print(f"levels       {tk.m + 1} (m={tk.m})")
    print(f"amplitudes   [{tk.grid.eps_min!r}, {tk.grid.eps_max!r}] step {tk.grid.delta!r}")
    print(f"dt           {tk.dt!r}")
    print(f"fingerprint  {tk.fingerprint.hex()}")
    print(f"unitarity    {worst:.3e}")
    return 0


def _single(args, system, f, T, method):
    grid = TimeGrid(T, args.N)
    tk = get_toolkit(args, system, grid, f)
    if method in (MethodId.ITK_HIGH, MethodId.ITK_HIGH_Q) and tk is None:
        raise UsageError(f"{method.value} needs --m or --cache")
    qt = build_quantified_pairs(tk, args.n_alpha, lazy=True) if method is MethodId.ITK_HIGH_Q else None
    corr = build_correctors(system, grid.dt) if method is MethodId.ITK_LOW else None
    return grid, tk, propagate(method, system, f, grid, toolkit=tk, correctors=corr, qtable=qt,
                               exponents=EXPONENTS[args.exponents])


def cmd_run(args):
    system = resolve_model(args)
    f, T = resolve_field(args)
    methods = resolve_methods(args)
    header(args, T)
    ref = None
    records = []
    for method in methods:
        grid, tk, traj = _single(args, system, f, T, method)
        c = traj.counters
        print(f"method       {method.value}")
        print(f"mat-vec      {c.matvec}")
        print(f"mat-mat      {c.matmat}")
        print(f"online exp   {c.online_exp}")
        print(f"norm drift   {traj.norm_deviation():.3e}")
        err = 0.0
        if not args.no_reference:
            if ref is None:
                ref = run_reference(system, f, grid, args.tol_ref)
            err = l2_error(traj.final, ref)
            print(f"error_l2     {err:.6e}")
        print("final state  " + " ".join(f"{z.real:+.12e}{z.imag:+.12e}j" for z in traj.final))
        deps = tk.grid.delta if tk is not None else 0.0
        records.append(bench.ConvergenceRecord(method, grid.dt, deps, err, c.matvec, 0))
    if args.out:
        bench.emit_csv(records, args.out)
    return 0


def _print_records(records, x):
    print(f"{'method':<11} {'dt':>12} {'deps':>12} {'error_l2':>12} {'products':>9}")
    for r in records:
        print(f"{r.method.value:<11} {r.dt:12.5e} {r.deps:12.5e} {r.error:12.5e} {r.mat_products:9d}")
    for m in sorted({r.method for r in records}, key=lambda m: m.value):
        rows = [r for r in records if r.method == m]
        if len(rows) >= 3 and all(r.error > 0 for r in rows):
            print(f"slope[{m.value}] vs {x}: {bench.record_slope(rows, x=x):.3f}")


def cmd_sweep_dt(args):
    system = resolve_model(args)
    f, T = resolve_field(args)
    methods = resolve_methods(args)
    header(args, T, f" c={args.c}")
    dts = [T / (args.N * 2**k) for k in range(args.levels)]
    recs = bench.sweep_dt(system, f, methods, dts, T, c=args.c, tol_ref=args.tol_ref,
                          jobs=args.jobs, exponents=EXPONENTS[args.exponents])
    _print_records(recs, "dt")
    if args.out:
        bench.emit_csv(recs, args.out)
    return 0


def cmd_sweep_deps(args):
    system = resolve_model(args)
    f, T = resolve_field(args)
    header(args, T)
    lo, hi = amplitude_range(args, f)
    m0 = args.m or 4
    deps = [(hi - lo) / (m0 * 2**k) for k in range(args.levels)]
    recs = bench.sweep_deps(system, f, deps, T / args.N, T, tol_ref=args.tol_ref, jobs=args.jobs)
    _print_records(recs, "deps")
    if args.out:
        bench.emit_csv(recs, args.out)
    return 0


def cmd_cost(args):
    system = resolve_model(args)
    f, T = resolve_field(args)
    methods = resolve_methods(args, ",".join(m.value for m in bench.METHOD_LABELS))
    header(args, T, f" tol={args.tol!r} n_alpha={args.n_alpha}")
    rows = bench.cost_search(system, f, methods, args.tol, T, tol_ref=args.tol_ref,
                             n_alpha=args.n_alpha, exponents=EXPONENTS[args.exponents])
    print(bench.format_cost_table(rows), end="")
    if args.out:
        bench.emit_cost_csv(rows, args.out)
    return 0


def cmd_ensemble(args):
    system = resolve_model(args)
    f, T = resolve_field(args)
    (method,) = resolve_methods(args)
    rng = np.random.default_rng(args.seed)
    # isotropic orientations: cos(xi) uniform on [-1, 1]
    xis = np.arccos(rng.uniform(-1.0, 1.0, size=args.members))
    ens = build_ensemble(system, xis)
    grid = TimeGrid(T, args.N)
    header(args, T, f" members={args.members} seed={args.seed}")
    tk = get_toolkit(args, system, grid, f)
    kw = {"exponents": EXPONENTS[args.exponents]}
    if method is MethodId.ITK_HIGH_Q:
        kw["qtable"] = build_quantified_pairs(tk, args.n_alpha, lazy=True)
    trajs = run_ensemble(ens, f, tk, grid, method, jobs=args.jobs, **kw)
    pops = np.array([np.abs(t.final) ** 2 for t in trajs])
    print("mean populations " + " ".join(f"{p:.8f}" for p in pops.mean(axis=0)))
    print(f"max norm drift   {max(t.norm_deviation() for t in trajs):.3e}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["member", "orientation", "field_factor"]
                       + [f"pop{k}" for k in range(system.n)])
            for k, (mem, p) in enumerate(zip(ens.members, pops)):
                w.writerow([k, repr(mem.orientation), repr(mem.field_factor), *map(repr, p)])
    return 0


COMMANDS = {
    "toolkit": cmd_toolkit,
    "run": cmd_run,
    "sweep-dt": cmd_sweep_dt,
    "sweep-deps": cmd_sweep_deps,
    "cost": cmd_cost,
    "ensemble": cmd_ensemble,
}


def main(argv=None):
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(f"tdsekit: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except NumericalFailure as exc:
        print(f"tdsekit: numerical failure: {exc}", file=sys.stderr)
        return 3
    except (UsageError, TdseKitError, ValueError, OSError) as exc:
        print(f"tdsekit: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
