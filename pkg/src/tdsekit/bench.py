"""Convergence sweeps, cost search and CSV output."""

import csv
import logging
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateInput, InvalidParameter, SearchExhausted
from .field import TimeGrid
from .linalg import l2_error
from .propagate import (
    CALIBRATED_EXPONENTS,
    MethodId,
    run_itk_high,
    run_itk_high_quantified,
    run_itk_low,
    run_reference,
    run_strang,
    run_tk,
)
from .toolkit import AmplitudeGrid, build_correctors, build_quantified_pairs, build_toolkit

log = logging.getLogger(__name__)

CSV_HEADER = ("method", "dt", "deps", "error_l2", "mat_products", "wall_ns")
SEARCH_CAP = 2**20

# Callables invoked as ``fn(trajectory)`` after every measured propagation.
OBSERVERS = []

METHOD_LABELS = {
    MethodId.STRANG: "Strang splitting",
    MethodId.TK: "Toolkit",
    MethodId.ITK_LOW: "Improved toolkit I",
    MethodId.ITK_HIGH: "Improved toolkit II",
    MethodId.ITK_HIGH_Q: "Quantified improved toolkit II",
}


@dataclass(frozen=True)
class ConvergenceRecord:
    method: MethodId
    dt: float
    deps: float
    error: float
    mat_products: int
    wall_ns: int

    def __post_init__(self):
        if not self.error >= 0 or self.mat_products < 0 or self.wall_ns < 0:
            raise InvalidParameter(f"invalid record {self!r}")


@dataclass(frozen=True)
class CostRow:
    method: MethodId
    N: int
    matrix_products: int
    m: int | None


def _sort_key(r):
    return (MethodId(r.method).value, r.dt, r.deps)


def sort_records(records):
    return sorted(records, key=_sort_key)


def fit_slope(points):
    """Least-squares slope and intercept of ``log y`` against ``log x``."""
    pts = list(points)
    if len(pts) < 3:
        raise DegenerateInput(f"need at least 3 points, got {len(pts)}")
    x = np.array([p[0] for p in pts], dtype=float)
    y = np.array([p[1] for p in pts], dtype=float)
    if np.any(x <= 0) or np.any(y <= 0):
        raise DegenerateInput("fit_slope needs positive x and y")
    lx, ly = np.log(x), np.log(y)
    dx = lx - lx.mean()
    sxx = float(dx @ dx)
    if sxx == 0.0:
        raise DegenerateInput("all x values are equal")
    slope = float(dx @ (ly - ly.mean())) / sxx
    return slope, float(ly.mean() - slope * lx.mean())


def record_slope(records, method=None, x="dt"):
    rows = [r for r in records if method is None or r.method == method]
    return fit_slope([(getattr(r, x), r.error) for r in rows])[0]


# --- single measurements ------------------------------------------------------------


def _timed(fn):
    t0 = time.perf_counter_ns()
    traj = fn()
    return traj, time.perf_counter_ns() - t0


def _measure(method, system, field_, grid, reference, deps=0.0, toolkit=None, n_alpha=100,
             exponents=CALIBRATED_EXPONENTS):
    """Run one method and return its record. ``deps == 0`` emulates an infinite toolkit."""
    method = MethodId(method)
    if method is MethodId.TK:
        fn = lambda: run_tk(system, field_, toolkit, grid)
    elif method is MethodId.ITK_LOW:
        corr = build_correctors(system, grid.dt)
        fn = lambda: run_itk_low(system, field_, toolkit, corr, grid, exponents)
    elif method is MethodId.ITK_HIGH:
        fn = lambda: run_itk_high(system, field_, toolkit, grid)
    elif method is MethodId.ITK_HIGH_Q:
        qt = build_quantified_pairs(toolkit, n_alpha, lazy=True)
        fn = lambda: run_itk_high_quantified(system, field_, qt, grid)
    elif method is MethodId.STRANG:
        fn = lambda: run_strang(system, field_, grid)
    else:
        raise InvalidParameter("REFERENCE is not a sweepable method")
    traj, wall = _timed(fn)
    for observe in OBSERVERS:
        observe(traj)
    return ConvergenceRecord(method, grid.dt, float(deps), l2_error(traj.final, reference),
                             traj.counters.matvec, wall)


def _range(field_):
    lo, hi = field_.bounds
    return lo, hi


def coupled_grid(field_, dt, c):
    """Amplitude grid with ``m = ceil((eps_max - eps_min) / (c dt))`` levels."""
    lo, hi = _range(field_)
    m = max(1, math.ceil((hi - lo) / (c * dt) - 1e-9))
    return AmplitudeGrid(lo, hi, m)


def _sweep_dt_point(args):
    system, field_, T, method, N, c, reference, exponents = args
    grid = TimeGrid(T, N)
    if method in (MethodId.ITK_HIGH, MethodId.ITK_HIGH_Q):
        if c is None:
            raise InvalidParameter("ITK-high sweeps need the coupling c (deps = c dt)")
        ag = coupled_grid(field_, grid.dt, c)
        tk = build_toolkit(system, ag, grid.dt, lazy=True)
        return _measure(method, system, field_, grid, reference, ag.delta, tk, exponents=exponents)
    return _measure(method, system, field_, grid, reference, exponents=exponents)


def _run_points(fn, points, jobs):
    if jobs and jobs > 1 and len(points) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, points))
    return [fn(p) for p in points]


def _check_dyadic(values, name):
    vals = list(values)
    for a, b in zip(vals, vals[1:]):
        if not math.isclose(a / b, 2.0, rel_tol=1e-9):
            raise InvalidParameter(f"{name} must be dyadic and descending, got {vals}")
    return vals


def sweep_dt(system, field_, methods, dts, T, c=None, reference=None, tol_ref=1e-11, jobs=1,
             exponents=CALIBRATED_EXPONENTS):
    """One record per (method, dt); every dt must divide ``T``."""
    dts = _check_dyadic(dts, "dt list")
    steps = []
    for dt in dts:
        N = round(T / dt)
        if N < 1 or not math.isclose(N * dt, T, rel_tol=1e-9):
            raise InvalidParameter(f"dt={dt!r} does not divide T={T!r}")
        steps.append(N)
    if reference is None:
        reference = run_reference(system, field_, TimeGrid(T, max(steps)), tol_ref)
    points = [(system, field_, T, MethodId(m), N, c, reference, exponents)
              for m in methods for N in steps]
    return sort_records(_run_points(_sweep_dt_point, points, jobs))


def _sweep_deps_point(args):
    system, field_, T, deps, N, reference = args
    grid = TimeGrid(T, N)
    lo, hi = _range(field_)
    ag = AmplitudeGrid.from_spacing(lo, hi, deps)
    tk = build_toolkit(system, ag, grid.dt, lazy=True)
    return _measure(MethodId.TK, system, field_, grid, reference, ag.delta, tk)


def sweep_deps(system, field_, deps_list, dt_small, T, reference=None, tol_ref=1e-11, jobs=1):
    """TK error against the amplitude spacing at a fixed small step.

    Warns when the emulated (deps = 0) error is not at most 1% of the smallest
    sweep error, i.e. when the time-step term is not negligible.
    """
    deps_list = _check_dyadic(deps_list, "deps list")
    N = round(T / dt_small)
    if N < 1 or not math.isclose(N * dt_small, T, rel_tol=1e-9):
        raise InvalidParameter(f"dt={dt_small!r} does not divide T={T!r}")
    if reference is None:
        reference = run_reference(system, field_, TimeGrid(T, N), tol_ref)
    points = [(system, field_, T, d, N, reference) for d in deps_list]
    records = sort_records(_run_points(_sweep_deps_point, points, jobs))
    floor = _measure(MethodId.TK, system, field_, TimeGrid(T, N), reference).error
    smallest = min(r.error for r in records)
    if floor > 0.01 * smallest:
        warnings.warn(
            f"time-step error {floor:.3e} is not <= 1% of the smallest deps error {smallest:.3e}",
            RuntimeWarning, stacklevel=2,
        )
    return records


# --- cost search --------------------------------------------------------------------


def _cost_grid(field_, m):
    lo, hi = _range(field_)
    top = max(abs(lo), abs(hi))
    return AmplitudeGrid.from_spacing(lo, hi, top / m)


def _pow2(cap):
    k = 1
    while k <= cap:
        yield k
        k *= 2


def cost_search(system, field_, methods, tol, T, reference=None, tol_ref=1e-11, n_alpha=100,
                exponents=CALIBRATED_EXPONENTS, n_cap=SEARCH_CAP, m_cap=SEARCH_CAP):
    """Cheapest power-of-two ``N`` (then smallest power-of-two ``m``) reaching ``tol``.

    For each ``N`` in increasing order the infinite-toolkit error is checked
    first; only when it meets ``tol`` are toolkits of increasing ``m`` tried.
    ``m`` counts levels of spacing ``max|eps| / m``.
    """
    if not 0 < tol <= 2:
        raise InvalidParameter(f"tol must lie in (0, 2], got {tol}")
    if reference is None:
        reference = run_reference(system, field_, TimeGrid(T, 64), tol_ref)
    rows = []
    for method in methods:
        method = MethodId(method)
        rows.append(_search_one(system, field_, T, method, tol, reference, n_alpha, exponents,
                                n_cap, m_cap))
    return rows


def _search_one(system, field_, T, method, tol, reference, n_alpha, exponents, n_cap, m_cap):
    emulated = MethodId.TK if method in (MethodId.ITK_HIGH, MethodId.ITK_HIGH_Q) else method
    for N in _pow2(n_cap):
        grid = TimeGrid(T, N)
        rec = _measure(emulated, system, field_, grid, reference, exponents=exponents)
        if method is MethodId.STRANG:
            if rec.error <= tol:
                return CostRow(method, N, rec.mat_products, None)
            continue
        if rec.error > tol:
            continue
        for m in _pow2(m_cap):
            ag = _cost_grid(field_, m)
            tk = build_toolkit(system, ag, grid.dt, lazy=True)
            r = _measure(method, system, field_, grid, reference, ag.delta, tk, n_alpha, exponents)
            log.debug("%s N=%d m=%d error=%.3e", method.value, N, m, r.error)
            if r.error <= tol:
                return CostRow(method, N, r.mat_products, m)
    raise SearchExhausted(f"{method.value}: no N <= {n_cap}, m <= {m_cap} reaches {tol:g}")


def format_cost_table(rows):
    """Plain-text table with columns ``N = T/dt``, ``Matrix products``, ``m = eps_max/deps``."""
    head = ("", "N = T/Δt", "Matrix products", "m = ε_max/Δε")
    body = [(METHOD_LABELS[r.method], str(r.N), str(r.matrix_products),
             "-" if r.m is None else str(r.m)) for r in rows]
    widths = [max(len(row[i]) for row in [head, *body]) for i in range(4)]
    fmt = lambda row: " | ".join(
        cell.ljust(w) if i == 0 else cell.rjust(w) for i, (cell, w) in enumerate(zip(row, widths))
    )
    sep = "-+-".join("-" * w for w in widths)
    return "\n".join([fmt(head), sep, *map(fmt, body)]) + "\n"


# --- CSV ----------------------------------------------------------------------------


def emit_csv(records, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in records:
            w.writerow([MethodId(r.method).value, repr(float(r.dt)), repr(float(r.deps)),
                        repr(float(r.error)), int(r.mat_products), int(r.wall_ns)])


def read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        return [ConvergenceRecord(MethodId(row[0]), float(row[1]), float(row[2]), float(row[3]),
                                  int(row[4]), int(row[5])) for row in reader]


def emit_cost_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("method", "N", "mat_products", "m"))
        for r in rows:
            w.writerow([r.method.value, r.N, r.matrix_products, "" if r.m is None else r.m])


def write_text(path, text):
    Path(path).write_text(text)
