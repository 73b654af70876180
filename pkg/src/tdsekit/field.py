"""Control fields eps(t), uniform time grids and the finite-difference stencils
used by the low-intensity corrector method."""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, IndexOutOfRange, InvalidParameter, OutOfDomain

# Relative slack on the time domain so that j * (T / N) for j = N is accepted.
_DOMAIN_SLACK = 1e-12


@dataclass(frozen=True)
class TimeGrid:
    T: float
    N: int

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise InvalidParameter(f"N must be a positive integer, got {self.N}")
        if not self.T > 0:
            raise InvalidParameter(f"T must be positive, got {self.T}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "T", float(self.T))

    @property
    def dt(self):
        return self.T / self.N

    def nodes(self):
        return np.arange(self.N + 1) * self.dt

    def midpoints(self):
        return (np.arange(self.N) + 0.5) * self.dt


class ControlField:
    """A real scalar signal with declared amplitude bounds.

    Subclasses implement ``_values(t)`` on an array of times already checked
    against ``domain``.
    """

    eps_min: float
    eps_max: float

    @property
    def domain(self):
        """``(t_start, t_end)`` or ``None`` when defined for every t."""
        return None

    @property
    def bounds(self):
        return (self.eps_min, self.eps_max)

    def __call__(self, t):
        arr = np.asarray(t, dtype=float)
        dom = self.domain
        if dom is not None:
            lo, hi = dom
            slack = _DOMAIN_SLACK * max(1.0, abs(hi))
            if np.any(arr < lo - slack) or np.any(arr > hi + slack):
                raise OutOfDomain(f"t outside field domain [{lo}, {hi}]")
            arr = np.clip(arr, lo, hi)
        out = self._values(arr)
        return float(out) if out.ndim == 0 else out

    def _values(self, t):
        raise NotImplementedError

    def scaled(self, factor):
        """The field ``factor * eps(t)`` with bounds scaled accordingly."""
        raise NotImplementedError


def _scaled_bounds(lo, hi, factor):
    a, b = factor * lo, factor * hi
    return (min(a, b), max(a, b))


def _check_declared(values, eps_min, eps_max):
    if not eps_min <= eps_max:
        raise InvalidParameter(f"eps_min={eps_min} exceeds eps_max={eps_max}")
    if len(values) and (np.min(values) < eps_min or np.max(values) > eps_max):
        raise InvalidParameter(
            f"field values span [{np.min(values)}, {np.max(values)}], "
            f"outside declared bounds [{eps_min}, {eps_max}]"
        )


@dataclass(frozen=True)
class Sinusoid(ControlField):
    amplitude: float
    omega: float
    eps_min: float = None
    eps_max: float = None

    def __post_init__(self):
        a = abs(self.amplitude)
        if self.eps_min is None:
            object.__setattr__(self, "eps_min", -a)
        if self.eps_max is None:
            object.__setattr__(self, "eps_max", a)
        _check_declared(np.array([-a, a]), self.eps_min, self.eps_max)

    def _values(self, t):
        return self.amplitude * np.sin(self.omega * t)

    def scaled(self, factor):
        lo, hi = _scaled_bounds(self.eps_min, self.eps_max, factor)
        return Sinusoid(self.amplitude * factor, self.omega, lo, hi)


@dataclass(frozen=True, eq=False)
class PiecewiseConstant(ControlField):
    """Right-continuous steps: ``values[k]`` on ``[breakpoints[k], breakpoints[k+1])``."""

    breakpoints: np.ndarray
    values: np.ndarray
    eps_min: float = None
    eps_max: float = None

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if bp.ndim != 1 or vals.ndim != 1 or len(bp) != len(vals) + 1 or len(vals) == 0:
            raise InvalidParameter("need len(breakpoints) == len(values) + 1 >= 2")
        if np.any(np.diff(bp) <= 0):
            raise InvalidParameter("breakpoints must be strictly increasing")
        bp.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)
        if self.eps_min is None:
            object.__setattr__(self, "eps_min", float(vals.min()))
        if self.eps_max is None:
            object.__setattr__(self, "eps_max", float(vals.max()))
        _check_declared(vals, self.eps_min, self.eps_max)

    @property
    def domain(self):
        return (float(self.breakpoints[0]), float(self.breakpoints[-1]))

    def _values(self, t):
        idx = np.searchsorted(self.breakpoints, t, side="right") - 1
        idx = np.clip(idx, 0, len(self.values) - 1)
        return self.values[idx]

    def scaled(self, factor):
        lo, hi = _scaled_bounds(self.eps_min, self.eps_max, factor)
        return PiecewiseConstant(self.breakpoints, self.values * factor, lo, hi)


@dataclass(frozen=True, eq=False)
class Sampled(ControlField):
    """Uniform samples on ``[0, T]`` joined by straight lines."""

    values: np.ndarray
    T: float
    eps_min: float = None
    eps_max: float = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or len(vals) < 2:
            raise InvalidParameter("a sampled field needs at least two samples")
        if not self.T > 0:
            raise InvalidParameter(f"T must be positive, got {self.T}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if self.eps_min is None:
            object.__setattr__(self, "eps_min", float(vals.min()))
        if self.eps_max is None:
            object.__setattr__(self, "eps_max", float(vals.max()))
        _check_declared(vals, self.eps_min, self.eps_max)

    @property
    def domain(self):
        return (0.0, float(self.T))

    @property
    def times(self):
        return np.linspace(0.0, self.T, len(self.values))

    def _values(self, t):
        return np.interp(t, self.times, self.values)

    def scaled(self, factor):
        lo, hi = _scaled_bounds(self.eps_min, self.eps_max, factor)
        return Sampled(self.values * factor, self.T, lo, hi)


def constant(value, T, eps_min=None, eps_max=None):
    return PiecewiseConstant([0.0, T], [value], eps_min, eps_max)


def sampled_from(func, T, n_samples, eps_min=None, eps_max=None):
    """Tabulate ``func`` on ``n_samples`` uniform points of ``[0, T]``."""
    t = np.linspace(0.0, T, n_samples)
    return Sampled(np.asarray(func(t), dtype=float), T, eps_min, eps_max)


def flat_top(level, T, ramp, n_samples=4097, eps_min=None, eps_max=None):
    """sin^2 ramp up over ``ramp``, plateau at ``level``, symmetric ramp down."""
    if not 0 < 2 * ramp <= T:
        raise InvalidParameter("need 0 < 2 * ramp <= T")

    def shape(t):
        up = np.sin(0.5 * np.pi * np.clip(t / ramp, 0.0, 1.0)) ** 2
        down = np.sin(0.5 * np.pi * np.clip((T - t) / ramp, 0.0, 1.0)) ** 2
        return level * np.minimum(up, down)

    return sampled_from(shape, T, n_samples, eps_min, eps_max)


def evaluate(f, t):
    return f(t)


def midpoint_samples(f, grid):
    return np.asarray(f(grid.midpoints()), dtype=float)


def _check_index(grid, j):
    if not 0 <= j < grid.N:
        raise IndexOutOfRange(f"step index {j} outside 0..{grid.N - 1}")


def stencil_alpha(f, grid, j):
    """Forward divided difference ``(eps(t_{j+1}) - eps(t_j)) / dt``."""
    _check_index(grid, j)
    dt = grid.dt
    return (f((j + 1) * dt) - f(j * dt)) / dt


def stencil_beta(f, grid, j):
    """``(eps(t_{j+1}) - 2 eps(t_{j+1/2}) + eps(t_j)) / dt**2``.

    With this denominator the value tends to one quarter of the second
    derivative at the midpoint; callers that need the derivative itself scale it.
    """
    _check_index(grid, j)
    dt = grid.dt
    return (f((j + 1) * dt) - 2.0 * f((j + 0.5) * dt) + f(j * dt)) / dt**2


def stencils(f, grid):
    """All ``(alpha_j, beta_j)`` for ``j = 0..N-1`` as two arrays."""
    dt = grid.dt
    nodes = np.asarray(f(grid.nodes()), dtype=float)
    mids = midpoint_samples(f, grid)
    alpha = (nodes[1:] - nodes[:-1]) / dt
    beta = (nodes[1:] - 2.0 * mids + nodes[:-1]) / dt**2
    return alpha, beta


def bounds_check(f, grid, eps_min, eps_max):
    """True iff every midpoint sample (and every stored breakpoint/sample value)
    lies in the closed interval ``[eps_min, eps_max]``."""
    vals = [midpoint_samples(f, grid)]
    if isinstance(f, (PiecewiseConstant, Sampled)):
        vals.append(np.asarray(f.values))
    allv = np.concatenate(vals)
    return bool(np.all(allv >= eps_min) and np.all(allv <= eps_max))


# --- files ---------------------------------------------------------------------


def _numeric_rows(path):
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            rec = [c.strip() for c in rec if c.strip()]
            if not rec or rec[0].startswith("#"):
                continue
            try:
                rows.append([float(c) for c in rec])
            except ValueError:
                if rows:
                    raise FormatError(f"{path}: non-numeric row {rec}") from None
                # header line
    return rows


def read_sampled_csv(path, eps_min=None, eps_max=None):
    """Read a two-column ``t,epsilon`` CSV with uniform spacing starting at 0."""
    rows = _numeric_rows(path)
    if len(rows) < 2 or any(len(r) != 2 for r in rows):
        raise FormatError(f"{path}: expected at least two 't,epsilon' rows")
    t = np.array([r[0] for r in rows])
    eps = np.array([r[1] for r in rows])
    if t[0] != 0.0:
        raise FormatError(f"{path}: first time must be 0, got {t[0]}")
    steps = np.diff(t)
    h = (t[-1] - t[0]) / (len(t) - 1)
    if h <= 0 or np.max(np.abs(steps - h)) > 1e-9 * max(1.0, abs(h)):
        raise FormatError(f"{path}: time column is not uniformly spaced")
    return Sampled(eps, float(t[-1]), eps_min, eps_max)


def read_pwc_csv(path, eps_min=None, eps_max=None):
    """Read ``t_k,value_k`` rows followed by a final ``t_end`` row."""
    rows = _numeric_rows(path)
    if len(rows) < 2 or len(rows[-1]) != 1 or any(len(r) != 2 for r in rows[:-1]):
        raise FormatError(f"{path}: expected 't,value' rows and a final 't_end' row")
    bp = [r[0] for r in rows[:-1]] + [rows[-1][0]]
    vals = [r[1] for r in rows[:-1]]
    return PiecewiseConstant(bp, vals, eps_min, eps_max)


def write_pwc_csv(f, path):
    lines = ["t,epsilon"]
    lines += [f"{float(t)!r},{float(v)!r}" for t, v in zip(f.breakpoints[:-1], f.values)]
    lines.append(repr(float(f.breakpoints[-1])))
    Path(path).write_text("\n".join(lines) + "\n")


def write_sampled_csv(f, path):
    lines = ["t,epsilon"] + [f"{float(t)!r},{float(v)!r}" for t, v in zip(f.times, f.values)]
    Path(path).write_text("\n".join(lines) + "\n")


def parse_field_spec(spec):
    """``sin:AMP:OMEGA``, ``pwc:PATH`` or ``csv:PATH``."""
    kind, _, rest = spec.partition(":")
    if kind == "sin":
        parts = rest.split(":")
        if len(parts) != 2:
            raise InvalidParameter(f"expected sin:AMP:OMEGA, got {spec!r}")
        return Sinusoid(float(parts[0]), float(parts[1]))
    if kind == "pwc":
        return read_pwc_csv(rest)
    if kind == "csv":
        return read_sampled_csv(rest)
    raise InvalidParameter(f"unknown field spec {spec!r}")

