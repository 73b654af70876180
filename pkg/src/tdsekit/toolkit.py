"""Precomputed propagators over a uniform grid of field amplitudes.

A toolkit holds, for every amplitude level ``e_l = eps_min + l * deps``
(``l = 0..m``), the eigendecomposition of ``H0 - mu * e_l`` and the step
propagator ``S_l = exp(-i dt (H0 - mu * e_l))``. Fractional powers
``S_l^a`` are exponentials of the scaled generator, never matrix roots.
"""

import hashlib
import math
import struct
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    FieldOutOfToolkitRange,
    FingerprintMismatch,
    FormatError,
    InvalidParameter,
)
from .linalg import HermitianEig, anti_hermitian_eig, commutator, herm_eig, unitary_exp

MAGIC = b"QTK1"
VERSION = 1
_HEADER = struct.Struct("<4sIQQddd32s")


@dataclass(frozen=True)
class AmplitudeGrid:
    eps_min: float
    eps_max: float
    m: int

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise InvalidParameter(f"m must be a positive integer, got {self.m}")
        if not self.eps_max > self.eps_min:
            raise InvalidParameter(f"need eps_max > eps_min, got [{self.eps_min}, {self.eps_max}]")
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "eps_min", float(self.eps_min))
        object.__setattr__(self, "eps_max", float(self.eps_max))

    @classmethod
    def from_spacing(cls, eps_min, eps_max, deps):
        """Smallest grid with spacing ``deps`` that covers the interval.

        When the width is not a multiple of ``deps`` the lower end is pushed
        down so that the spacing is exact.
        """
        ratio = (eps_max - eps_min) / deps
        if abs(ratio - round(ratio)) <= 1e-9 * max(1.0, ratio):
            return cls(eps_min, eps_max, max(1, round(ratio)))
        m = math.ceil(ratio)
        return cls(eps_max - m * deps, eps_max, m)

    @property
    def delta(self):
        return (self.eps_max - self.eps_min) / self.m

    def value(self, level):
        if level == self.m:
            return self.eps_max
        return self.eps_min + level * self.delta

    def values(self):
        return np.array([self.value(k) for k in range(self.m + 1)])

    def nearest(self, eps):
        """Index of the closest level; ties go to the lower index."""
        half = 0.5 * self.delta
        if not (self.eps_min - half <= eps <= self.eps_max + half):
            raise FieldOutOfToolkitRange(
                f"field value {eps!r} outside [{self.eps_min - half}, {self.eps_max + half}]"
            )
        x = (eps - self.eps_min) / self.delta
        best = min(max(math.ceil(x - 0.5), 0), self.m)
        # guard against rounding in x: compare real distances of the neighbours
        for cand in (best - 1, best + 1):
            if 0 <= cand <= self.m:
                d_c = abs(eps - self.value(cand))
                d_b = abs(eps - self.value(best))
                if d_c < d_b or (d_c == d_b and cand < best):
                    best = cand
        return best

    def bracket(self, eps):
        """``(l, alpha, beta)`` with ``alpha e_l + beta e_{l+1} = eps`` and ``alpha + beta = 1``."""
        if not (self.eps_min <= eps <= self.eps_max):
            raise FieldOutOfToolkitRange(
                f"field value {eps!r} outside [{self.eps_min}, {self.eps_max}]"
            )
        level = min(max(int(math.floor((eps - self.eps_min) / self.delta)), 0), self.m - 1)
        if eps < self.value(level):
            level -= 1
        elif eps > self.value(level + 1):
            level += 1
        lo, hi = self.value(level), self.value(level + 1)
        beta = min(max((eps - lo) / (hi - lo), 0.0), 1.0)
        return level, 1.0 - beta, beta


def _grid_of(obj):
    return obj.grid if isinstance(obj, (Toolkit, QuantifiedPairTable)) else obj


def nearest(tk, eps):
    return _grid_of(tk).nearest(eps)


def bracket(tk, eps):
    return _grid_of(tk).bracket(eps)


@dataclass(frozen=True, eq=False)
class ToolkitEntry:
    eig: HermitianEig
    propagator: np.ndarray


def _make_entry(h0, mu, eps, dt):
    eig = herm_eig(h0 - mu * eps)
    s = unitary_exp(eig, dt)
    s.setflags(write=False)
    return ToolkitEntry(eig, s)


class Toolkit:
    """Step propagators ``S_l(dt)`` for every level of ``grid``.

    Built eagerly by :func:`build_toolkit`. With ``lazy=True`` levels are
    computed on first use and memoized, which is what makes very fine grids
    affordable when a field only visits a few hundred levels. Either way the
    entry for a level is a deterministic function of ``(H0, mu, e_l, dt)``.
    """

    def __init__(self, system, grid, dt, entries=None, lazy=False):
        if not dt > 0:
            raise InvalidParameter(f"dt must be positive, got {dt}")
        self.h0 = system.h0
        self.mu = system.mu
        self.fingerprint = system.fingerprint
        self.grid = grid
        self.dt = float(dt)
        self.lazy = lazy
        self._entries = dict(entries or {})
        self._transfers = {}
        self._lock = threading.Lock()

    def __repr__(self):
        return (
            f"Toolkit(n={self.n}, m={self.grid.m}, dt={self.dt!r}, "
            f"eps=[{self.grid.eps_min!r}, {self.grid.eps_max!r}], built={len(self._entries)})"
        )

    @property
    def n(self):
        return self.h0.shape[0]

    @property
    def m(self):
        return self.grid.m

    @property
    def built_levels(self):
        return sorted(self._entries)

    def entry(self, level):
        e = self._entries.get(level)
        if e is None:
            if not 0 <= level <= self.grid.m:
                raise FieldOutOfToolkitRange(f"level {level} outside 0..{self.grid.m}")
            if not self.lazy:
                raise KeyError(f"level {level} missing from an eager toolkit")
            e = _make_entry(self.h0, self.mu, self.grid.value(level), self.dt)
            with self._lock:
                e = self._entries.setdefault(level, e)
        return e

    def eig(self, level):
        return self.entry(level).eig

    def propagator(self, level):
        return self.entry(level).propagator

    def power(self, level, a):
        """``S_l(dt)^a``."""
        return unitary_exp(self.eig(level), a * self.dt)

    def transfer(self, level):
        """``V_{l+1}^H V_l``: maps the eigenbasis of level ``l`` to that of ``l + 1``."""
        w = self._transfers.get(level)
        if w is None:
            w = self.eig(level + 1).eigenvectors.conj().T @ self.eig(level).eigenvectors
            with self._lock:
                w = self._transfers.setdefault(level, w)
        return w

    def materialize(self, jobs=1):
        missing = [k for k in range(self.grid.m + 1) if k not in self._entries]
        for k, e in zip(missing, _build_entries(self.h0, self.mu, self.grid, self.dt, missing, jobs)):
            self._entries[k] = e
        return self


def _build_entries(h0, mu, grid, dt, levels, jobs):
    def one(k):
        return _make_entry(h0, mu, grid.value(k), dt)

    if jobs is None or jobs <= 1 or len(levels) < 2:
        return [one(k) for k in levels]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(one, levels))


def build_toolkit(system, grid, dt, jobs=1, lazy=False):
    """Precompute ``S_l(dt)`` for ``l = 0..m`` (or defer each level when ``lazy``)."""
    tk = Toolkit(system, grid, dt, lazy=lazy)
    if not lazy:
        tk.materialize(jobs)
    return tk


# --- low-intensity correctors ---------------------------------------------------


@dataclass(frozen=True, eq=False)
class CorrectorPair:
    """Anti-Hermitian generators ``[H0, mu] dt^3 / 12`` and ``i mu dt^3 / 24``.

    ``omega_power(a)`` is ``exp(a * omega_gen)`` and ``theta_power(b)`` is
    ``exp(b * theta_gen)``; both go through the stored eigensystems.
    """

    dt: float
    omega_gen: np.ndarray
    theta_gen: np.ndarray
    omega_eig: HermitianEig
    theta_eig: HermitianEig

    def omega_power(self, a):
        return unitary_exp(self.omega_eig, a)

    def theta_power(self, b):
        return unitary_exp(self.theta_eig, b)


def build_correctors(system, dt):
    if not dt > 0:
        raise InvalidParameter(f"dt must be positive, got {dt}")
    omega_gen = commutator(system.h0, system.mu) * (dt**3 / 12.0)
    theta_gen = (1j / 24.0) * dt**3 * system.mu
    return CorrectorPair(
        float(dt), omega_gen, theta_gen, anti_hermitian_eig(omega_gen), anti_hermitian_eig(theta_gen)
    )


# --- quantified pair products ---------------------------------------------------


class QuantifiedPairTable:
    """Products ``P[l, q] = S_{l+1}^(1 - a_q) S_l^(a_q)`` with ``a_q = q / (n_alpha - 1)``."""

    def __init__(self, toolkit, n_alpha, lazy=False):
        if int(n_alpha) != n_alpha or n_alpha < 2:
            raise InvalidParameter(f"n_alpha must be an integer >= 2, got {n_alpha}")
        self.toolkit = toolkit
        self.n_alpha = int(n_alpha)
        self.lazy = lazy
        self._rows = {}
        self._single = {}
        self._lock = threading.Lock()
        if not lazy:
            for level in range(toolkit.m):
                self._rows[level] = self._build_row(level)

    @property
    def grid(self):
        return self.toolkit.grid

    @property
    def fingerprint(self):
        return self.toolkit.fingerprint

    @property
    def dt(self):
        return self.toolkit.dt

    def level_value(self, q):
        return q / (self.n_alpha - 1)

    @property
    def levels(self):
        return np.arange(self.n_alpha) / (self.n_alpha - 1)

    def quantize(self, alpha):
        """Nearest quantization index for ``alpha`` in [0, 1]; ties go to the lower index."""
        x = alpha * (self.n_alpha - 1)
        return min(max(math.ceil(x - 0.5), 0), self.n_alpha - 1)

    def _build_row(self, level):
        tk = self.toolkit
        a = self.levels
        lo, hi = tk.eig(level), tk.eig(level + 1)
        # stacked S_l^(a_q) and S_{l+1}^(1 - a_q)
        lo_pow = np.einsum(
            "ij,qj,kj->qik", lo.eigenvectors, np.exp(-1j * tk.dt * np.outer(a, lo.eigenvalues)),
            lo.eigenvectors.conj(),
        )
        hi_pow = np.einsum(
            "ij,qj,kj->qik", hi.eigenvectors,
            np.exp(-1j * tk.dt * np.outer(1.0 - a, hi.eigenvalues)), hi.eigenvectors.conj(),
        )
        row = hi_pow @ lo_pow
        row.setflags(write=False)
        return row

    def product(self, level, q):
        row = self._rows.get(level)
        if row is not None:
            return row[q]
        if not self.lazy:
            raise KeyError(f"level {level} missing from an eager table")
        key = (level, q)
        p = self._single.get(key)
        if p is None:
            tk = self.toolkit
            a = self.level_value(q)
            p = tk.power(level + 1, 1.0 - a) @ tk.power(level, a)
            with self._lock:
                p = self._single.setdefault(key, p)
        return p


def build_quantified_pairs(tk, n_alpha, lazy=False):
    return QuantifiedPairTable(tk, n_alpha, lazy=lazy)


# --- binary cache ---------------------------------------------------------------


def _serialize(tk):
    tk.materialize()
    g = tk.grid
    parts = [
        _HEADER.pack(MAGIC, VERSION, tk.n, g.m, tk.dt, g.eps_min, g.eps_max, tk.fingerprint)
    ]
    for level in range(g.m + 1):
        eig = tk.eig(level)
        parts.append(np.ascontiguousarray(eig.eigenvalues, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(eig.eigenvectors, dtype="<c16").tobytes())
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


def save_toolkit(tk, path):
    Path(path).write_bytes(_serialize(tk))


def load_toolkit(path, system):
    """Read a cache written by :func:`save_toolkit` and check it belongs to ``system``."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size + 32:
        raise FormatError(f"{path}: file too short for a toolkit header")
    magic, version, n, m, dt, eps_min, eps_max, fp = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    per_level = 8 * n + 16 * n * n
    expected = _HEADER.size + (m + 1) * per_level + 32
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(data)}")
    body, digest = data[:-32], data[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise FormatError(f"{path}: checksum mismatch")
    if fp != system.fingerprint:
        raise FingerprintMismatch(f"{path}: toolkit was built for a different (H0, mu)")
    entries = {}
    off = _HEADER.size
    for level in range(m + 1):
        w = np.frombuffer(data, dtype="<f8", count=n, offset=off).astype(np.float64)
        off += 8 * n
        v = np.frombuffer(data, dtype="<c16", count=n * n, offset=off).astype(np.complex128)
        off += 16 * n * n
        v = np.ascontiguousarray(v.reshape(n, n))
        w.setflags(write=False)
        v.setflags(write=False)
        eig = HermitianEig(w, v)
        s = unitary_exp(eig, dt)
        s.setflags(write=False)
        entries[level] = ToolkitEntry(eig, s)
    return Toolkit(system, AmplitudeGrid(eps_min, eps_max, m), dt, entries=entries)
