"""Quantum systems ``i dpsi/dt = (H0 - mu * eps(t)) psi`` in a finite basis."""

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyEnsemble, FormatError, InvalidParameter, NonHermitianInput
from .linalg import HERMITIAN_TOL, as_matrix, as_state, skew


def fingerprint(h0, mu):
    """SHA-256 of the little-endian complex128 row-major bytes of ``h0`` then ``mu``."""
    digest = hashlib.sha256()
    for m in (h0, mu):
        digest.update(np.ascontiguousarray(m, dtype="<c16").tobytes())
    return digest.digest()


@dataclass(frozen=True, eq=False)
class QuantumSystem:
    h0: np.ndarray
    mu: np.ndarray
    psi0: np.ndarray
    fingerprint: bytes = field(init=False, repr=False)

    def __post_init__(self):
        h0 = as_matrix(self.h0)
        mu = as_matrix(self.mu)
        psi0 = as_state(self.psi0)
        if h0.shape != mu.shape or psi0.shape[0] != h0.shape[0]:
            raise InvalidParameter(
                f"inconsistent dimensions: h0 {h0.shape}, mu {mu.shape}, psi0 {psi0.shape}"
            )
        for name, m in (("h0", h0), ("mu", mu)):
            if skew(m) > HERMITIAN_TOL:
                raise NonHermitianInput(f"{name} is not Hermitian (skew {skew(m):.2e})")
        if abs(np.linalg.norm(psi0) - 1.0) > 1e-12:
            raise InvalidParameter(f"psi0 has norm {np.linalg.norm(psi0)!r}, expected 1")
        for m in (h0, mu, psi0):
            m.setflags(write=False)
        object.__setattr__(self, "h0", h0)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "psi0", psi0)
        object.__setattr__(self, "fingerprint", fingerprint(h0, mu))

    @property
    def n(self):
        return self.h0.shape[0]

    def hamiltonian(self, eps):
        return self.h0 - self.mu * eps

    def with_initial_state(self, psi0):
        return QuantumSystem(self.h0, self.mu, psi0)


@dataclass(frozen=True)
class EnsembleMember:
    system: QuantumSystem
    orientation: float

    @property
    def field_factor(self):
        return math.cos(self.orientation)


@dataclass(frozen=True)
class EnsembleSystem:
    members: tuple

    def __post_init__(self):
        if not self.members:
            raise EmptyEnsemble("an ensemble needs at least one member")


def basis_state(n, k=0):
    psi = np.zeros(n, dtype=np.complex128)
    psi[k] = 1.0
    return psi


def build_two_level(gap=1.0, coupling=1.0):
    """Two-level system with ``h0 = diag(0, gap)`` and ``mu = coupling * sigma_x``."""
    if not gap > 0:
        raise InvalidParameter(f"gap must be positive, got {gap}")
    h0 = np.diag([0.0, gap]).astype(np.complex128)
    mu = coupling * np.array([[0.0, 1.0], [1.0, 0.0]], dtype=np.complex128)
    return QuantumSystem(h0, mu, basis_state(2))


def build_linear_rotor(j_max=10, B=1.0, mu0=1.0):
    """Rigid linear rotor truncated at ``j_max`` with M = 0 dipole couplings.

    Energies are ``B j (j+1)``; the dipole matrix is the tridiagonal
    ``mu0 <j|cos(theta)|j+1> = mu0 (j+1) / sqrt((2j+1)(2j+3))``.
    """
    if int(j_max) != j_max or j_max < 1:
        raise InvalidParameter(f"j_max must be an integer >= 1, got {j_max}")
    if not B > 0:
        raise InvalidParameter(f"rotational constant must be positive, got {B}")
    j_max = int(j_max)
    j = np.arange(j_max + 1, dtype=float)
    h0 = np.diag(B * j * (j + 1)).astype(np.complex128)
    mu = np.zeros((j_max + 1, j_max + 1), dtype=np.complex128)
    for k in range(j_max):
        mu[k, k + 1] = mu[k + 1, k] = mu0 * (k + 1) / math.sqrt((2 * k + 1) * (2 * k + 3))
    return QuantumSystem(h0, mu, basis_state(j_max + 1))


def build_ensemble(base, orientations):
    """Copies of ``base`` seeing the field scaled by ``cos(xi_k)``."""
    orientations = [float(x) for x in orientations]
    if not orientations:
        raise EmptyEnsemble("no orientations given")
    return EnsembleSystem(tuple(EnsembleMember(base, xi) for xi in orientations))


# --- plain-text system files ---------------------------------------------------
#
#   n
#   <n rows of n complex entries>      H0
#   <blank>
#   <n rows of n complex entries>      mu
#   <blank>
#   <n complex entries>                psi0 (one line or one per line)
#
# Entries are Python complex literals without spaces, e.g. ``1.5``, ``0+2j``,
# ``-0.25-1e-3i`` (a trailing ``i`` is accepted as the imaginary unit).


def _parse_complex(tok):
    t = tok.strip()
    if t.endswith("i"):
        t = t[:-1] + "j"
    try:
        return complex(t)
    except ValueError:
        raise FormatError(f"bad complex entry {tok!r}") from None


def _format_complex(z):
    return f"{float(z.real)!r}{float(z.imag):+.17g}i"


def _blocks(text):
    blocks, cur = [], []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            cur.append(line)
        elif cur:
            blocks.append(cur)
            cur = []
    if cur:
        blocks.append(cur)
    return blocks


def parse_system(text):
    blocks = _blocks(text)
    if len(blocks) < 3:
        raise FormatError("expected n + H0 block, mu block and psi0 block")
    head = blocks[0]
    try:
        n = int(head[0])
    except ValueError:
        raise FormatError(f"first line must be the dimension, got {head[0]!r}") from None
    h0_rows = head[1:]
    mu_rows = blocks[1]
    psi_tokens = [tok for line in blocks[2] for tok in line.split()]

    def matrix(rows, name):
        if len(rows) != n:
            raise FormatError(f"{name}: expected {n} rows, got {len(rows)}")
        out = np.empty((n, n), dtype=np.complex128)
        for i, row in enumerate(rows):
            toks = row.split()
            if len(toks) != n:
                raise FormatError(f"{name} row {i}: expected {n} entries, got {len(toks)}")
            out[i] = [_parse_complex(t) for t in toks]
        return out

    if len(psi_tokens) != n:
        raise FormatError(f"psi0: expected {n} entries, got {len(psi_tokens)}")
    psi0 = np.array([_parse_complex(t) for t in psi_tokens], dtype=np.complex128)
    return QuantumSystem(matrix(h0_rows, "H0"), matrix(mu_rows, "mu"), psi0)


def load_system(path):
    return parse_system(Path(path).read_text())


def format_system(system):
    lines = [str(system.n)]
    for m in (system.h0, system.mu):
        lines += [" ".join(_format_complex(z) for z in row) for row in m]
        lines.append("")
    lines.append(" ".join(_format_complex(z) for z in system.psi0))
    return "\n".join(lines) + "\n"


def save_system(system, path):
    Path(path).write_text(format_system(system))
