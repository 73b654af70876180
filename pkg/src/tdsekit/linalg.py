"""Dense complex linear algebra on small Hermitian / anti-Hermitian matrices.

Everything here is a pure function of its inputs. Matrices are ``complex128``
numpy arrays; eigendecompositions are carried around as :class:`HermitianEig`
so that any real power of a propagator ``exp(-i t A)`` costs one diagonal
exponential and two basis changes.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import (
    DimensionMismatch,
    NoConvergence,
    NonAntiHermitianInput,
    NonHermitianInput,
)

HERMITIAN_TOL = 1e-12
JACOBI_REL_TOL = 1e-14


def as_matrix(a):
    """Return ``a`` as a finite square complex128 array."""
    m = np.asarray(a, dtype=np.complex128)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def as_state(v):
    s = np.asarray(v, dtype=np.complex128)
    if s.ndim != 1:
        raise DimensionMismatch(f"expected a vector, got shape {s.shape}")
    return s


def skew(a):
    """Relative Frobenius distance of ``a`` from Hermiticity."""
    scale = np.linalg.norm(a)
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(a - a.conj().T) / scale)


def is_hermitian(a, tol=HERMITIAN_TOL):
    return skew(as_matrix(a)) <= tol


@dataclass(frozen=True, eq=False)
class HermitianEig:
    """Spectral factorization ``A = V diag(w) V^H`` with ascending ``w``."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def n(self):
        return self.eigenvalues.shape[0]

    def reconstruct(self):
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T

    def phases(self, theta):
        """Diagonal of ``exp(-i theta diag(w))``."""
        return np.exp(-1j * theta * self.eigenvalues)


def _fix_phases(v):
    # Make the leading largest-magnitude component of each column real positive.
    for k in range(v.shape[1]):
        col = v[:, k]
        mag = np.abs(col)
        idx = int(np.argmax(mag >= mag.max() * (1.0 - 1e-12)))
        z = col[idx]
        if z != 0:
            v[:, k] = col * (abs(z) / z)
    return v


def herm_eig(a):
    """Eigendecomposition of a Hermitian matrix by cyclic Jacobi rotations.

    Raises :class:`NonHermitianInput` if the relative skew exceeds 1e-12 and
    :class:`NoConvergence` after ``100 * n`` sweeps without convergence.
    """
    m = as_matrix(a)
    if skew(m) > HERMITIAN_TOL:
        raise NonHermitianInput(f"matrix skew {skew(m):.3e} exceeds {HERMITIAN_TOL}")
    m = 0.5 * (m + m.conj().T)
    n = m.shape[0]
    w, v, sweeps = _kernels.jacobi_eigh(m, JACOBI_REL_TOL, 100 * n)
    if sweeps < 0:
        raise NoConvergence(f"Jacobi did not converge within {100 * n} sweeps")
    order = np.argsort(w, kind="stable")
    w = w[order]
    v = _fix_phases(np.ascontiguousarray(v[:, order]))
    w.setflags(write=False)
    v.setflags(write=False)
    return HermitianEig(w, v)


def unitary_exp(eig, theta):
    """``exp(-i theta A)`` for the matrix ``A`` factorized by ``eig``."""
    v = eig.eigenvectors
    return (v * eig.phases(theta)) @ v.conj().T


def anti_hermitian_eig(g):
    """Factorize ``i G`` for an anti-Hermitian ``G`` so that ``exp(sG) = unitary_exp(eig, s)``."""
    m = as_matrix(g)
    scale = np.linalg.norm(m)
    if scale > 0.0 and np.linalg.norm(m + m.conj().T) / scale > HERMITIAN_TOL:
        raise NonAntiHermitianInput("matrix is not anti-Hermitian within 1e-12")
    return herm_eig(1j * m)


def anti_hermitian_exp(g, s):
    """``exp(s G)`` for anti-Hermitian ``G``."""
    return unitary_exp(anti_hermitian_eig(g), s)


def commutator(a, b):
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape != b.shape:
        raise DimensionMismatch(f"commutator of {a.shape} and {b.shape}")
    return a @ b - b @ a


def apply(m, v):
    m = as_matrix(m)
    v = as_state(v)
    if m.shape[1] != v.shape[0]:
        raise DimensionMismatch(f"cannot apply {m.shape} matrix to length-{v.shape[0]} vector")
    return m @ v


def l2_error(v, w):
    v = as_state(v)
    w = as_state(w)
    if v.shape != w.shape:
        raise DimensionMismatch(f"states of length {v.shape[0]} and {w.shape[0]}")
    return float(np.linalg.norm(v - w))


def unitarity_residual(u):
    """Frobenius norm of ``U^H U - I``."""
    u = as_matrix(u)
    return float(np.linalg.norm(u.conj().T @ u - np.eye(u.shape[0])))
