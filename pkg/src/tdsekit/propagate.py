"""Time steppers for ``i dpsi/dt = (H0 - mu eps(t)) psi`` on a uniform grid.

All steppers sample the field at step midpoints and only ever multiply the
state by unitary matrices, so norms are preserved to rounding. Each run
returns a :class:`Trajectory` with operation counters:

* ``matvec``: matrix-vector products in the recurrence (the cost measure used
  by the benchmark tables),
* ``matmat``: matrix-matrix products formed while running,
* ``online_exp``: exponentials evaluated during the run (for the spectral
  routes this is a diagonal of phases).
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
import math

import numpy as np

from . import _kernels
from .errors import (
    FieldOutOfToolkitRange,
    FingerprintMismatch,
    NoConvergence,
    StepMismatch,
)
from .field import TimeGrid, midpoint_samples, stencils
from .linalg import herm_eig, unitary_exp

log = logging.getLogger(__name__)


class MethodId(str, Enum):
    TK = "TK"
    ITK_LOW = "ITK_LOW"
    ITK_HIGH = "ITK_HIGH"
    ITK_HIGH_Q = "ITK_HIGH_Q"
    STRANG = "STRANG"
    REFERENCE = "REFERENCE"


@dataclass
class Counters:
    matvec: int = 0
    matmat: int = 0
    online_exp: int = 0


@dataclass(frozen=True, eq=False)
class Trajectory:
    method: MethodId
    grid: TimeGrid
    states: np.ndarray
    counters: Counters = field(default_factory=Counters)

    @property
    def final(self):
        return self.states[-1]

    def norm_deviation(self):
        """``max_j | ||psi_j|| - 1 |``."""
        return float(np.max(np.abs(np.linalg.norm(self.states, axis=1) - 1.0)))


@dataclass(frozen=True)
class CorrectorExponents:
    """Multipliers turning the raw stencils into corrector exponents.

    The step applies ``Omega^(alpha_factor * a_j) Theta^(beta_factor * b_j)``
    where ``a_j``/``b_j`` are :func:`tdsekit.field.stencil_alpha` and
    :func:`tdsekit.field.stencil_beta`. With factors (1, 1) the method is only
    second order: the first-derivative correction needs the opposite sign and
    ``b_j`` tends to a quarter of the second derivative. (-1, 4) restores
    third order; ``tests/test_propagate.py`` checks both.
    """

    alpha_factor: float = -1.0
    beta_factor: float = 4.0


LITERAL_EXPONENTS = CorrectorExponents(1.0, 1.0)
CALIBRATED_EXPONENTS = CorrectorExponents()


# --- shared plumbing ------------------------------------------------------------


def _check_toolkit(system, tk, grid):
    if tk.fingerprint != system.fingerprint:
        raise FingerprintMismatch("toolkit was built for a different (H0, mu)")
    if not math.isclose(tk.dt, grid.dt, rel_tol=1e-12, abs_tol=0.0):
        raise StepMismatch(f"toolkit dt {tk.dt!r} != grid dt {grid.dt!r}")


def _check_bracketable(eps, grid_):
    lo, hi = eps.min(), eps.max()
    if lo < grid_.eps_min or hi > grid_.eps_max:
        raise FieldOutOfToolkitRange(
            f"field samples span [{lo}, {hi}], toolkit covers [{grid_.eps_min}, {grid_.eps_max}]"
        )


def _new_states(system, grid):
    states = np.empty((grid.N + 1, system.n), dtype=np.complex128)
    states[0] = system.psi0
    return states


def _exact_step(system, eps, dt, counters):
    """``exp(-i dt (H0 - mu eps))`` built online."""
    s = unitary_exp(herm_eig(system.hamiltonian(eps)), dt)
    counters.online_exp += 1
    counters.matmat += 1
    return s


# --- steppers -------------------------------------------------------------------


def run_tk(system, field_, toolkit, grid):
    """Nearest-level toolkit stepping: ``psi_{j+1} = S_{l_j} psi_j``.

    ``toolkit=None`` emulates an infinitely fine amplitude grid: every step
    uses the exact propagator at the midpoint field value.
    """
    eps = midpoint_samples(field_, grid)
    counters = Counters()
    states = _new_states(system, grid)
    if toolkit is not None:
        _check_toolkit(system, toolkit, grid)
        levels = [toolkit.grid.nearest(e) for e in eps]
    psi = states[0]
    for j in range(grid.N):
        if toolkit is None:
            s = _exact_step(system, eps[j], grid.dt, counters)
        else:
            s = toolkit.propagator(levels[j])
        psi = s @ psi
        counters.matvec += 1
        states[j + 1] = psi
    return Trajectory(MethodId.TK, grid, states, counters)


def run_itk_low(system, field_, toolkit, correctors, grid, exponents=CALIBRATED_EXPONENTS):
    """Toolkit stepping with the commutator/dipole correctors applied first.

    Per step: ``psi_{j+1} = S_{l_j} Omega^a_j Theta^b_j psi_j``. The state is
    carried in the eigenbasis of ``Theta`` so a step is two matrix-vector
    products: ``A_l = V_T^H S_l V_O`` (cached per level) and ``V_O^H V_T``.
    """
    eps = midpoint_samples(field_, grid)
    a_raw, b_raw = stencils(field_, grid)
    a = exponents.alpha_factor * a_raw
    b = exponents.beta_factor * b_raw
    if not math.isclose(correctors.dt, grid.dt, rel_tol=1e-12, abs_tol=0.0):
        raise StepMismatch(f"corrector dt {correctors.dt!r} != grid dt {grid.dt!r}")
    counters = Counters()
    if toolkit is not None:
        _check_toolkit(system, toolkit, grid)
        levels = [toolkit.grid.nearest(e) for e in eps]

    vo = correctors.omega_eig.eigenvectors
    vt = correctors.theta_eig.eigenvectors
    wo = correctors.omega_eig.eigenvalues
    wt = correctors.theta_eig.eigenvalues
    o_to_t = vo.conj().T @ vt
    counters.matmat += 1
    cached = {}

    def step_matrix(j):
        if toolkit is None:
            s = _exact_step(system, eps[j], grid.dt, counters)
        else:
            key = levels[j]
            if key in cached:
                return cached[key]
            s = toolkit.propagator(key)
        mat = vt.conj().T @ s @ vo
        counters.matmat += 2
        if toolkit is not None:
            cached[levels[j]] = mat
        return mat

    w_states = np.empty((grid.N + 1, system.n), dtype=np.complex128)
    w = vt.conj().T @ system.psi0
    counters.matvec += 1
    w_states[0] = w
    for j in range(grid.N):
        w = np.exp(-1j * b[j] * wt) * w
        u = o_to_t @ w
        u = np.exp(-1j * a[j] * wo) * u
        w = step_matrix(j) @ u
        counters.matvec += 2
        counters.online_exp += 2
        w_states[j + 1] = w
    states = w_states @ vt.T
    counters.matmat += 1
    states[0] = system.psi0
    return Trajectory(MethodId.ITK_LOW, grid, states, counters)


def run_itk_high(system, field_, toolkit, grid):
    """Two-level interpolation: ``psi_{j+1} = S_{l+1}^beta S_l^alpha psi_j``.

    Each fractional power is a diagonal of phases in the stored eigenbasis and
    the bases of consecutive levels are joined by ``V_{l+1}^H V_l``, so a step
    is three matrix-vector products.
    """
    _check_toolkit(system, toolkit, grid)
    eps = midpoint_samples(field_, grid)
    _check_bracketable(eps, toolkit.grid)
    dt = grid.dt
    counters = Counters()
    states = _new_states(system, grid)
    psi = states[0]
    for j in range(grid.N):
        level, alpha, beta = toolkit.grid.bracket(eps[j])
        lo, hi = toolkit.eig(level), toolkit.eig(level + 1)
        x = lo.eigenvectors.conj().T @ psi
        x = lo.phases(alpha * dt) * x
        x = toolkit.transfer(level) @ x
        x = hi.phases(beta * dt) * x
        psi = hi.eigenvectors @ x
        counters.matvec += 3
        counters.online_exp += 2
        states[j + 1] = psi
    return Trajectory(MethodId.ITK_HIGH, grid, states, counters)


def run_itk_high_quantified(system, field_, qtable, grid):
    """Like :func:`run_itk_high` with ``alpha`` rounded to the table's levels."""
    _check_toolkit(system, qtable.toolkit, grid)
    eps = midpoint_samples(field_, grid)
    _check_bracketable(eps, qtable.grid)
    counters = Counters()
    states = _new_states(system, grid)
    psi = states[0]
    for j in range(grid.N):
        level, alpha, _ = qtable.grid.bracket(eps[j])
        psi = qtable.product(level, qtable.quantize(alpha)) @ psi
        counters.matvec += 1
        states[j + 1] = psi
    return Trajectory(MethodId.ITK_HIGH_Q, grid, states, counters)


def run_strang(system, field_, grid):
    """``psi_{j+1} = E D(eps_{j+1/2}) E psi_j`` with ``E = exp(-i H0 dt/2)``,
    ``D(e) = exp(i mu e dt)`` evaluated in the eigenbasis of ``mu``."""
    eps = midpoint_samples(field_, grid)
    dt = grid.dt
    counters = Counters()
    half = unitary_exp(herm_eig(system.h0), 0.5 * dt)
    mu_eig = herm_eig(system.mu)
    vm = mu_eig.eigenvectors
    vm_h = vm.conj().T
    half_vm = half @ vm
    counters.matmat += 2
    states = _new_states(system, grid)
    psi = states[0]
    for j in range(grid.N):
        x = half @ psi
        x = vm_h @ x
        x = mu_eig.phases(-eps[j] * dt) * x
        psi = half_vm @ x
        counters.matvec += 3
        counters.online_exp += 1
        states[j + 1] = psi
    return Trajectory(MethodId.STRANG, grid, states, counters)


def reference_chain(system, field_, T, substeps):
    """Midpoint-exponential propagation with ``substeps`` uniform substeps."""
    sub = TimeGrid(T, substeps)
    eps = np.ascontiguousarray(midpoint_samples(field_, sub))
    return _kernels.midpoint_exponential_chain(
        np.ascontiguousarray(system.h0), np.ascontiguousarray(system.mu), eps, sub.dt,
        np.ascontiguousarray(system.psi0),
    )


def run_reference(system, field_, grid, tol_ref=1e-11, max_halvings=24, return_substeps=False):
    """Converged state at ``T``.

    Starts from the grid's own step count and halves the substep until two
    consecutive results differ by less than ``tol_ref / 2``; returns the finer
    (and its substep count when ``return_substeps`` is set).
    """
    if not tol_ref > 0:
        raise ValueError(f"tol_ref must be positive, got {tol_ref}")
    substeps = grid.N
    prev = reference_chain(system, field_, grid.T, substeps)
    for _ in range(max_halvings):
        substeps *= 2
        cur = reference_chain(system, field_, grid.T, substeps)
        diff = float(np.linalg.norm(cur - prev))
        log.debug("reference: %d substeps, change %.3e", substeps, diff)
        if diff < 0.5 * tol_ref:
            return (cur, substeps) if return_substeps else cur
        prev = cur
    raise NoConvergence(
        f"reference did not reach {tol_ref:g} after {max_halvings} halvings (last change {diff:.3e})"
    )


def propagate(method, system, field_, grid, toolkit=None, correctors=None, qtable=None,
              exponents=CALIBRATED_EXPONENTS):
    """Dispatch on ``method``; ``REFERENCE`` is not a stepper and is rejected."""
    method = MethodId(method)
    if method is MethodId.TK:
        return run_tk(system, field_, toolkit, grid)
    if method is MethodId.ITK_LOW:
        from .toolkit import build_correctors

        correctors = correctors or build_correctors(system, grid.dt)
        return run_itk_low(system, field_, toolkit, correctors, grid, exponents)
    if method is MethodId.ITK_HIGH:
        return run_itk_high(system, field_, toolkit, grid)
    if method is MethodId.ITK_HIGH_Q:
        return run_itk_high_quantified(system, field_, qtable, grid)
    if method is MethodId.STRANG:
        return run_strang(system, field_, grid)
    raise ValueError("REFERENCE produces a single state; use run_reference")


def run_ensemble(ensemble, field_, toolkit, grid, method, jobs=1, **kwargs):
    """Propagate every member with its own effective field ``cos(xi_k) eps(t)``.

    One toolkit serves all members; each member's scaled field must stay in
    the toolkit's amplitude range.
    """
    method = MethodId(method)

    def one(member):
        f_k = field_.scaled(member.field_factor)
        tk = toolkit if toolkit is not None else kwargs.get("qtable", None)
        if tk is not None:
            eps = midpoint_samples(f_k, grid)
            g = tk.grid
            half = 0.5 * g.delta if method in (MethodId.TK, MethodId.ITK_LOW) else 0.0
            if eps.min() < g.eps_min - half or eps.max() > g.eps_max + half:
                raise FieldOutOfToolkitRange(
                    f"member at xi={member.orientation!r} leaves the toolkit range"
                )
        return propagate(method, member.system, f_k, grid, toolkit=toolkit, **kwargs)

    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(one, ensemble.members))
    return [one(m) for m in ensemble.members]
