"""Compiled inner loops: cyclic Jacobi for Hermitian matrices and the Taylor
midpoint-exponential chain used by the reference propagator."""

import math

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _off_norm(a):
    n = a.shape[0]
    s = 0.0
    for p in range(n - 1):
        for q in range(p + 1, n):
            z = a[p, q]
            s += z.real * z.real + z.imag * z.imag
    return math.sqrt(2.0 * s)


@njit(cache=True, nogil=True)
def jacobi_eigh(a_in, rel_tol, max_sweeps):
    """Cyclic Jacobi on a Hermitian matrix.

    Returns ``(eigenvalues, eigenvectors, sweeps)``; ``sweeps == -1`` signals that
    ``max_sweeps`` was exhausted. Eigenvalues come back unsorted.
    """
    n = a_in.shape[0]
    a = a_in.copy()
    v = np.eye(n, dtype=np.complex128)
    fro = 0.0
    for i in range(n):
        for j in range(n):
            z = a[i, j]
            fro += z.real * z.real + z.imag * z.imag
    thresh = rel_tol * math.sqrt(fro)

    for sweep in range(max_sweeps + 1):
        if _off_norm(a) <= thresh:
            w = np.empty(n)
            for i in range(n):
                w[i] = a[i, i].real
            return w, v, sweep
        if sweep == max_sweeps:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                c = a[p, q]
                ac = abs(c)
                if ac == 0.0:
                    continue
                ph = c / ac
                app = a[p, p].real
                aqq = a[q, q].real
                theta = (aqq - app) / (2.0 * ac)
                if theta >= 0.0:
                    t = 1.0 / (theta + math.sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + math.sqrt(theta * theta + 1.0))
                cs = 1.0 / math.sqrt(t * t + 1.0)
                sn = t * cs
                # U = diag(1, conj(ph)) applied to the real rotation [[cs, sn], [-sn, cs]]
                upp = complex(cs, 0.0)
                upq = complex(sn, 0.0)
                uqp = -ph.conjugate() * sn
                uqq = ph.conjugate() * cs
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = akp * upp + akq * uqp
                    a[k, q] = akp * upq + akq * uqq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = upp.conjugate() * apk + uqp.conjugate() * aqk
                    a[q, k] = upq.conjugate() * apk + uqq.conjugate() * aqk
                a[p, q] = 0.0
                a[q, p] = 0.0
                a[p, p] = a[p, p].real
                a[q, q] = a[q, q].real
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = vkp * upp + vkq * uqp
                    v[k, q] = vkp * upq + vkq * uqq
    w = np.empty(n)
    for i in range(n):
        w[i] = a[i, i].real
    return w, v, -1


@njit(cache=True, nogil=True)
def midpoint_exponential_chain(h0, mu, eps_mid, dt, psi0):
    """Apply exp(-i dt (h0 - mu * e_k)) for every e_k in ``eps_mid``, in order.

    Each exponential is a Taylor series summed to double-precision convergence,
    with uniform sub-stepping so that every series argument has 1-norm <= 1/2.
    The increment of each step is added to the state with compensated
    summation, so rounding does not grow with the number of steps.
    """
    n = h0.shape[0]
    h0_norm = 0.0
    mu_norm = 0.0
    for j in range(n):
        c0 = 0.0
        c1 = 0.0
        for i in range(n):
            c0 += abs(h0[i, j])
            c1 += abs(mu[i, j])
        h0_norm = max(h0_norm, c0)
        mu_norm = max(mu_norm, c1)
    psi = psi0.copy()
    comp = np.zeros(n, dtype=np.complex128)
    h = np.empty((n, n), dtype=np.complex128)
    term = np.empty(n, dtype=np.complex128)
    nxt = np.empty(n, dtype=np.complex128)
    delta = np.empty(n, dtype=np.complex128)
    for k in range(eps_mid.shape[0]):
        e = eps_mid[k]
        for j in range(n):
            for i in range(n):
                h[i, j] = h0[i, j] - mu[i, j] * e
        nsub = max(1, int(math.ceil((h0_norm + abs(e) * mu_norm) * dt / 0.5)))
        tau = dt / nsub
        for _ in range(nsub):
            for i in range(n):
                term[i] = psi[i]
                delta[i] = 0.0
            for order in range(1, 60):
                coef = complex(0.0, -tau / order)
                tmax = 0.0
                for i in range(n):
                    acc = 0.0j
                    for j in range(n):
                        acc += h[i, j] * term[j]
                    nxt[i] = coef * acc
                for i in range(n):
                    t = nxt[i]
                    term[i] = t
                    delta[i] += t
                    at = abs(t.real) + abs(t.imag)
                    if at > tmax:
                        tmax = at
                if tmax <= 1e-18:
                    break
            for i in range(n):
                y = delta[i] - comp[i]
                s = psi[i] + y
                comp[i] = (s - psi[i]) - y
                psi[i] = s
    return psi
