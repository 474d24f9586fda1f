# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled stepping kernels: Crank-Nicolson tridiagonal step with an inlined
Thomas solve.  Mirrors _kernels_py exactly; selected by _backend at import."""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def cn_kinetic_step(cnp.ndarray[cnp.complex128_t, ndim=1] u,
                    double dt, double hbar, double mass, double h):
    cdef Py_ssize_t n = u.shape[0]
    cdef Py_ssize_t m = n - 2
    cdef double complex lam = 1j * hbar * dt / (4.0 * mass * h * h)
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] out = u.copy()
    if m <= 0:
        return out
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] cp = np.empty(m, dtype=complex)
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] dp = np.empty(m, dtype=complex)
    cdef double complex a = -lam                     # sub/super diagonal
    cdef double complex b = 1.0 + 2.0 * lam          # main diagonal
    cdef double complex r, denom
    cdef Py_ssize_t j

    # rhs = (1 - 2 lam) u_j + lam (u_{j-1} + u_{j+1}), Dirichlet ends
    # forward sweep of the Thomas algorithm with constant coefficients
    r = (1.0 - 2.0 * lam) * u[1] + lam * (u[0] + u[2])
    cp[0] = a / b
    dp[0] = r / b
    for j in range(1, m):
        r = (1.0 - 2.0 * lam) * u[j + 1] + lam * (u[j] + u[j + 2])
        denom = b - a * cp[j - 1]
        cp[j] = a / denom
        dp[j] = (r - a * dp[j - 1]) / denom
    out[m] = dp[m - 1]
    for j in range(m - 2, -1, -1):
        out[j + 1] = dp[j] - cp[j] * out[j + 2]
    return out
