"""Pure-numpy fallback stepping kernels (used when the compiled extension is
unavailable; see _backend).  Semantics must match _kernels.pyx exactly."""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_banded

__all__ = ["cn_kinetic_step", "thomas_solve"]


def thomas_solve(lower, diag, upper, rhs):
    """Tridiagonal solve; wraps LAPACK through solve_banded."""
    n = diag.shape[0]
    ab = np.zeros((3, n), dtype=complex)
    ab[0, 1:] = upper[:-1]
    ab[1, :] = diag
    ab[2, :-1] = lower[1:]
    return solve_banded((1, 1), ab, rhs)


def cn_kinetic_step(u: np.ndarray, dt: float, hbar: float, mass: float, h: float) -> np.ndarray:
    """One Crank-Nicolson step of i hbar du/dt = -(hbar^2/2m) u'' on a
    Dirichlet grid (u[0] = u[-1] = 0 preserved).  Unconditionally stable and
    exactly norm-preserving up to the tridiagonal solve round-off."""
    n = u.shape[0]
    lam = 1j * hbar * dt / (4.0 * mass * h * h)   # i dt/(2 hbar) * (hbar^2/2m h^2)
    interior = u[1:-1]
    m_ = n - 2
    # (1 + 2 lam) u_j - lam (u_{j+1} + u_{j-1}) = rhs
    diag = np.full(m_, 1.0 + 2.0 * lam, dtype=complex)
    off = np.full(m_, -lam, dtype=complex)
    rhs = (1.0 - 2.0 * lam) * interior
    rhs[1:] += lam * interior[:-1]
    rhs[:-1] += lam * interior[1:]
    out = u.copy()
    out[1:-1] = thomas_solve(off, diag, off, rhs)
    return out
