"""Perturbative non-Markovian master equation on a truncated k-grid.

Toy-scale validator for the reduced-density-matrix picture:

    drho/dt = -(i/hbar)[H, rho]
              + i sqrt(gamma) int dk <A(k)> (A(k) rho - rho A(k))
              - gamma int_0^t dt' int dk dk' Dt(k,k',t,t')
                    (A(k) A(k',t'-t) rho + rho A(k',t'-t) A(k)),

with A(k) = (m/k) exp(ik.r) reduced, for a spherically symmetric system, to
the radial coupling a_i(k) = (m/k) j0(k r_i), diagonal on the position grid;
sqrt(gamma) = G/(2 pi^2 hbar); and Dt(k,k') = 16 pi^2 k^2 k'^2 D(k,k') where
D is the noise correlator in the k representation.  Interaction-picture
operators A(k, tau) are computed by matrix conjugation through the
eigendecomposition of H0, and the memory integral by the trapezoid rule.

Structure notes, measured rather than assumed:

  * Because rho(t) enters the memory term time-locally, the integral only
    needs the (analytic) operator history, never a state history.
  * The equation is not of Lindblad form: it lacks the sandwich terms
    A rho A that a dissipator would pair with the anticommutator.  With a
    Markovian (white) kernel the normalized coherences are then exactly
    preserved while the trace decays at order gamma; both effects are
    reported, not corrected.
  * The scalar-moduli reduction averages the coupling and the kernel over
    orientations independently, so the effective position-space noise
    covariance (see effective_position_kernel) is the double shell average
    of the potential correlator: it is exponentially small for probes a few
    widths outside the packet, and only monopole fluctuations survive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .gaussian import GaussianPacket
from .params import ParamsError, SimParams

__all__ = [
    "KGrid",
    "DKernel",
    "MasterResult",
    "MasterEqError",
    "build_kgrid",
    "build_dkernel",
    "evolve_master",
    "physical_gamma",
    "effective_position_kernel",
]

MAX_GRID = 64
MAX_HISTORY_ELEMENTS = 8_000_000     # n_steps * N^2 guard for operator history


class MasterEqError(RuntimeError):
    pass


def _j0(x):
    return np.sinc(np.asarray(x) / np.pi)


@dataclass(frozen=True)
class KGrid:
    """Radial wavenumber quadrature plus position-grid couplings.

    k: nodes (M,), strictly positive; wk: weights for int dk -> sum;
    r: uniform radial position grid (N,); a: couplings (M, N) with
    a[n, i] = (m / k_n) j0(k_n r_i); params: simulation parameters.
    """

    k: np.ndarray
    wk: np.ndarray
    r: np.ndarray
    a: np.ndarray
    params: SimParams

    def __post_init__(self):
        if self.k.size < 4:
            raise ParamsError("k-grid needs at least 4 nodes")
        if np.any(self.k <= 0):
            raise ParamsError("k nodes must be positive (coupling has a 1/k)")
        if self.r.size > MAX_GRID:
            raise ParamsError(f"toy validator limited to {MAX_GRID} grid points")
        dr = np.diff(self.r)
        if self.r.size > 1 and not np.allclose(dr, dr[0], rtol=1e-9):
            raise ParamsError("position grid must be uniform")

    @property
    def h(self) -> float:
        return float(self.r[1] - self.r[0]) if self.r.size > 1 else 1.0

    def hamiltonian(self) -> np.ndarray:
        """Free kinetic Hamiltonian: second-difference Laplacian on the
        reduced radial wavefunction, Dirichlet ends."""
        p = self.params
        n = self.r.size
        c = p.hbar**2 / (2.0 * p.m * self.h**2)
        H = np.zeros((n, n))
        np.fill_diagonal(H, 2.0 * c)
        idx = np.arange(n - 1)
        H[idx, idx + 1] = -c
        H[idx + 1, idx] = -c
        return H


def build_kgrid(p: SimParams, r: np.ndarray, M: int = 48,
                kmin: float = 0.0, kmax: float | None = None) -> KGrid:
    """Gauss-Legendre k nodes on [kmin, pi/h] (kmin = 0 by default).

    An open rule starting at zero is safe: every observable couples a(k)
    through the noise kernel, whose k^2 k'^2 factors cancel the 1/k of the
    coupling, so integrands stay finite (and vanish) at k -> 0.  Truncating
    the infrared instead -- say at pi/box -- poisons the small connected
    part of the position kernel, which survives only as the difference of
    two near-equal separable integrals.  The Gaussian form factor decays as
    exp(-k^2 w^2/4), so pi/h covers the support whenever the position grid
    resolves the packet."""
    r = np.asarray(r, dtype=float)
    h = r[1] - r[0] if r.size > 1 else 1.0
    if kmax is None:
        kmax = math.pi / h
    if not (0 <= kmin < kmax):
        raise ParamsError("need 0 <= kmin < kmax")
    x, w = np.polynomial.legendre.leggauss(M)
    k = 0.5 * (kmax - kmin) * (x + 1.0) + kmin
    wk = 0.5 * (kmax - kmin) * w
    a = (p.m / k)[:, None] * _j0(np.outer(k, r))
    return KGrid(k=k, wk=wk, r=r, a=a, params=p)


@dataclass(frozen=True)
class DKernel:
    """Noise correlator tabulated on the k-grid.

    Ds[n, m] = D(k_n, k_m) spatial part (symmetric, real);
    Dt = 16 pi^2 k^2 k'^2 Ds enters the memory term.  mode fixes the
    temporal factor: white is handled as the Markovian limit, expmem
    multiplies by exp(-|t - t'|/tau_c).  width records the packet width
    the spatial part was built at (the tabulation is frozen).
    """

    k: np.ndarray
    Ds: np.ndarray
    Dt: np.ndarray
    mode: str
    tau_c: float | None
    width: float

    def temporal(self, s: np.ndarray) -> np.ndarray:
        if self.mode == "white":
            raise MasterEqError("white kernel has no sampled temporal factor")
        return np.exp(-np.abs(s) / self.tau_c)


def build_dkernel(packet: GaussianPacket, kgrid: KGrid, mode: str = "white",
                  tau_c: float | None = None, t: float = 0.0) -> DKernel:
    """Spatial noise correlator on the k-grid from the packet density.

    With the density's radial transform rt(q) = exp(-q^2 w^2 / 4) and the
    doubly orientation-averaged transform
        g2(k, k') = <rt(|k + k'|)> = int rho(x) j0(kx) j0(k'x) d3x
                  = [exp(-(k-k')^2 w^2/4) - exp(-(k+k')^2 w^2/4)] / (k k' w^2),
    the correlator of the k-space noise is
        D(k, k') = (16 pi^2 / (4 k k')) m^2 [g2(k, k') - rt(k) rt(k')].
    Real and symmetric by construction.
    """
    if mode not in ("white", "expmem"):
        raise ParamsError(f"unknown kernel mode {mode!r}")
    if mode == "expmem" and (tau_c is None or tau_c <= 0):
        raise ParamsError("expmem kernel needs tau_c > 0")
    w = float(packet.width(t))
    k = kgrid.k
    m = kgrid.params.m
    K, Kp = np.meshgrid(k, k, indexing="ij")
    x = K * Kp * w * w / 2.0
    # complementary stable forms: the sinh ratio cancels badly as x -> 0 and
    # overflows past x ~ 710; the Gaussian difference is exact and bounded
    # for large x but cancels as x -> 0
    with np.errstate(over="ignore", invalid="ignore"):
        pref = np.exp(-(K * K + Kp * Kp) * w * w / 4.0)
        sinhc = np.where(x < 1e-6, 1.0 + x * x / 6.0,
                         np.sinh(np.minimum(x, 350.0)) / np.where(x == 0, 1.0, x))
        small = pref * sinhc
        big = (np.exp(-(K - Kp) ** 2 * w * w / 4.0)
               - np.exp(-(K + Kp) ** 2 * w * w / 4.0)) / np.where(x == 0, 1.0, 2.0 * x)
    g2 = np.where(x < 0.5, small, big)
    rt = np.exp(-k * k * w * w / 4.0)
    Ds = (16.0 * math.pi**2 / (4.0 * K * Kp)) * m**2 * (g2 - np.outer(rt, rt))
    Ds = 0.5 * (Ds + Ds.T)
    if not np.all(np.isfinite(Ds)):
        raise MasterEqError("noise kernel quadrature produced non-finite values")
    Dt = 16.0 * math.pi**2 * (K * Kp) ** 2 * Ds
    return DKernel(k=k, Ds=Ds, Dt=Dt, mode=mode, tau_c=tau_c, width=w)


def physical_gamma(p: SimParams) -> float:
    """Coupling (G / (2 pi^2 hbar))^2 of the k-space noise representation."""
    return (p.G / (2.0 * math.pi**2 * p.hbar)) ** 2


def effective_position_kernel(kgrid: KGrid, dkernel: DKernel,
                              gamma: float) -> np.ndarray:
    """Position-space white-noise covariance implied by the memory term:
    C[i, j] = gamma hbar^2 sum_{k,k'} wk wk' Dt(k,k') a_i(k) a_j(k').
    This is the kernel an equivalent trajectory ensemble must use."""
    WA = kgrid.wk[:, None] * kgrid.a          # (M, N)
    K = WA.T @ dkernel.Dt @ WA
    return gamma * kgrid.params.hbar**2 * 0.5 * (K + K.T)


@dataclass
class MasterResult:
    t: np.ndarray
    rho: np.ndarray          # (n_out, N, N) complex snapshots
    trace: np.ndarray        # Re tr(rho) at every step
    t_steps: np.ndarray      # times of the trace series
    min_eig: np.ndarray      # smallest eigenvalue at snapshot times
    herm_asym: float         # max raw-update asymmetry before symmetrization
    r: np.ndarray
    gamma: float
    order: str
    flags: dict = field(default_factory=dict)


def _mean_coupling(kgrid: KGrid, psi0_t: np.ndarray) -> np.ndarray:
    """<A(k)> against the freely evolved zeroth-order state, one per k node."""
    prob = np.abs(psi0_t) ** 2
    return kgrid.a @ prob


def evolve_master(rho0: np.ndarray, kgrid: KGrid, dkernel: DKernel,
                  gamma: float, t_final: float, dt: float,
                  order: str = "gamma", psi0: np.ndarray | None = None,
                  out_every: int = 1, trace_tol: float = 0.5) -> MasterResult:
    """Integrate the k-space master equation with RK4.

    order selects the retained terms: "sqrt_gamma" keeps the unitary and
    mean-coupling terms only (trace-conserving by structure), "gamma" adds
    the memory integral as printed (trace then drifts at order gamma; the
    drift is reported and aborts only beyond trace_tol).

    psi0 is the zeroth-order pure state the mean coupling is evaluated
    against; default: the normalized leading eigenvector of rho0.
    """
    if order not in ("sqrt_gamma", "gamma"):
        raise ParamsError(f"unknown order {order!r}")
    rho = np.array(rho0, dtype=complex)
    n = rho.shape[0]
    if rho.shape != (n, n) or n != kgrid.r.size:
        raise ParamsError("rho0 must be square and match the position grid")
    if np.linalg.norm(rho - rho.conj().T) > 1e-12 * max(np.linalg.norm(rho), 1e-30):
        raise ParamsError("rho0 must be Hermitian")
    if abs(np.trace(rho).real - 1.0) > 1e-9:
        raise ParamsError("rho0 must have unit trace")
    n_steps = int(round(t_final / dt))
    if n_steps < 1:
        raise ParamsError("t_final shorter than one step")

    p = kgrid.params
    hbar = p.hbar
    H0 = kgrid.hamiltonian()
    evals, U = np.linalg.eigh(H0)

    if psi0 is None:
        w_eig, v_eig = np.linalg.eigh(rho)
        psi0 = v_eig[:, -1]
    psi0 = np.asarray(psi0, dtype=complex)
    psi0 = psi0 / np.linalg.norm(psi0)
    c0 = U.conj().T @ psi0                     # eigenbasis coefficients

    sqrt_g = math.sqrt(gamma)
    mean_w = 4.0 * math.pi * kgrid.k**2 * kgrid.wk   # d^3k -> 4 pi k^2 dk

    # --- memory-term operator history -------------------------------------
    use_memory = order == "gamma" and gamma > 0.0
    markovian = use_memory and dkernel.mode == "white"
    B_series = None
    B_white = None
    if markovian:
        # delta(t - t') endpoint: half weight; A(k', 0) = A(k'): everything
        # stays diagonal and constant
        WA = kgrid.wk[:, None] * kgrid.a
        Kdiag = np.einsum("mi,mn,ni->i", WA, dkernel.Dt, WA)
        B_white = np.diag(0.5 * Kdiag).astype(complex)
    elif use_memory:
        if (n_steps + 1) * n * n > MAX_HISTORY_ELEMENTS:
            raise MasterEqError(
                "operator history buffer would exceed the toy-scale budget; "
                "reduce n_steps or the grid"
            )
        # R_m = sum_{k,k'} wk wk' Dt A(k) A(k', -s_m), s_m = m dt, assembled
        # in the H0 eigenbasis where A(k', -s) = A(k') o phase(s)
        A_eig = np.einsum("ai,ni,ib->nab", U.conj().T, kgrid.a, U,
                          optimize=True)       # (M, N, N): U^† diag(a_n) U
        G = np.einsum("m,nm,mab->nab", kgrid.wk, dkernel.Dt, A_eig,
                      optimize=True)           # inner k' sum, per k node
        lam = evals / hbar
        dphase = np.subtract.outer(lam, lam)   # (N, N): (lam_a - lam_b)
        s_grid = dt * np.arange(n_steps + 1)
        f_temporal = dkernel.temporal(s_grid)
        B_series = np.empty((n_steps + 1, n, n), dtype=complex)
        # prefix trapezoid over s with the exponential factor
        running = np.zeros((n, n), dtype=complex)
        terms = np.empty_like(B_series)
        for mstep, s in enumerate(s_grid):
            phase = np.exp(-1j * s * dphase)
            Gs = G * phase[None, :, :]         # G_k o phase(-s), eigenbasis
            # back to position basis: R = sum_k wk diag(a_k) (U Gs_k U^†)
            Rm = np.einsum("n,ni,nij->ij", kgrid.wk, kgrid.a,
                           U[None] @ Gs @ U.conj().T[None], optimize=True)
            terms[mstep] = f_temporal[mstep] * Rm
        csum = np.cumsum(terms, axis=0)
        for mstep in range(n_steps + 1):
            B = csum[mstep] - 0.5 * (terms[0] + terms[mstep])
            B_series[mstep] = dt * B

    def mean_amps(t: float) -> np.ndarray:
        psi_t = U @ (np.exp(-1j * evals * t / hbar) * c0)
        return _mean_coupling(kgrid, psi_t)

    def rhs(t: float, rho_c: np.ndarray, B_t: np.ndarray | None) -> np.ndarray:
        out = (-1j / hbar) * (H0 @ rho_c - rho_c @ H0)
        if gamma > 0.0:
            amps = mean_amps(t)                  # <A(k)>, real
            gvec = sqrt_g * (mean_w * amps) @ kgrid.a   # sum_k w_k <A_k> a_k
            # i sum_k <A> (A rho - rho A) with diagonal A: row/col scaling
            out += 1j * (gvec[:, None] * rho_c - rho_c * gvec[None, :])
        if B_t is not None:
            out -= gamma * (B_t @ rho_c + rho_c @ B_t.conj().T)
        return out

    n_out = max(n_steps // out_every, 1)
    snaps = []
    snap_t = []
    traces = np.empty(n_steps + 1)
    traces[0] = np.trace(rho).real
    herm_asym = 0.0
    t = 0.0
    for step in range(n_steps):
        if markovian:
            B_n = B_half = B_np1 = B_white
        elif use_memory:
            B_n = B_series[step]
            B_np1 = B_series[step + 1]
            B_half = 0.5 * (B_n + B_np1)
        else:
            B_n = B_half = B_np1 = None
        k1 = rhs(t, rho, B_n)
        k2 = rhs(t + 0.5 * dt, rho + 0.5 * dt * k1, B_half)
        k3 = rhs(t + 0.5 * dt, rho + 0.5 * dt * k2, B_half)
        k4 = rhs(t + dt, rho + dt * k3, B_np1)
        rho = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        asym = np.linalg.norm(rho - rho.conj().T) / max(np.linalg.norm(rho), 1e-300)
        herm_asym = max(herm_asym, float(asym))
        rho = 0.5 * (rho + rho.conj().T)
        t += dt
        traces[step + 1] = np.trace(rho).real
        if abs(traces[step + 1] - 1.0) > trace_tol:
            raise MasterEqError(
                f"trace drifted to {traces[step + 1]:.6f} at t={t:.4g} "
                f"(tolerance {trace_tol})"
            )
        if (step + 1) % out_every == 0:
            snaps.append(rho.copy())
            snap_t.append(t)

    rho_snaps = np.array(snaps)
    min_eig = np.array([np.linalg.eigvalsh(s)[0].real for s in rho_snaps])
    return MasterResult(
        t=np.array(snap_t), rho=rho_snaps, trace=traces,
        t_steps=dt * np.arange(n_steps + 1), min_eig=min_eig,
        herm_asym=herm_asym, r=kgrid.r, gamma=gamma, order=order,
        flags={"mode": dkernel.mode, "markovian_limit": markovian,
               "n_out": n_out},
    )
