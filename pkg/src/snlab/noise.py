"""Gaussian random fields with a prescribed spatial covariance.

A NoiseModel owns the symmetric square root L of a covariance matrix C
tabulated on a radial grid and turns it into time-indexed field realizations
under one of three temporal structures:

  white   -- V[:, k] = L z_k / sqrt(dt): independent per step, scaled so the
             time-integrated increments have covariance C * dt (spectral
             density C).
  expmem  -- stationary AR(1) with correlation time tau_c: lag-1
             autocorrelation exp(-dt/tau_c), marginal covariance C.
  frozen  -- one draw held for the whole trajectory (the tau_c -> inf limit);
             this is the temporal structure that reproduces ballistic phase
             growth, used by the decoherence ensemble's mean channel.

Sampling is deterministic per (seed, trajectory_id) through a counter-based
Philox generator, so trajectories are reproducible independently of thread
scheduling or sampling order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
import struct

import numpy as np

__all__ = [
    "NoiseModel",
    "NoiseRealization",
    "KernelError",
    "symmetric_sqrt",
    "build_model",
    "trajectory_rng",
    "sample",
    "save_binary",
    "load_binary",
    "moment_report",
]

_CLAMP_BAND = 1e-10   # eigenvalues in [-band*lam_max, 0) are clamped to 0
_FACTOR_TOL = 1e-8    # ||L L^T - C|| <= tol * ||C||


class KernelError(ValueError):
    """Covariance matrix is unusable (asymmetric or indefinite beyond band)."""


def symmetric_sqrt(C: np.ndarray, clamp_band: float = _CLAMP_BAND):
    """Symmetric PSD square root via eigendecomposition.

    Returns (L, n_clamped).  Eigenvalues within the negative round-off band
    are clamped to zero (counted); anything more negative raises, because a
    genuinely indefinite kernel cannot be a covariance.
    """
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise KernelError(f"kernel must be square, got shape {C.shape}")
    if not np.allclose(C, C.T, rtol=0.0, atol=1e-12 * max(1.0, float(np.abs(C).max()))):
        raise KernelError("kernel must be symmetric")
    Cs = 0.5 * (C + C.T)
    lam, U = np.linalg.eigh(Cs)
    lam_max = float(lam[-1]) if lam.size else 0.0
    if lam_max < 0:
        raise KernelError("kernel has no nonnegative eigenvalues")
    floor = -clamp_band * lam_max
    if np.any(lam < floor):
        worst = float(lam.min())
        raise KernelError(
            f"kernel indefinite beyond tolerance band: min eigenvalue {worst:.3e} "
            f"< {floor:.3e}"
        )
    n_clamped = int(np.sum(lam < 0))
    lam = np.clip(lam, 0.0, None)
    L = (U * np.sqrt(lam)) @ U.T
    err = np.linalg.norm(L @ L.T - Cs) / max(np.linalg.norm(Cs), 1e-300)
    if err > _FACTOR_TOL:
        raise KernelError(f"factorization residual {err:.3e} exceeds {_FACTOR_TOL}")
    return L, n_clamped


@dataclass(frozen=True)
class NoiseModel:
    kernel: np.ndarray
    L: np.ndarray
    mode: str                   # white | expmem | frozen
    dt: float
    seed: int
    tau_c: float | None = None
    n_clamped: int = 0
    grid: np.ndarray | None = None

    @property
    def n_points(self) -> int:
        return self.L.shape[0]


@dataclass(frozen=True)
class NoiseRealization:
    values: np.ndarray          # (n_points, n_steps)
    seed: int
    trajectory_id: int
    model: NoiseModel | None = field(default=None, repr=False)


def build_model(
    kernel: np.ndarray,
    mode: str = "white",
    dt: float = 1e-2,
    seed: int = 0,
    tau_c: float | None = None,
    grid: np.ndarray | None = None,
) -> NoiseModel:
    if mode not in ("white", "expmem", "frozen"):
        raise KernelError(f"unknown temporal mode {mode!r}")
    if dt <= 0:
        raise KernelError("dt must be positive")
    if mode == "expmem":
        if tau_c is None or tau_c <= 0:
            raise KernelError("expmem mode needs a positive tau_c")
    L, n_clamped = symmetric_sqrt(np.asarray(kernel, dtype=float))
    return NoiseModel(
        kernel=np.asarray(kernel, dtype=float), L=L, mode=mode, dt=float(dt),
        seed=int(seed), tau_c=tau_c, n_clamped=n_clamped,
        grid=None if grid is None else np.asarray(grid, dtype=float),
    )


def trajectory_rng(seed: int, trajectory_id: int) -> np.random.Generator:
    """Independent reproducible stream per trajectory (counter-based)."""
    return np.random.Generator(np.random.Philox(key=[seed & 0xFFFFFFFFFFFFFFFF,
                                                     trajectory_id & 0xFFFFFFFFFFFFFFFF]))


def sample(model: NoiseModel, n_steps: int, trajectory_id: int = 0) -> NoiseRealization:
    """Draw one realization V[r_i, t_k] for k = 0..n_steps-1."""
    if n_steps <= 0:
        raise KernelError("n_steps must be positive")
    rng = trajectory_rng(model.seed, trajectory_id)
    n = model.n_points
    if model.mode == "white":
        z = rng.standard_normal((n, n_steps))
        V = (model.L @ z) / np.sqrt(model.dt)
    elif model.mode == "frozen":
        z = rng.standard_normal(n)
        V = np.repeat((model.L @ z)[:, None], n_steps, axis=1)
    else:  # expmem
        rho = np.exp(-model.dt / model.tau_c)
        fresh = np.sqrt(1.0 - rho * rho)
        y = model.L @ rng.standard_normal(n)   # stationary start
        V = np.empty((n, n_steps))
        for k in range(n_steps):
            V[:, k] = y
            y = rho * y + fresh * (model.L @ rng.standard_normal(n))
    return NoiseRealization(values=V, seed=model.seed, trajectory_id=trajectory_id,
                            model=model)


# -- persistence ----------------------------------------------------------------

_MAGIC = b"SNLN"
_VERSION = 1


def save_binary(real: NoiseRealization, path: str | Path) -> None:
    """Binary layout: magic, version, n_points, n_steps, dt, seed, trajectory,
    grid (n_points float64, zeros if absent), payload row-major float64."""
    V = np.ascontiguousarray(real.values, dtype="<f8")
    n_r, n_t = V.shape
    grid = real.model.grid
    g = np.zeros(n_r) if grid is None else np.asarray(grid, dtype=float)
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<IIIdqq", _VERSION, n_r, n_t, real.model.dt,
                            real.seed, real.trajectory_id))
        f.write(g.astype("<f8").tobytes())
        f.write(V.tobytes())


def load_binary(path: str | Path):
    """Returns (values, grid, dt, seed, trajectory_id)."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _MAGIC:
            raise KernelError(f"not a noise realization file: bad magic {magic!r}")
        version, n_r, n_t, dt, seed, traj = struct.unpack("<IIIdqq", f.read(36))
        if version != _VERSION:
            raise KernelError(f"unsupported version {version}")
        grid = np.frombuffer(f.read(8 * n_r), dtype="<f8").copy()
        V = np.frombuffer(f.read(8 * n_r * n_t), dtype="<f8").reshape(n_r, n_t).copy()
    return V, grid, dt, seed, traj


# -- statistical validation -------------------------------------------------------


def moment_report(model: NoiseModel, n_real: int, n_steps: int = 1) -> dict:
    """Sample statistics for validation: elementwise mean z-scores, diagonal
    covariance relative errors, lag-1 autocorrelation (expmem), and third/
    fourth standardized cumulants (should be ~0 for a Gaussian field).

    Cumulants are computed on exactly whitened components (snapshots
    projected onto the kernel eigenbasis and scaled by 1/sqrt(lambda)); the
    grid components themselves are strongly correlated, so pooling them raw
    would invalidate the normal-theory error bands the z-scores use.
    """
    n = model.n_points
    # equal-time snapshots across realizations (first step of each)
    snaps = np.empty((n_real, n))
    lag1_num = 0.0
    lag1_den = 0.0
    for j in range(n_real):
        r = sample(model, max(n_steps, 2 if model.mode == "expmem" else 1),
                   trajectory_id=j)
        snaps[j] = r.values[:, 0]
        if model.mode == "expmem":
            lag1_num += float(r.values[:, 0] @ r.values[:, 1])
            lag1_den += float(r.values[:, 0] @ r.values[:, 0])
    scale = 1.0 / np.sqrt(model.dt) if model.mode == "white" else 1.0
    C = model.kernel * scale**2
    sd = np.sqrt(np.clip(np.diag(C), 1e-300, None))
    mean = snaps.mean(axis=0)
    mean_z = mean / (sd / np.sqrt(n_real))
    var = snaps.var(axis=0, ddof=1)
    cov_rel_err = (var - np.diag(C)) / np.clip(np.diag(C), 1e-300, None)

    # standardized cumulants of the exactly whitened pool (iid N(0,1) under H0)
    lam, U = np.linalg.eigh(0.5 * (C + C.T))
    keep = lam > 1e-12 * max(float(lam[-1]), 1e-300)
    zs = (snaps @ U[:, keep]) / np.sqrt(lam[keep])
    zs = zs.ravel()
    zs = zs[np.isfinite(zs)]
    mu = zs.mean()
    s = zs.std(ddof=1)
    k3 = np.mean(((zs - mu) / s) ** 3)
    k4 = np.mean(((zs - mu) / s) ** 4) - 3.0
    n_z = zs.size
    out = {
        "mean_z_max": float(np.max(np.abs(mean_z))),
        "cov_rel_err_max": float(np.max(np.abs(cov_rel_err))),
        "skew_z": float(k3 / np.sqrt(6.0 / n_z)),
        "kurt_z": float(k4 / np.sqrt(24.0 / n_z)),
        "n_real": n_real,
    }
    if model.mode == "expmem":
        out["lag1_autocorr"] = lag1_num / max(lag1_den, 1e-300)
        out["lag1_expected"] = float(np.exp(-model.dt / model.tau_c))
    return out
