"""Radial grid evolution of the reduced wavefunction u = r psi.

Modes:
  free                  -- kinetic only.
  sn                    -- self-consistent mean potential from the CURRENT
                           density (nonlinear).
  stochastic_sn         -- current-density potential plus a sampled noise
                           field.
  stochastic_linearized -- potential sourced by the analytic free packet
                           (linear in psi) plus a sampled noise field.

Stepping is Strang splitting: half potential kick, full kinetic step, half
potential kick.  The kinetic step is exact in the sine basis (type-I DST,
Dirichlet ends) or a Crank-Nicolson tridiagonal solve (compiled kernel when
built); both are unitary to round-off.  Potential kicks are pure phases, so
every mode is norm-preserving, including the stochastic ones (the sampled
field is real).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.fft import dst, idst

from . import _backend
from .gaussian import GaussianPacket
from .noise import NoiseRealization
from .params import ParamsError, SimParams
from .potential import mean_potential_gaussian, mean_potential_grid

__all__ = [
    "GridSpec",
    "RadialState",
    "EvolveConfig",
    "TrajectoryResult",
    "SolverError",
    "state_from_packet",
    "evolve_run",
    "oscillation_about",
    "phase_ansatz_check",
]

NORM_DRIFT_PER_STEP = 1e-4
MODES = ("free", "sn", "stochastic_sn", "stochastic_linearized")


class SolverError(RuntimeError):
    """Evolution aborted: invalid configuration or runaway numerics."""


@dataclass(frozen=True)
class GridSpec:
    n: int
    box: float

    def __post_init__(self):
        if self.n < 16:
            raise ParamsError("grid needs at least 16 points")
        if self.box <= 0:
            raise ParamsError("box must be positive")

    @property
    def h(self) -> float:
        return self.box / (self.n - 1)

    def radii(self) -> np.ndarray:
        return np.linspace(0.0, self.box, self.n)


@dataclass
class RadialState:
    r: np.ndarray
    u: np.ndarray            # complex, u[0] = u[-1] = 0
    t: float

    @property
    def h(self) -> float:
        return float(self.r[1] - self.r[0])

    def norm(self) -> float:
        """4 pi int |u|^2 dr (trapezoid; ends vanish)."""
        return float(4.0 * np.pi * np.sum(np.abs(self.u) ** 2) * self.h)

    def psi(self) -> np.ndarray:
        out = np.empty_like(self.u)
        out[1:] = self.u[1:] / self.r[1:]
        out[0] = out[1]  # regular limit, adequate for diagnostics
        return out

    def radial_density(self) -> np.ndarray:
        """p(r) = 4 pi r^2 |psi|^2 = 4 pi |u|^2; integrates to 1 over dr."""
        return 4.0 * np.pi * np.abs(self.u) ** 2

    def peak_radius(self) -> float:
        """Argmax of the radial density, parabola-refined between grid points."""
        d = np.abs(self.u) ** 2
        i = int(np.argmax(d[1:-1])) + 1
        y0, y1, y2 = d[i - 1], d[i], d[i + 1]
        denom = y0 - 2.0 * y1 + y2
        shift = 0.0 if denom == 0 else 0.5 * (y0 - y2) / denom
        shift = float(np.clip(shift, -0.5, 0.5))
        return float(self.r[i] + shift * self.h)


def state_from_packet(packet: GaussianPacket, grid: GridSpec, t: float = 0.0) -> RadialState:
    r = grid.radii()
    u = (r * packet.psi(r, t)).astype(complex)
    u[0] = 0.0
    u[-1] = 0.0
    state = RadialState(r=r, u=u, t=float(t))
    n = state.norm()
    if abs(n - 1.0) > 1e-3:
        raise SolverError(
            f"grid cannot represent the packet (norm {n:.6f}); widen the box "
            "or refine the grid"
        )
    state.u /= math.sqrt(n)
    return state


@dataclass(frozen=True)
class EvolveConfig:
    params: SimParams
    grid: GridSpec
    dt: float
    n_steps: int
    mode: str = "free"
    stepper: str = "dst"             # dst | cn
    noise_scale: float = 1.0         # multiplies the sampled stochastic field
    out_every: int = 10
    probes: tuple = ()
    snapshot_every: int = 0          # 0 = no snapshots

    def __post_init__(self):
        if self.mode not in MODES:
            raise ParamsError(f"unknown mode {self.mode!r}; valid: {MODES}")
        if self.stepper not in ("dst", "cn"):
            raise ParamsError(f"unknown stepper {self.stepper!r}")
        if self.dt <= 0 or self.n_steps <= 0:
            raise ParamsError("dt and n_steps must be positive")


@dataclass
class TrajectoryResult:
    t: np.ndarray
    r_p: np.ndarray
    norm: np.ndarray
    energy: np.ndarray
    probe_values: np.ndarray | None   # (n_probes, n_out) complex psi at probes
    probe_indices: np.ndarray | None
    snapshots: list = field(default_factory=list)
    flags: dict = field(default_factory=dict)


def _kinetic_phases(grid: GridSpec, p: SimParams, dt: float) -> np.ndarray:
    n_int = grid.n - 2
    k = np.pi * np.arange(1, n_int + 1) / grid.box
    return np.exp(-1j * p.hbar * k * k * dt / (2.0 * p.m))


def _validate_timestep(cfg: EvolveConfig, v_scale: float) -> None:
    # The DST kinetic step is exact at any dt; splitting accuracy is governed
    # by the potential phase per step.  Crank-Nicolson additionally distorts
    # modes whose kinetic phase per step approaches pi.
    p = cfg.params
    if v_scale * cfg.dt / p.hbar > 0.5:
        raise SolverError(
            f"potential phase per step {v_scale * cfg.dt / p.hbar:.3f} rad > 0.5; "
            "reduce dt"
        )
    if cfg.stepper == "cn":
        k_max = math.pi / cfg.grid.h
        kin_phase = p.hbar * k_max * k_max * cfg.dt / (2.0 * p.m)
        if kin_phase > math.pi:
            raise SolverError(
                f"kinetic phase per step at the grid cutoff is {kin_phase:.2f} rad; "
                "reduce dt or coarsen the grid for the cn stepper"
            )


def _potential(cfg: EvolveConfig, state: RadialState, packet: GaussianPacket,
               t: float, noise_col: np.ndarray | None) -> np.ndarray:
    p = cfg.params
    mode = cfg.mode
    if mode == "free":
        V = np.zeros_like(state.r)
    elif mode == "sn" or mode == "stochastic_sn":
        rho = np.empty_like(state.r)
        rho[1:] = (np.abs(state.u[1:]) / state.r[1:]) ** 2
        rho[0] = rho[1]
        V = mean_potential_grid(state.r, rho, p)
    else:  # stochastic_linearized: analytic free-packet mean
        V = mean_potential_gaussian(packet, p, state.r, t)
    if mode in ("stochastic_sn", "stochastic_linearized") and noise_col is not None:
        V = V + cfg.noise_scale * p.m * noise_col
    return V


def _energy(state: RadialState, V: np.ndarray, p: SimParams, grid: GridSpec,
            self_consistent: bool) -> float:
    n_int = grid.n - 2
    k = np.pi * np.arange(1, n_int + 1) / grid.box
    U = dst(state.u[1:-1], type=1, norm="ortho")
    kin = 4.0 * np.pi * grid.h * float(np.sum((p.hbar * k) ** 2 / (2.0 * p.m) * np.abs(U) ** 2))
    pot = 4.0 * np.pi * grid.h * float(np.sum(V * np.abs(state.u) ** 2))
    return kin + (0.5 * pot if self_consistent else pot)


def evolve_run(initial: RadialState, cfg: EvolveConfig,
               noise: NoiseRealization | None = None) -> TrajectoryResult:
    """Run a trajectory; returns coarse time series and optional snapshots.

    Noise columns are consumed one per step (piecewise-constant field per the
    noise module's convention); supplying fewer columns than steps is an
    error, as is omitting noise in a stochastic mode.
    """
    p = cfg.params
    grid = cfg.grid
    stochastic = cfg.mode.startswith("stochastic")
    if stochastic and noise is None:
        raise SolverError(f"mode {cfg.mode} requires a noise realization")
    if noise is not None and noise.values.shape[1] < cfg.n_steps:
        raise SolverError(
            f"noise has {noise.values.shape[1]} steps, run needs {cfg.n_steps}"
        )
    if noise is not None and noise.values.shape[0] != grid.n:
        raise SolverError("noise grid does not match the state grid")

    packet = GaussianPacket.from_params(p)
    state = RadialState(r=initial.r.copy(), u=initial.u.copy(), t=initial.t)
    self_consistent = cfg.mode in ("sn", "stochastic_sn")

    V0 = _potential(cfg, state, packet, state.t, noise.values[:, 0] if noise is not None else None)
    _validate_timestep(cfg, float(np.max(np.abs(V0))))

    kin_phase = _kinetic_phases(grid, p, cfg.dt)
    probe_idx = None
    probe_vals = None
    if cfg.probes:
        probe_idx = np.array([int(round(rp / grid.h)) for rp in cfg.probes])
        if np.any(probe_idx <= 0) or np.any(probe_idx >= grid.n - 1):
            raise SolverError("probe radii fall outside the open grid interior")

    n_out = cfg.n_steps // cfg.out_every
    ts = np.empty(n_out)
    r_ps = np.empty(n_out)
    norms = np.empty(n_out)
    energies = np.empty(n_out)
    if probe_idx is not None:
        probe_vals = np.empty((len(probe_idx), n_out), dtype=complex)
    snapshots = []
    flags = {"norm_drift_max": 0.0, "backend": _backend.backend_name()}

    norm_prev = state.norm()
    half = 0.5 * cfg.dt / p.hbar
    j_out = 0
    for s in range(cfg.n_steps):
        col = noise.values[:, s] if noise is not None else None
        V1 = _potential(cfg, state, packet, state.t, col)
        state.u *= np.exp(-1j * half * V1)
        if cfg.stepper == "dst":
            U = dst(state.u[1:-1], type=1, norm="ortho")
            U *= kin_phase
            state.u[1:-1] = idst(U, type=1, norm="ortho")
        else:
            state.u = _backend.cn_kinetic_step(state.u, cfg.dt, p.hbar, p.m, grid.h)
        V2 = _potential(cfg, state, packet, state.t + cfg.dt, col)
        state.u *= np.exp(-1j * half * V2)
        state.t += cfg.dt

        norm_now = state.norm()
        drift = abs(norm_now - norm_prev)
        flags["norm_drift_max"] = max(flags["norm_drift_max"], drift)
        if drift > NORM_DRIFT_PER_STEP:
            raise SolverError(
                f"norm drifted by {drift:.3e} in one step at t={state.t:.6g} "
                f"(mode={cfg.mode}, dt={cfg.dt}); unstable configuration"
            )
        norm_prev = norm_now

        if (s + 1) % cfg.out_every == 0:
            ts[j_out] = state.t
            r_ps[j_out] = state.peak_radius()
            norms[j_out] = norm_now
            energies[j_out] = _energy(state, V2, p, grid, self_consistent)
            if probe_idx is not None:
                probe_vals[:, j_out] = state.u[probe_idx] / state.r[probe_idx]
            j_out += 1
        if cfg.snapshot_every and (s + 1) % cfg.snapshot_every == 0:
            snapshots.append((state.t, state.u.copy()))

    return TrajectoryResult(
        t=ts, r_p=r_ps, norm=norms, energy=energies,
        probe_values=probe_vals, probe_indices=probe_idx,
        snapshots=snapshots, flags=flags,
    )


def oscillation_about(t: np.ndarray, r_p: np.ndarray, center: float,
                      band: float = 2.0) -> dict:
    """Detect interior extrema of r_p(t) and whether the oscillation stays
    within [center/band, center*band].  Endpoint samples are not extrema."""
    r_p = np.asarray(r_p)
    interior = r_p[1:-1]
    is_max = (interior > r_p[:-2]) & (interior >= r_p[2:])
    is_min = (interior < r_p[:-2]) & (interior <= r_p[2:])
    lo, hi = center / band, center * band
    mean_w = float(np.mean(r_p))
    return {
        "n_maxima": int(np.sum(is_max)),
        "n_minima": int(np.sum(is_min)),
        "mean_width": mean_w,
        "mean_in_band": lo <= mean_w <= hi,
        "extrema_bracket_center": bool(
            np.sum(is_max) and np.sum(is_min)
            and np.min(interior[is_min]) <= center * band
            and np.max(interior[is_max]) >= center / band
        ),
    }


def phase_ansatz_check(cfg: EvolveConfig, noise: NoiseRealization,
                       probes: tuple, density_floor: float = 1e-10) -> dict:
    """Quantify the accumulated-phase ansatz against the full solver.

    Evolves the packet in stochastic_linearized mode and compares
    arg(Psi/psi_free) at probe radii with -(1/hbar) int V dt accumulated from
    the same potential samples.  Comparison is masked where the free-packet
    amplitude is too small to carry a trustworthy numerical phase.  Returns
    the max deviation, the accumulated-phase scale, and their ratio (the
    quantity a weak-coupling validity certificate bounds).

    The ratio is independent of the coupling (both legs scale linearly) and
    is controlled by what kinetic transport does to the *spatial roughness*
    of the sampled field.  Fields drawn from an analytic covariance (e.g. a
    Gaussian bump) certify at the percent level.  The self-potential
    correlator is not in that class: it has a |r - r'| derivative kink on
    the diagonal (Poisson kernel against 1/|x - r|), so its samples are
    mean-square non-differentiable and their fine-scale content disperses
    within any window, leaving a pointwise phase deviation of order 10% of
    the accumulated phase regardless of coupling strength.  For that field
    class the meaningful ansatz validation is statistical (ensemble variance
    against the quadrature prediction), not pointwise.
    """
    if cfg.mode != "stochastic_linearized":
        raise SolverError("ansatz check runs in stochastic_linearized mode")
    p = cfg.params
    grid = cfg.grid
    packet = GaussianPacket.from_params(p)
    r = grid.radii()
    probe_idx = np.array([int(round(rp / grid.h)) for rp in probes])

    state = state_from_packet(packet, grid)
    kin_phase = _kinetic_phases(grid, p, cfg.dt)
    half = 0.5 * cfg.dt / p.hbar
    acc = np.zeros(len(probe_idx))        # -(1/hbar) int V dt at the probes
    max_dev = 0.0
    max_acc = 0.0
    for s in range(cfg.n_steps):
        col = noise.values[:, s]
        V1 = _potential(cfg, state, packet, state.t, col)
        state.u *= np.exp(-1j * half * V1)
        U = dst(state.u[1:-1], type=1, norm="ortho")
        U *= kin_phase
        state.u[1:-1] = idst(U, type=1, norm="ortho")
        V2 = _potential(cfg, state, packet, state.t + cfg.dt, col)
        state.u *= np.exp(-1j * half * V2)
        state.t += cfg.dt
        acc += -(0.5 * cfg.dt / p.hbar) * (V1[probe_idx] + V2[probe_idx])

        free = packet.psi(r[probe_idx], state.t)
        ok = np.abs(free) ** 2 >= density_floor
        if np.any(ok):
            ratio = (state.u[probe_idx] / r[probe_idx]) / free
            dev = np.abs(np.angle(ratio * np.exp(-1j * acc)))
            max_dev = max(max_dev, float(np.max(dev[ok])))
            max_acc = max(max_acc, float(np.max(np.abs(acc[ok]))))
    return {
        "max_deviation": max_dev,
        "max_accumulated_phase": max_acc,
        "relative": max_dev / max_acc if max_acc > 0 else 0.0,
    }
