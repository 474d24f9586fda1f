"""Monte-Carlo ensembles over noise realizations: stochastically averaged
density matrices, coherence-decay curves, and decoherence-time extraction.

Two trajectory propagators:

  ansatz -- each trajectory is the closed-form solution of the linearized
            stochastic equation in the accumulated-phase approximation,
            Psi(r,t) = psi_free(r,t) exp(i phi(r,t)),
            phi = -(1/hbar) int W(r,t') dt'.  The random potential-energy
            channel W combines the mean self-potential scaled by a frozen
            unit normal with the zero-mean fluctuation field (frozen draw
            through a factorization refreshed as the packet spreads):

                W(r,t) = z0 * Vbar(r,t) + m * X(r,t),

            giving <W(x)W> = Vbar(x)Vbar + m^2 C -- the dephasing kernel
            whose quadratic form is the phase-variance integrand.  Only the
            probe radii enter, so this propagator is grid-free and fast; it
            is the mode decoherence times are extracted from.

  pde    -- the same potential history drives the full split-step solver
            (transport included).  Physically the honest linearized dynamics;
            used diagnostically.  Kinetic transport mixes amplitude between
            regions of different accumulated phase, which *restores* probe
            coherence at late times once the packet has engulfed the probes;
            revivals are therefore expected in this mode and are flagged,
            not hidden.

The density matrix is accumulated with Welford statistics; accumulators
support an associative merge so trajectory batches can be reduced pairwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .evolve import EvolveConfig, GridSpec, SolverError, evolve_run, state_from_packet
from .gaussian import GaussianPacket
from .noise import NoiseRealization, build_model, symmetric_sqrt, trajectory_rng
from .params import ParamsError, SimParams
from .phasevar import decoherence_time
from .potential import correlator_matrix, mean_potential_gaussian

__all__ = [
    "EnsembleConfig",
    "EnsembleDensityMatrix",
    "CoherenceDecay",
    "WelfordMatrix",
    "run_ensemble",
    "coherence_decay",
    "extract_decoherence_time",
    "mass_sweep",
]


@dataclass(frozen=True)
class EnsembleConfig:
    params: SimParams
    probes: tuple                    # probe radii, decoherence pair first
    T: float
    n_steps: int
    n_traj: int
    seed: int = 0
    propagator: str = "ansatz"       # ansatz | pde
    refresh_alpha: float = 0.01      # refactor kernel when alpha moves this much
    out_every: int = 10
    noise_scale: float = 1.0
    grid: GridSpec | None = None     # pde propagator only
    kernel_grid_n: int = 48          # coarse grid for the fluctuation kernel (pde)
    noise_mode: str = "frozen"       # frozen | white (X-channel temporal model)
    mean_channel: str = "randomized"  # randomized | deterministic | off
    kernel_override: np.ndarray | None = None  # fixed X covariance at the probes

    def __post_init__(self):
        if self.n_traj < 1:
            raise ParamsError("ensemble needs at least 1 trajectory")
        if self.propagator not in ("ansatz", "pde"):
            raise ParamsError(f"unknown propagator {self.propagator!r}")
        if len(self.probes) < 2:
            raise ParamsError("need at least two probe radii")
        if self.T <= 0 or self.n_steps <= 0:
            raise ParamsError("T and n_steps must be positive")
        if self.propagator == "pde" and self.grid is None:
            raise ParamsError("pde propagator needs a grid")
        if self.noise_mode not in ("frozen", "white"):
            raise ParamsError(f"unknown noise_mode {self.noise_mode!r}")
        if self.mean_channel not in ("randomized", "deterministic", "off"):
            raise ParamsError(f"unknown mean_channel {self.mean_channel!r}")
        if self.kernel_override is not None:
            k = np.asarray(self.kernel_override)
            if k.shape != (len(self.probes), len(self.probes)):
                raise ParamsError("kernel_override must be (n_probes, n_probes)")

    @property
    def dt(self) -> float:
        return self.T / self.n_steps


class WelfordMatrix:
    """Streaming mean/variance for complex matrix samples, with merge."""

    def __init__(self, shape):
        self.n = 0
        self.mean = np.zeros(shape, dtype=complex)
        self.m2 = np.zeros(shape, dtype=float)   # sum |x - mean|^2

    def add(self, x: np.ndarray) -> None:
        self.n += 1
        delta = x - self.mean
        self.mean = self.mean + delta / self.n
        self.m2 = self.m2 + (delta.conj() * (x - self.mean)).real

    def merge(self, other: "WelfordMatrix") -> "WelfordMatrix":
        if other.n == 0:
            return self
        if self.n == 0:
            self.n, self.mean, self.m2 = other.n, other.mean.copy(), other.m2.copy()
            return self
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.n / n)
        m2 = self.m2 + other.m2 + np.abs(delta) ** 2 * (self.n * other.n / n)
        self.n, self.mean, self.m2 = n, mean, m2
        return self

    def stderr(self) -> np.ndarray:
        if self.n < 2:
            return np.full(self.mean.shape, np.inf)
        return np.sqrt(self.m2 / (self.n - 1) / self.n)


@dataclass
class EnsembleDensityMatrix:
    probes: np.ndarray
    t: np.ndarray
    rho: np.ndarray              # (n_out, n_probes, n_probes) complex
    stderr: np.ndarray           # same shape, per-entry standard error
    n_traj: int
    n_failed: int
    phase_variance: np.ndarray | None = None   # (n_out, n_pairs) ansatz only
    flags: dict = field(default_factory=dict)


@dataclass
class CoherenceDecay:
    r1: float
    r2: float
    t: np.ndarray
    D: np.ndarray
    stderr: np.ndarray
    sample_variance: np.ndarray | None = None  # Var of relative phase (ansatz)
    T_fit: float | None = None                 # filled by extract_decoherence_time
    fit_residual: float | None = None


def _kernel_schedule(p: SimParams, packet: GaussianPacket, radii: np.ndarray,
                     T: float, refresh_alpha: float):
    """Factorizations of the fluctuation-channel kernel m^2 C(t) at refresh
    times chosen so alpha(t) moves < refresh_alpha between them."""
    times = [0.0]
    t = 0.0
    while t < T:
        alpha_now = float(packet.alpha(t))
        target = alpha_now - refresh_alpha
        if target <= 0:
            step = max(T / 64.0, 0.25 * packet.m * packet.a**2 / p.hbar)
        else:
            tau = packet.m * packet.a**2 / p.hbar
            t_target = tau * math.sqrt(max(1.0 / target - 1.0, 0.0))
            step = max(t_target - t, 1e-3 * T)
        t = min(t + step, T)
        times.append(t)
    Ls = []
    for tj in times:
        C = p.m**2 * correlator_matrix(packet, p, radii, t=tj)
        L, _ = symmetric_sqrt(C)
        Ls.append(L)
    return np.asarray(times), Ls


def _factor_index(times: np.ndarray, t: float) -> int:
    return int(np.searchsorted(times, t, side="right") - 1)


def run_ensemble(cfg: EnsembleConfig) -> EnsembleDensityMatrix:
    """Evolve n_traj trajectories with independent noise streams and
    accumulate rho(r_i, r_j; t) = <Psi(r_i) Psi*(r_j)>, Hermitian by
    construction, with per-entry Welford standard errors."""
    p = cfg.params
    packet = GaussianPacket.from_params(p)
    radii = np.asarray(cfg.probes, dtype=float)
    if cfg.propagator == "ansatz":
        return _run_ansatz(cfg, p, packet, radii)
    return _run_pde(cfg, p, packet, radii)


def _run_ansatz(cfg: EnsembleConfig, p: SimParams, packet: GaussianPacket,
                radii: np.ndarray) -> EnsembleDensityMatrix:
    nP = radii.size
    dt = cfg.dt
    n_out = cfg.n_steps // cfg.out_every

    if cfg.kernel_override is not None:
        L_fixed, _ = symmetric_sqrt(np.asarray(cfg.kernel_override, dtype=float))
        Ls = [L_fixed]
        n_refresh = 1
    else:
        sched_times, Ls = _kernel_schedule(p, packet, radii, cfg.T,
                                           cfg.refresh_alpha)
        n_refresh = len(sched_times)

    # midpoint sampling of the mean channel and the factorization schedule
    t_mid = (np.arange(cfg.n_steps) + 0.5) * dt
    Vbar = np.empty((cfg.n_steps, nP))
    for k, tm in enumerate(t_mid):
        Vbar[k] = mean_potential_gaussian(packet, p, radii, tm)
    if cfg.kernel_override is not None:
        Lidx = np.zeros(cfg.n_steps, dtype=int)
    else:
        Lidx = np.array([_factor_index(sched_times, tm) for tm in t_mid])

    out_steps = (np.arange(n_out) + 1) * cfg.out_every
    t_out = out_steps * dt
    psi_out = np.stack([packet.psi(radii, float(t)) for t in t_out])  # (n_out, nP)

    acc = WelfordMatrix((n_out, nP, nP))
    phase_acc = WelfordMatrix((n_out, nP))
    n_failed = 0
    scale = cfg.noise_scale
    white = cfg.noise_mode == "white"
    sqrt_dt = math.sqrt(dt)
    for j in range(cfg.n_traj):
        rng = trajectory_rng(cfg.seed, j)
        if cfg.mean_channel == "randomized":
            z0 = rng.standard_normal()
        elif cfg.mean_channel == "deterministic":
            z0 = 1.0
        else:
            z0 = 0.0
        zX = rng.standard_normal(nP)
        phi = np.zeros(nP)
        phis = np.empty((n_out, nP))
        i_out = 0
        for k in range(cfg.n_steps):
            if white:
                zX = rng.standard_normal(nP)
                X = (Ls[Lidx[k]] @ zX) / sqrt_dt
            else:
                X = Ls[Lidx[k]] @ zX
            W = scale * (z0 * Vbar[k] + X)
            phi -= W * (dt / p.hbar)
            if (k + 1) % cfg.out_every == 0:
                phis[i_out] = phi
                i_out += 1
        if not np.all(np.isfinite(phis)):
            n_failed += 1
            continue
        Psi = psi_out * np.exp(1j * phis)                    # (n_out, nP)
        rho_sample = Psi[:, :, None] * Psi[:, None, :].conj()
        acc.add(rho_sample)
        phase_acc.add((phis - phis[:, :1]).astype(complex))  # relative to probe 0
    _check_failures(n_failed, cfg.n_traj)

    # sample variance of the relative phase phi_i - phi_0 per probe
    phase_var = phase_acc.m2 / max(phase_acc.n - 1, 1)
    rho = _hermitize(acc.mean)
    return EnsembleDensityMatrix(
        probes=radii, t=t_out, rho=rho, stderr=acc.stderr(),
        n_traj=acc.n, n_failed=n_failed,
        phase_variance=phase_var,
        flags={"propagator": "ansatz", "kernel_refreshes": n_refresh,
               "noise_mode": cfg.noise_mode, "mean_channel": cfg.mean_channel},
    )


def _run_pde(cfg: EnsembleConfig, p: SimParams, packet: GaussianPacket,
             radii: np.ndarray) -> EnsembleDensityMatrix:
    grid = cfg.grid
    r_fine = grid.radii()
    dt = cfg.dt
    coarse = np.linspace(0.0, grid.box, cfg.kernel_grid_n)
    sched_times, Ls = _kernel_schedule(p, packet, coarse, cfg.T, cfg.refresh_alpha)
    t_mid = (np.arange(cfg.n_steps) + 0.5) * dt
    Lidx = np.array([_factor_index(sched_times, tm) for tm in t_mid])
    Vbar_fine = np.empty((cfg.n_steps, r_fine.size))
    for k, tm in enumerate(t_mid):
        Vbar_fine[k] = mean_potential_gaussian(packet, p, r_fine, tm)

    n_out = cfg.n_steps // cfg.out_every
    nP = radii.size
    acc = WelfordMatrix((n_out, nP, nP))
    n_failed = 0
    base_cfg = EvolveConfig(
        params=p, grid=grid, dt=dt, n_steps=cfg.n_steps,
        mode="stochastic_linearized", out_every=cfg.out_every,
        probes=tuple(radii),
    )
    initial = state_from_packet(packet, grid)
    for j in range(cfg.n_traj):
        rng = trajectory_rng(cfg.seed, j)
        z0 = rng.standard_normal()
        zX = rng.standard_normal(cfg.kernel_grid_n)
        # synthetic per-mass noise columns so that the evolve-mode potential
        # Vbar + m * V_st equals z0 * Vbar + X interpolated to the fine grid
        V = np.empty((r_fine.size, cfg.n_steps))
        for k in range(cfg.n_steps):
            X = np.interp(r_fine, coarse, Ls[Lidx[k]] @ zX)
            V[:, k] = ((z0 - 1.0) * Vbar_fine[k] + X) / p.m
        realization = NoiseRealization(values=V, seed=cfg.seed, trajectory_id=j,
                                       model=None)
        try:
            res = evolve_run(initial, base_cfg, noise=realization)
        except SolverError:
            n_failed += 1
            continue
        Psi = res.probe_values.T                              # (n_out, nP)
        if not np.all(np.isfinite(Psi)):
            n_failed += 1
            continue
        acc.add(Psi[:, :, None] * Psi[:, None, :].conj())
    _check_failures(n_failed, cfg.n_traj)
    t_out = (np.arange(n_out) + 1) * cfg.out_every * dt
    return EnsembleDensityMatrix(
        probes=radii, t=t_out, rho=_hermitize(acc.mean), stderr=acc.stderr(),
        n_traj=acc.n, n_failed=n_failed,
        flags={"propagator": "pde", "revivals_expected": True},
    )


def _hermitize(rho: np.ndarray) -> np.ndarray:
    return 0.5 * (rho + np.conj(np.swapaxes(rho, -1, -2)))


def _check_failures(n_failed: int, n_traj: int) -> None:
    if n_failed > 0.01 * n_traj:
        raise SolverError(
            f"{n_failed}/{n_traj} trajectories failed (> 1%); aborting"
        )


def coherence_decay(dm: EnsembleDensityMatrix, i: int = 0, j: int = 1) -> CoherenceDecay:
    """Normalized off-diagonal modulus D(t) with a delta-method stderr."""
    num = dm.rho[:, i, j]
    d1 = dm.rho[:, i, i].real
    d2 = dm.rho[:, j, j].real
    D = np.abs(num) / np.sqrt(np.clip(d1 * d2, 1e-300, None))
    se_off = dm.stderr[:, i, j]
    se_d1 = dm.stderr[:, i, i]
    se_d2 = dm.stderr[:, j, j]
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.sqrt(
            (se_off / np.clip(np.abs(num), 1e-300, None)) ** 2
            + 0.25 * (se_d1 / np.clip(d1, 1e-300, None)) ** 2
            + 0.25 * (se_d2 / np.clip(d2, 1e-300, None)) ** 2
        )
    sample_var = None
    if dm.phase_variance is not None and i == 0:
        sample_var = dm.phase_variance[:, j]   # Var(phi_j - phi_0)
    return CoherenceDecay(
        r1=float(dm.probes[i]), r2=float(dm.probes[j]),
        t=dm.t, D=D, stderr=D * rel, sample_variance=sample_var,
    )


def extract_decoherence_time(decay: CoherenceDecay, p: SimParams,
                             fit_t_max: float | None = None) -> dict:
    """Threshold-crossing and Gaussian-fit decoherence times.

    threshold: first interpolated crossing of D below exp(-Lambda/2); when the
    curve never crosses, the window end is reported as a lower bound.
    fit: the Gaussian-phase model D = exp(-beta t^2 / 2), i.e. a relative-phase
    variance growing as beta t^2, fitted over t <= fit_t_max (default the full
    window); then T_fit = sqrt(Lambda/beta).  When the decay carries the
    trajectory phase sample variance, the fit uses it directly -- for Gaussian
    phases it equals -2 ln D but stays measurable even when the decay itself
    is far below the statistical floor (light masses dephase too slowly for
    1 - D to rise above the Monte-Carlo error, while the variance estimate
    keeps a fixed ~ sqrt(2/N) relative error at any magnitude).
    The prediction from the far-probe energy difference and their ratios are
    included for direct comparison.
    """
    lam = p.criterion_constant
    thr = math.exp(-0.5 * lam)
    t, D = decay.t, decay.D
    below = np.nonzero(D < thr)[0]
    if below.size:
        k = below[0]
        if k == 0:
            T_threshold = float(t[0])
        else:
            f = (thr - D[k - 1]) / (D[k] - D[k - 1])
            T_threshold = float(t[k - 1] + f * (t[k] - t[k - 1]))
        crossed = True
    else:
        T_threshold = float(t[-1])
        crossed = False

    if decay.sample_variance is not None:
        y_all = np.asarray(decay.sample_variance, dtype=float)
        mask = np.isfinite(y_all) & (t > 0)
        if fit_t_max is not None:
            mask &= t <= fit_t_max
        tt, y = t[mask], y_all[mask]
        # equal *relative* error per point: average the per-point rate
        beta = float(np.mean(y / tt**2)) if tt.size else math.nan
    else:
        mask = np.isfinite(D) & (D > 1e-12) & (t > 0)
        if fit_t_max is not None:
            mask &= t <= fit_t_max
        tt, DD = t[mask], D[mask]
        y = -2.0 * np.log(DD)
        t2 = tt * tt
        beta = float(t2 @ y / (t2 @ t2)) if tt.size else math.nan
    T_fit = math.sqrt(lam / beta) if beta and beta > 0 else math.inf
    residual = (float(np.sqrt(np.mean((y - beta * tt**2) ** 2)))
                if tt.size and math.isfinite(beta) else math.nan)
    decay.T_fit = T_fit
    decay.fit_residual = residual

    pred = decoherence_time(p, decay.r1, decay.r2)
    return {
        "T_threshold": T_threshold,
        "threshold_crossed": crossed,
        "T_fit": T_fit,
        "beta_fit": beta,
        "fit_residual": residual,
        "predicted_T": pred["T"],
        "dE": pred["dE"],
        "ratio_threshold": T_threshold / pred["T"],
        "ratio_fit": T_fit / pred["T"],
    }


def mass_sweep(base: SimParams, masses, r1: float, r2: float, n_traj: int,
               seed: int = 0, window_scale: float = 3.0,
               fit_window_scale: float = 0.35, steps_per_unit: float = 30.0) -> dict:
    """Decoherence-time scaling across masses at fixed probe radii.

    Each mass runs an ansatz ensemble over a window proportional to its
    predicted decoherence time; the Gaussian-fit estimator is restricted to
    the early packet-frozen regime (t <= fit_window_scale * tau_spread),
    where the relative-phase variance grows quadratically for every mass,
    and the log-log slope of T_fit vs m is returned.  Threshold crossings
    are reported where they occur (heavier masses cross in-window; light
    masses saturate below the threshold as the spreading packet dilutes the
    dephasing kernel -- those report lower bounds).
    """
    from dataclasses import replace as _replace

    masses = list(masses)
    results = []
    for mm in masses:
        pm = _replace(base, m=float(mm))
        pred = decoherence_time(pm, r1, r2)["T"]
        tau = pm.m * pm.a**2 / pm.hbar
        fit_t_max = fit_window_scale * tau
        T = window_scale * pred
        n_steps = max(400, int(steps_per_unit * T))
        out_every = max(1, n_steps // 200)
        # the early-window fit needs resolved output inside t <= fit_t_max
        if out_every * T / n_steps > fit_t_max / 8.0:
            out_every = max(1, int(n_steps * fit_t_max / (8.0 * T)))
        cfg = EnsembleConfig(
            params=pm, probes=(r1, r2), T=T, n_steps=n_steps,
            n_traj=n_traj, seed=seed, out_every=out_every,
        )
        dm = run_ensemble(cfg)
        decay = coherence_decay(dm)
        res = extract_decoherence_time(decay, pm, fit_t_max=fit_t_max)
        res["m"] = float(mm)
        results.append(res)

    lm = np.log([r["m"] for r in results])
    lT = np.log([r["T_fit"] for r in results])
    A = np.vstack([lm, np.ones_like(lm)]).T
    slope, intercept = np.linalg.lstsq(A, lT, rcond=None)[0]
    return {"per_mass": results, "exponent": float(slope),
            "intercept": float(intercept)}
