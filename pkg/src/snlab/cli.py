"""Batch front-end: subcommands wiring configs to the library modules.

All numerics live behind the library API; this layer parses flags, stamps a
run manifest, and writes CSV with fixed 17-significant-digit formatting so
identical manifests reproduce identical files.  Exit codes: 0 success,
2 config/usage error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .ensemble import (EnsembleConfig, coherence_decay, extract_decoherence_time,
                       mass_sweep, run_ensemble)
from .evolve import (EvolveConfig, GridSpec, SolverError, evolve_run,
                     state_from_packet)
from .gaussian import GaussianPacket
from .mastereq import (MasterEqError, build_dkernel, build_kgrid, evolve_master,
                       physical_gamma)
from .noise import KernelError, build_model, sample
from .params import (ParamsError, SimParams, apply_overrides, classify_regime,
                     critical_length_extended, derive_scales, load_config)
from .phasevar import (method_ladder, phase_variance_asymptote,
                       phase_variance_closed_form, phase_variance_quadrature,
                       small_time_bound)
from .potential import QuadratureError, correlator_matrix

_FMT = "%.17g"


def _params_from_args(args) -> SimParams:
    p = load_config(args.config) if args.config else SimParams()
    if args.set:
        overrides = {}
        for item in args.set:
            key, sep, val = item.partition("=")
            if not sep:
                raise ParamsError(f"override {item!r} is not key=value")
            overrides[key] = val
        p = apply_overrides(p, overrides)
    return p


def _manifest(args, p: SimParams, command: str) -> dict:
    cfg = dataclasses.asdict(p)
    payload = {
        "command": command,
        "config": cfg,
        "seed": args.seed,
        "args": {k: v for k, v in sorted(vars(args).items())
                 if k not in ("func", "out_dir", "threads") and v is not None},
        "version": __version__,
    }
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    payload["hash"] = hashlib.sha256(blob).hexdigest()[:16]
    return payload


def _write_csv(path: Path, manifest: dict, p: SimParams, columns, rows,
               extra_params: dict | None = None) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(f"# manifest={manifest['hash']}\n")
        for key, val in sorted(dataclasses.asdict(p).items()):
            fh.write(f"# {key}={_FMT % val if isinstance(val, float) else val}\n")
        for key, val in sorted((extra_params or {}).items()):
            fh.write(f"# {key}={_FMT % val if isinstance(val, float) else val}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(
                _FMT % v if isinstance(v, (float, np.floating)) else str(v)
                for v in row) + "\n")


def _finish(manifest: dict, out_dir: Path, outputs: list[str],
            t0: float) -> None:
    manifest["outputs"] = outputs
    manifest["wall_clock_s"] = round(time.time() - t0, 3)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)


# -- subcommands --------------------------------------------------------------


def cmd_scales(args, p: SimParams, out_dir: Path, manifest: dict) -> int:
    masses = [float(m) for m in args.masses.split(",")] if args.masses else [p.m]
    rows = []
    for m in masses:
        pm = dataclasses.replace(p, m=m)
        sc = derive_scales(pm)
        regime = classify_regime(pm, args.radius)
        ext = critical_length_extended(pm, args.radius)
        rows.append((m, sc.critical_length, sc.threshold_mass, sc.tau_spread,
                     sc.decoherence_energy_scale, regime, ext["value"]))
    cols = ["m", "critical_length", "threshold_mass", "tau_spread",
            "decoherence_energy_scale", "regime", "a_c_extended"]
    _write_csv(out_dir / "scales.csv", manifest, p, cols, rows,
               {"radius": args.radius})
    for row in rows:
        print("  ".join(f"{c}={v}" for c, v in zip(cols, row)))
    if args.si_length and args.si_mass:
        # display-only conversion anchored on (length of a in m, mass of m in kg)
        L, M = args.si_length, args.si_mass
        hbar_si = 1.054571817e-34
        t_unit = M * L * L / hbar_si   # seconds per unit time when hbar = 1
        print(f"# SI display: 1 length = {L:g} m, 1 mass = {M:g} kg, "
              f"1 time = {t_unit:g} s (hbar anchor; values above unchanged)")
    return 0


def cmd_phasevar(args, p: SimParams, out_dir: Path, manifest: dict) -> int:
    r1, r2, T = args.r1, args.r2, args.T
    rows = []
    if args.method in ("quadrature", "ladder"):
        res = phase_variance_quadrature(p, r1, r2, T)
        rows.append(("quadrature", res.dphi2, res.error, res.small_time_ok))
    if args.method in ("closed", "ladder"):
        res = phase_variance_closed_form(p, r1, r2, T)
        rows.append(("closed_form", res.dphi2, res.error, res.small_time_ok))
    if args.method in ("asymptote", "ladder"):
        res = phase_variance_asymptote(p, r1, r2, T)
        rows.append(("asymptote", res.dphi2, res.error, res.small_time_ok))
    _write_csv(out_dir / "phasevar.csv", manifest, p,
               ["method", "dphi2", "error", "small_time_ok"], rows,
               {"r1": r1, "r2": r2, "T": T,
                "small_time_bound": small_time_bound(p, r1)})
    if args.method == "ladder":
        lad = method_ladder(p, r1, r2, T)
        print(f"quad_vs_closed={lad['quad_vs_closed']:.3e}  "
              f"closed_vs_asym={lad['closed_vs_asym']:.3e}")
    for row in rows:
        print(f"{row[0]}: dphi2={row[1]:.10e}")
    return 0


def cmd_evolve(args, p: SimParams, out_dir: Path, manifest: dict) -> int:
    grid = GridSpec(n=args.grid_n, box=args.box)
    dt = args.T / args.steps
    probes = tuple(float(x) for x in args.probes.split(",")) if args.probes else ()
    cfg = EvolveConfig(params=p, grid=grid, dt=dt, n_steps=args.steps,
                       mode=args.mode, stepper=args.stepper,
                       out_every=args.out_every, probes=probes,
                       snapshot_every=args.snapshot_every)
    packet = GaussianPacket.from_params(p)
    state = state_from_packet(packet, grid)
    noise = None
    if cfg.mode.startswith("stochastic"):
        kern = correlator_matrix(packet, p, grid.radii(), t=0.0)
        model = build_model(kern, mode=args.noise_mode, dt=dt, seed=args.seed,
                            tau_c=args.tau_c, grid=grid.radii())
        noise = sample(model, cfg.n_steps, trajectory_id=0)
    res = evolve_run(state, cfg, noise=noise)
    rows = list(zip(res.t, res.r_p, res.norm, res.energy))
    _write_csv(out_dir / "trajectory.csv", manifest, p,
               ["t", "r_p", "norm", "energy"], rows,
               {"mode": args.mode, "grid_n": grid.n, "box": grid.box,
                "dt": dt, "seed": args.seed})
    outputs = ["trajectory.csv"]
    if res.snapshots:
        snap_rows = []
        for t_snap, u in res.snapshots:
            for r_i, u_i in zip(grid.radii(), u):
                snap_rows.append((t_snap, r_i, u_i.real, u_i.imag))
        _write_csv(out_dir / "snapshots.csv", manifest, p,
                   ["t", "r", "re_u", "im_u"], snap_rows)
        outputs.append("snapshots.csv")
    print(f"final width={res.r_p[-1]:.6f}  norm drift={res.flags['norm_drift_max']:.3e}")
    manifest["outputs_extra"] = outputs
    return 0


def cmd_ensemble(args, p: SimParams, out_dir: Path, manifest: dict) -> int:
    probes = tuple(float(x) for x in args.probes.split(","))
    cfg = EnsembleConfig(params=p, probes=probes, T=args.T, n_steps=args.steps,
                         n_traj=args.N, seed=args.seed,
                         propagator=args.propagator,
                         out_every=args.out_every)
    dm = run_ensemble(cfg)
    decay = coherence_decay(dm)
    summary = extract_decoherence_time(decay, p)
    rows = list(zip(decay.t, decay.D, decay.stderr,
                    decay.sample_variance if decay.sample_variance is not None
                    else np.full_like(decay.t, np.nan)))
    _write_csv(out_dir / "decay.csv", manifest, p,
               ["t", "D", "stderr", "phase_variance"], rows,
               {"r1": decay.r1, "r2": decay.r2, "N": args.N,
                "seed": args.seed, "predicted_T": summary["predicted_T"]})
    _write_csv(out_dir / "ensemble_summary.csv", manifest, p,
               list(summary.keys()), [tuple(summary.values())],
               {"r1": decay.r1, "r2": decay.r2, "N": args.N})
    print(f"T_threshold={summary['T_threshold']:.4f} "
          f"(crossed={summary['threshold_crossed']})  "
          f"T_fit={summary['T_fit']:.4f}  predicted={summary['predicted_T']:.4f}")
    return 0


def cmd_master(args, p: SimParams, out_dir: Path, manifest: dict) -> int:
    r = np.linspace(args.rmin, args.rmax, args.grid_n)
    kgrid = build_kgrid(p, r, M=args.M)
    packet = GaussianPacket.from_params(p)
    dkernel = build_dkernel(packet, kgrid, mode=args.noise_mode,
                            tau_c=args.tau_c)
    gamma = physical_gamma(p) if args.gamma is None else args.gamma
    n = r.size
    v = np.full(n, 1.0 / np.sqrt(n), dtype=complex)
    rho0 = np.outer(v, v.conj())
    res = evolve_master(rho0, kgrid, dkernel, gamma, args.t_final, args.dt,
                        order=args.order, out_every=args.out_every)
    rho_rows = []
    for t_i, rho_i in zip(res.t, res.rho):
        for i in range(n):
            for j in range(n):
                rho_rows.append((t_i, r[i], r[j],
                                 rho_i[i, j].real, rho_i[i, j].imag))
    _write_csv(out_dir / "master_rho.csv", manifest, p,
               ["t", "r_i", "r_j", "re", "im"], rho_rows,
               {"gamma": gamma, "order": args.order, "M": args.M})
    diag_rows = list(zip(res.t, [float(x) for x in res.min_eig],
                         np.interp(res.t, res.t_steps, res.trace)))
    _write_csv(out_dir / "master_diag.csv", manifest, p,
               ["t", "min_eig", "trace"], diag_rows,
               {"gamma": gamma, "order": args.order})
    drift = float(np.max(np.abs(res.trace - res.trace[0])))
    print(f"trace drift={drift:.3e}  herm asym={res.herm_asym:.3e}  "
          f"min eig={res.min_eig.min():.3e}")
    return 0


def cmd_sweep(args, p: SimParams, out_dir: Path, manifest: dict) -> int:
    masses = [float(m) for m in args.masses.split(",")]
    res = mass_sweep(p, masses, args.r1, args.r2, n_traj=args.N,
                     seed=args.seed)
    rows = [(r["m"], r["T_fit"], r["T_threshold"], r["threshold_crossed"],
             r["predicted_T"], r["ratio_fit"]) for r in res["per_mass"]]
    _write_csv(out_dir / "sweep.csv", manifest, p,
               ["m", "T_fit", "T_threshold", "crossed", "predicted_T",
                "ratio_fit"], rows,
               {"exponent": res["exponent"], "r1": args.r1, "r2": args.r2,
                "N": args.N})
    print(f"scaling exponent={res['exponent']:.4f} (target -2)")
    return 0


# -- argument plumbing ---------------------------------------------------------


def _add_common(sp):
    sp.add_argument("--config", help="TOML config file")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out-dir", default="runs")
    sp.add_argument("--threads", type=int, default=None,
                    help="cap BLAS/OpenMP worker threads")
    sp.add_argument("--set", action="append", metavar="key=value",
                    help="override a config key")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="snlab", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("scales", help="derived scales and regime table")
    sp.add_argument("--masses", help="comma list; default config mass")
    sp.add_argument("--radius", type=float, default=1.0,
                    help="object radius for regime classification")
    sp.add_argument("--si-length", type=float, help="SI meters per unit length")
    sp.add_argument("--si-mass", type=float, help="SI kg per unit mass")
    _add_common(sp)
    sp.set_defaults(func=cmd_scales)

    sp = sub.add_parser("phasevar", help="phase-variance estimates")
    sp.add_argument("--r1", type=float, required=True)
    sp.add_argument("--r2", type=float, required=True)
    sp.add_argument("--T", type=float, required=True)
    sp.add_argument("--method", default="ladder",
                    choices=["quadrature", "closed", "asymptote", "ladder"])
    _add_common(sp)
    sp.set_defaults(func=cmd_phasevar)

    sp = sub.add_parser("evolve", help="single-trajectory radial evolution")
    sp.add_argument("--mode", default="free",
                    choices=["free", "sn", "stochastic_sn",
                             "stochastic_linearized"])
    sp.add_argument("--T", type=float, default=3.0)
    sp.add_argument("--steps", type=int, default=600)
    sp.add_argument("--grid-n", type=int, default=1024)
    sp.add_argument("--box", type=float, default=48.0)
    sp.add_argument("--stepper", default="dst", choices=["dst", "cn"])
    sp.add_argument("--probes", help="comma list of probe radii")
    sp.add_argument("--out-every", type=int, default=10)
    sp.add_argument("--snapshot-every", type=int, default=0)
    sp.add_argument("--noise-mode", default="white",
                    choices=["white", "expmem", "frozen"])
    sp.add_argument("--tau-c", type=float, default=None)
    _add_common(sp)
    sp.set_defaults(func=cmd_evolve)

    sp = sub.add_parser("ensemble", help="Monte-Carlo decoherence ensemble")
    sp.add_argument("--N", type=int, default=400)
    sp.add_argument("--T", type=float, default=48.0)
    sp.add_argument("--steps", type=int, default=1600)
    sp.add_argument("--probes", default="8,16")
    sp.add_argument("--propagator", default="ansatz", choices=["ansatz", "pde"])
    sp.add_argument("--out-every", type=int, default=10)
    _add_common(sp)
    sp.set_defaults(func=cmd_ensemble)

    sp = sub.add_parser("master", help="k-space master-equation validator")
    sp.add_argument("--grid-n", type=int, default=8)
    sp.add_argument("--rmin", type=float, default=0.25)
    sp.add_argument("--rmax", type=float, default=2.5)
    sp.add_argument("--M", type=int, default=48)
    sp.add_argument("--gamma", type=float, default=None,
                    help="override the physical coupling")
    sp.add_argument("--t-final", type=float, default=0.1)
    sp.add_argument("--dt", type=float, default=1e-3)
    sp.add_argument("--order", default="gamma",
                    choices=["sqrt_gamma", "gamma"])
    sp.add_argument("--out-every", type=int, default=10)
    sp.add_argument("--noise-mode", default="white",
                    choices=["white", "expmem"])
    sp.add_argument("--tau-c", type=float, default=None)
    _add_common(sp)
    sp.set_defaults(func=cmd_master)

    sp = sub.add_parser("sweep", help="decoherence-time mass scaling")
    sp.add_argument("--masses", default="0.5,1,2")
    sp.add_argument("--r1", type=float, default=8.0)
    sp.add_argument("--r2", type=float, default=16.0)
    sp.add_argument("--N", type=int, default=200)
    _add_common(sp)
    sp.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:      # argparse exits 2 on usage errors already
        return int(exc.code or 0)
    if args.threads:
        os.environ.setdefault("OMP_NUM_THREADS", str(args.threads))
        os.environ.setdefault("OPENBLAS_NUM_THREADS", str(args.threads))
    t0 = time.time()
    try:
        p = _params_from_args(args)
    except (ParamsError, OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out_dir = Path(args.out_dir)
    manifest = _manifest(args, p, args.command)
    try:
        rc = args.func(args, p, out_dir, manifest)
    except ParamsError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (SolverError, QuadratureError, KernelError, MasterEqError,
            FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    _finish(manifest, out_dir, manifest.get("outputs_extra", []), t0)
    return rc


if __name__ == "__main__":
    sys.exit(main())
