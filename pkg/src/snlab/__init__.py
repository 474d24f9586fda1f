"""Numerical laboratory for gravitational decoherence of spreading wavepackets.

Subpackages cover: parameter handling and derived scales (params), the free
Gaussian reference solution (gaussian), scaled error-function numerics
(special), Coulomb-kernel moments of Gaussian densities (potential),
accumulated-phase variance estimates (phasevar), Gaussian random fields with
prescribed covariance (noise), split-step radial evolution (evolve),
Monte-Carlo decoherence ensembles (ensemble), and a toy-scale non-Markovian
master-equation validator (mastereq).
"""

__version__ = "0.1.0"

from ._backend import USING_COMPILED, backend_name
from .ensemble import (CoherenceDecay, EnsembleConfig, EnsembleDensityMatrix,
                       coherence_decay, extract_decoherence_time, mass_sweep,
                       run_ensemble)
from .evolve import (EvolveConfig, GridSpec, RadialState, SolverError,
                     TrajectoryResult, evolve_run, oscillation_about,
                     phase_ansatz_check, state_from_packet)
from .gaussian import GaussianPacket, accel_balance
from .mastereq import (DKernel, KGrid, MasterEqError, MasterResult,
                       build_dkernel, build_kgrid, effective_position_kernel,
                       evolve_master, physical_gamma)
from .noise import (KernelError, NoiseModel, NoiseRealization, build_model,
                    load_binary, moment_report, sample, save_binary,
                    symmetric_sqrt, trajectory_rng)
from .params import (DerivedScales, ParamsError, SimParams, apply_overrides,
                     classify_regime, critical_length_extended, derive_scales,
                     load_config)
from .phasevar import (PhaseVarianceResult, bracket_term, decoherence_time,
                       method_ladder, phase_variance_asymptote,
                       phase_variance_closed_form, phase_variance_quadrature,
                       small_time_bound)
from .potential import (QuadratureError, correlator_matrix, dephasing_kernel,
                        inverse_square_center, mean_potential_gaussian,
                        mean_potential_grid, single_center,
                        stochastic_correlator, two_center)
from .special import dawson, erfi, erfi_scaled

__all__ = [
    "__version__",
    "USING_COMPILED", "backend_name",
    "SimParams", "DerivedScales", "ParamsError", "derive_scales",
    "classify_regime", "critical_length_extended", "load_config",
    "apply_overrides",
    "GaussianPacket", "accel_balance",
    "dawson", "erfi", "erfi_scaled",
    "QuadratureError", "single_center", "inverse_square_center", "two_center",
    "mean_potential_gaussian", "mean_potential_grid", "stochastic_correlator",
    "correlator_matrix", "dephasing_kernel",
    "PhaseVarianceResult", "phase_variance_quadrature",
    "phase_variance_closed_form", "phase_variance_asymptote", "bracket_term",
    "small_time_bound", "decoherence_time", "method_ladder",
    "KernelError", "NoiseModel", "NoiseRealization", "symmetric_sqrt",
    "build_model", "trajectory_rng", "sample", "save_binary", "load_binary",
    "moment_report",
    "GridSpec", "RadialState", "EvolveConfig", "TrajectoryResult",
    "SolverError", "evolve_run", "state_from_packet", "oscillation_about",
    "phase_ansatz_check",
    "EnsembleConfig", "EnsembleDensityMatrix", "CoherenceDecay",
    "run_ensemble", "coherence_decay", "extract_decoherence_time",
    "mass_sweep",
    "KGrid", "DKernel", "MasterResult", "MasterEqError", "build_kgrid",
    "build_dkernel", "evolve_master", "physical_gamma",
    "effective_position_kernel",
]
