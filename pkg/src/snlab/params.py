"""Physical parameters, unit conventions, and derived scales.

All numerics run in "natural simulation units": hbar = G = 1 by default with
the mass m and packet width a free.  SI conversion factors may be carried in
configs for reporting but never enter computations.
"""

from __future__ import annotations

import math
try:
    import tomllib
except ModuleNotFoundError:        # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, replace
from pathlib import Path

__all__ = [
    "SimParams",
    "DerivedScales",
    "ParamsError",
    "derive_scales",
    "classify_regime",
    "critical_length_extended",
    "load_config",
    "apply_overrides",
]


class ParamsError(ValueError):
    """Invalid physical parameters or config contents."""


_CONFIG_KEYS = {
    "mass": "m",
    "width": "a",
    "hbar": "hbar",
    "G": "G",
    "c": "c",
    "criterion_constant": "criterion_constant",
    "regime_ratio": "regime_ratio",
}


@dataclass(frozen=True)
class SimParams:
    """Primitive inputs; everything else in the package derives from these.

    criterion_constant is the dimensionless phase-variance threshold used by
    decoherence-time extraction (conventionally "of order pi^2 ~ 1"; we keep
    it explicit and configurable).  regime_ratio is the factor used to decide
    when an inequality counts as "much less/greater than".
    """

    m: float = 1.0
    a: float = 1.0
    hbar: float = 1.0
    G: float = 1.0
    c: float = 1.0
    criterion_constant: float = math.pi**2
    regime_ratio: float = 10.0

    def __post_init__(self) -> None:
        for name in ("m", "a", "hbar", "G", "c", "criterion_constant"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ParamsError(f"{name} must be a positive finite number, got {v!r}")
        if self.regime_ratio <= 1:
            raise ParamsError("regime_ratio must exceed 1")


@dataclass(frozen=True)
class DerivedScales:
    critical_length: float      # hbar^2 / (G m^3)
    threshold_mass: float       # (hbar^2 / (G a))^(1/3)
    tau_spread: float           # m a^2 / hbar
    decoherence_energy_scale: float  # G m^2 / a


def derive_scales(p: SimParams) -> DerivedScales:
    """Closed-form scales; pure function of the params (recompute == equal)."""
    return DerivedScales(
        critical_length=p.hbar**2 / (p.G * p.m**3),
        threshold_mass=(p.hbar**2 / (p.G * p.a)) ** (1.0 / 3.0),
        tau_spread=p.m * p.a**2 / p.hbar,
        decoherence_energy_scale=p.G * p.m**2 / p.a,
    )


def classify_regime(p: SimParams, R: float) -> str:
    """Classify an object of size R as 'micro', 'macro', or 'transition'.

    The discriminant is m^3 R against hbar^2/G, with the configurable ratio
    deciding how lopsided it must be to leave 'transition'.
    """
    if not (R > 0 and math.isfinite(R)):
        raise ParamsError(f"R must be positive and finite, got {R!r}")
    x = p.m**3 * R / (p.hbar**2 / p.G)
    if x < 1.0 / p.regime_ratio:
        return "micro"
    if x > p.regime_ratio:
        return "macro"
    return "transition"


def critical_length_extended(p: SimParams, R: float) -> dict:
    """Critical coherence length for an object of size R.

    Point-particle value hbar^2/(G m^3) in the micro regime; in the macro
    regime the interior-field estimate (hbar^2/(G m^3))^(1/4) * R^(3/4).
    In the transition band both candidates plus their geometric mean are
    returned, flagged.
    """
    regime = classify_regime(p, R)
    a_c = p.hbar**2 / (p.G * p.m**3)
    macro_val = a_c**0.25 * R**0.75
    if regime == "micro":
        return {"regime": regime, "value": a_c, "flagged": False}
    if regime == "macro":
        return {"regime": regime, "value": macro_val, "flagged": False}
    return {
        "regime": regime,
        "value": math.sqrt(a_c * macro_val),
        "micro_candidate": a_c,
        "macro_candidate": macro_val,
        "flagged": True,
    }


def load_config(path: str | Path) -> SimParams:
    """Read SimParams from a TOML file with keys mass, width, hbar, G, c,
    criterion_constant, regime_ratio (all optional, defaults apply)."""
    with open(path, "rb") as f:
        try:
            raw = tomllib.load(f)
        except tomllib.TOMLDecodeError as e:
            raise ParamsError(f"malformed config {path}: {e}") from e
    unknown = set(raw) - set(_CONFIG_KEYS)
    if unknown:
        raise ParamsError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {}
    for key, field in _CONFIG_KEYS.items():
        if key in raw:
            val = raw[key]
            if not isinstance(val, (int, float)) or isinstance(val, bool):
                raise ParamsError(f"config key {key} must be a number, got {val!r}")
            kwargs[field] = float(val)
    return SimParams(**kwargs)


def apply_overrides(p: SimParams, overrides: dict[str, str]) -> SimParams:
    """Apply CLI-style key=value overrides (keys as in the config file)."""
    kwargs = {}
    for key, sval in overrides.items():
        if key not in _CONFIG_KEYS:
            raise ParamsError(f"unknown parameter {key!r} (valid: {sorted(_CONFIG_KEYS)})")
        try:
            kwargs[_CONFIG_KEYS[key]] = float(sval)
        except ValueError as e:
            raise ParamsError(f"override {key}={sval!r} is not a number") from e
    return replace(p, **kwargs) if kwargs else p
