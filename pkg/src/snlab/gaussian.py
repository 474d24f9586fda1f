"""Free Gaussian wave packet closed forms and acceleration-balance estimates.

The packet is the spherically symmetric minimum-uncertainty Gaussian of width
a spreading under free evolution.  Everything here is a pure function of
(m, a, hbar, t, r); grid-based states live in the evolve module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .params import ParamsError, SimParams

__all__ = ["GaussianPacket", "accel_balance"]


@dataclass(frozen=True)
class GaussianPacket:
    m: float
    a: float
    hbar: float = 1.0

    def __post_init__(self) -> None:
        if min(self.m, self.a, self.hbar) <= 0:
            raise ParamsError("GaussianPacket needs positive m, a, hbar")

    @classmethod
    def from_params(cls, p: SimParams) -> "GaussianPacket":
        return cls(m=p.m, a=p.a, hbar=p.hbar)

    # -- spreading kinematics -------------------------------------------------

    def spread_rate(self) -> float:
        """hbar / (m a^2): inverse of the spreading timescale."""
        return self.hbar / (self.m * self.a**2)

    def alpha(self, t):
        """Spread factor alpha(t) = 1/(1 + (hbar t / m a^2)^2), in (0, 1]."""
        x = np.asarray(t, dtype=float) * self.spread_rate()
        return 1.0 / (1.0 + x * x)

    def width(self, t):
        """Density 1/e radius w(t) = a / sqrt(alpha) = a sqrt(1 + (t/tau)^2)."""
        return self.a / np.sqrt(self.alpha(t))

    def peak_radius(self, t):
        """Radius where the radial density 4 pi r^2 |psi|^2 peaks: equals w(t)."""
        return self.width(t)

    # -- wavefunction ---------------------------------------------------------

    def psi(self, r, t):
        """Complex amplitude psi(r, t), normalized over d^3r.

        The complex width factor (1 + i t/tau)^(-3/2) is evaluated through the
        principal-branch log so large t cannot wander across a branch cut.
        """
        r = np.asarray(r, dtype=float)
        if np.any(r < 0):
            raise ParamsError("psi requires r >= 0")
        z = 1.0 + 1j * np.asarray(t, dtype=float) * self.spread_rate()
        prefac = (math.pi * self.a**2) ** (-0.75) * np.exp(-1.5 * np.log(z))
        return prefac * np.exp(-(r * r) / (2.0 * self.a**2 * z))

    def density(self, r, t):
        """|psi|^2 = pi^(-3/2) w^(-3) exp(-r^2/w^2)."""
        w = self.width(t)
        r = np.asarray(r, dtype=float)
        return math.pi ** (-1.5) * w ** (-3.0) * np.exp(-(r * r) / (w * w))


def accel_balance(p: SimParams, r_p: float, R: float | None = None) -> dict:
    """Outward quantum acceleration vs inward gravity at radius r_p.

    quantum = hbar^2/(m^2 r_p^3); point-source gravity = G m / r_p^2;
    interior (uniform ball of radius R) gravity = G m r_p / R^3.
    The point variants balance at r_p = hbar^2/(G m^3), the interior pair at
    r_p = (hbar^2 R^3 / (G m^3))^(1/4).
    """
    if r_p <= 0:
        raise ParamsError("r_p must be positive")
    out = {
        "quantum_accel": p.hbar**2 / (p.m**2 * r_p**3),
        "gravity_accel_point": p.G * p.m / r_p**2,
    }
    if R is not None:
        if R <= 0:
            raise ParamsError("R must be positive")
        out["gravity_accel_interior"] = p.G * p.m * r_p / R**3
    return out
