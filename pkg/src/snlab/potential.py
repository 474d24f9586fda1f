"""Self-potential of a Gaussian packet and the stochastic-potential correlator.

Three building-block averages over the normalized density rho_w(x) =
pi^(-3/2) w^(-3) exp(-x^2/w^2) appear again and again downstream; all probe
points sit on a common ray through the origin (the states are spherically
symmetric, so only the separation geometry matters):

    S(r; w)      = <1/|x - r|>          = erf(r/w)/r
    Q(r; w)      = <1/|x - r|^2>        = 2*dawson(r/w)/(r*w)
    P(r1,r2; w)  = <1/(|x - r1||x - r2|)>   (two-center)

S and Q are closed forms; P is reduced in prolate-spheroidal coordinates with
foci at the two probe points, where the product of distances cancels against
the volume element and the integrand becomes a smooth Gaussian -- both
Coulomb singularities disappear analytically and Gauss-Legendre quadrature
converges to machine precision.
"""

from __future__ import annotations

import numpy as np

from .gaussian import GaussianPacket
from .params import ParamsError, SimParams
from .special import dawson

__all__ = [
    "single_center",
    "inverse_square_center",
    "two_center",
    "mean_potential_gaussian",
    "mean_potential_grid",
    "stochastic_correlator",
    "correlator_matrix",
    "dephasing_kernel",
    "QuadratureError",
]

_TWO_OVER_SQRTPI = 2.0 / np.sqrt(np.pi)


class QuadratureError(RuntimeError):
    """Two-center quadrature failed its internal convergence check."""


def single_center(r, w=1.0):
    """<1/|x - r|> over a Gaussian density of width w: erf(r/w)/r.

    The r -> 0 limit 2/(sqrt(pi) w) is substituted below a switchover where
    the series form is more accurate than the ratio.
    """
    from scipy.special import erf

    r = np.asarray(r, dtype=float)
    w = np.asarray(w, dtype=float)
    x = np.divide(r, w)
    small = x < 1e-6
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(small, _TWO_OVER_SQRTPI / np.where(w > 0, w, 1.0), erf(x) / np.where(r > 0, r, 1.0))
    return out if out.ndim else float(out)


def inverse_square_center(r, w=1.0):
    """<1/|x - r|^2> over a Gaussian density of width w: 2*dawson(r/w)/(r*w).

    Equals sqrt(pi)/(r w) * exp(-r^2/w^2) * erfi(r/w), evaluated through the
    scaled route so large r/w cannot overflow.  Limit 2/w^2 at r = 0.
    """
    r = np.asarray(r, dtype=float)
    w = np.asarray(w, dtype=float)
    x = np.divide(r, w)
    small = x < 1e-6
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(small, 2.0 / (w * w), 2.0 * dawson(x) / np.where(r > 0, r * w, 1.0))
    return out if out.ndim else float(out)


def _gauss_legendre(n: int):
    # cached nodes/weights on [-1, 1]
    key = int(n)
    cache = _gauss_legendre.__dict__.setdefault("cache", {})
    if key not in cache:
        cache[key] = np.polynomial.legendre.leggauss(key)
    return cache[key]


def _two_center_axis(r0, w):
    # <1/(|x| |x - r0|)>: one probe at the origin.  Angular average of the
    # off-origin factor is 1/max(|x|, r0) (shell value); the two radial
    # pieces are then elementary:
    #   int_0^r0  4 pi x rho / r0 dx = -2 expm1(-r0^2/w^2) / (sqrt(pi) w r0)
    #   int_r0^oo 4 pi rho dx        =  2 erfc(r0/w) / w^2
    from scipy.special import erfc

    r0 = np.asarray(r0, dtype=float)
    w = np.asarray(w, dtype=float)
    x = r0 / w
    inner = -2.0 * np.expm1(-x * x) / (np.sqrt(np.pi) * w * r0)
    outer = 2.0 * erfc(x) / (w * w)
    return inner + outer


def two_center(r1, r2, w=1.0, nodes: int = 48, check: bool = True):
    """<1/(|x - r1||x - r2|)> for two collinear probes, Gaussian width w.

    Prolate-spheroidal reduction with foci at the probes: with
    R = |r2 - r1|, z0 = (r1 + r2)/2, the average becomes

        2*pi*(R/2) * int_1^inf dmu int_-1^1 dnu rho(x(mu, nu)),

    a smooth integrand (the 1/(d1 d2) singularities cancel the Jacobian
    exactly).  mu is truncated where the Gaussian has decayed below 1e-40.
    Supports broadcasting over r1/r2/w arrays.
    """
    r1 = np.asarray(r1, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    w = np.asarray(w, dtype=float)
    r1, r2, w = np.broadcast_arrays(r1, r2, w)
    scalar = r1.ndim == 0
    r1 = np.atleast_1d(r1).astype(float)
    r2 = np.atleast_1d(r2).astype(float)
    w = np.atleast_1d(w).astype(float)
    if np.any(r1 < 0) or np.any(r2 < 0):
        raise ParamsError("two_center requires nonnegative radii")

    lo = np.minimum(r1, r2)
    hi = np.maximum(r1, r2)
    out = np.empty_like(lo)

    # degenerate separations: coincident probes reduce to the inverse-square
    # moment, a probe at the origin to the 1-D shell integral.  When both
    # probes sit >= 10 w from the origin the density is a far "needle" whose
    # image in the (mu, nu) square is too small for any fixed rule to find,
    # so that regime goes through the multipole series instead.
    coincident = (hi - lo) <= 1e-9 * np.maximum(w, hi)
    at_origin = (lo <= 1e-12 * w) & ~coincident
    far = (lo >= 10.0 * w) & ~(coincident | at_origin)
    generic = ~(coincident | at_origin | far)

    if np.any(coincident):
        mid = 0.5 * (lo[coincident] + hi[coincident])
        out[coincident] = inverse_square_center(mid, w[coincident])
    if np.any(at_origin):
        out[at_origin] = _two_center_axis(hi[at_origin], w[at_origin])
    if np.any(far):
        out[far] = _two_center_far(lo[far], hi[far], w[far])
    if np.any(generic):
        out[generic] = _two_center_prolate(
            lo[generic], hi[generic], w[generic], nodes, check
        )
    out = out.reshape(np.broadcast_shapes(np.shape(r1), np.shape(r2), np.shape(w)))
    return float(out[0]) if scalar else out


def _two_center_far(r1, r2, w):
    # Both probes beyond 10 w: same-axis Legendre expansion with both 1/d
    # factors in their exterior series, radially integrated against the
    # Gaussian in closed form (<r^{2l}> = w^{2l} (2l+1)!! / 2^l):
    #
    #   P = (1/(r1 r2)) sum_l (2l-1)!! (w^2 / (2 r1 r2))^l
    #
    # The density mass outside min(r1, r2), where the exterior series is the
    # wrong branch, is erfc(10)-sized (< 1e-44) and is dropped.  The series
    # ratio (2l-1) w^2/(2 r1 r2) stays below 1e-2 here, so a few dozen terms
    # reach float64 round-off.
    x = w * w / (2.0 * r1 * r2)
    term = np.ones_like(x)
    acc = np.ones_like(x)
    for l in range(1, 80):
        term = term * (2 * l - 1) * x
        acc = acc + term
        if np.all(term <= 1e-17 * acc):
            break
    return acc / (r1 * r2)


_PROLATE_CHUNK = 5_000_000   # max pairs * n^2 elements materialized at once


def _two_center_prolate(r1, r2, w, nodes, check):
    R = r2 - r1
    z0 = 0.5 * (r1 + r2)
    mu_max = 1.0 + (2.0 / R) * (z0 + 10.0 * w)

    def evaluate(n, sel):
        xg, wg = _gauss_legendre(n)
        vals = np.empty(sel.size)
        block = max(1, _PROLATE_CHUNK // (n * n))
        for b in range(0, sel.size, block):
            ss = sel[b:b + block]
            # mu in [1, mu_max] per pair, nu in [-1, 1]
            mu = 1.0 + (mu_max[ss, None] - 1.0) * 0.5 * (xg + 1.0)   # (blk, n)
            jmu = 0.5 * (mu_max[ss] - 1.0)                            # (blk,)
            half_R = 0.5 * R[ss]
            z = z0[ss, None, None] + half_R[:, None, None] * mu[:, :, None] * xg[None, None, :]
            s2 = (half_R[:, None, None] ** 2) * (
                (mu[:, :, None] ** 2 - 1.0) * (1.0 - xg[None, None, :] ** 2)
            )
            x2 = z * z + s2
            ww = w[ss, None, None]
            rho = np.pi ** (-1.5) * ww ** (-3.0) * np.exp(-x2 / (ww * ww))
            inner = np.einsum("pmn,n->pm", rho, wg)
            vals[b:b + block] = 2.0 * np.pi * half_R * jmu * np.einsum("pm,m->p", inner, wg)
        return vals

    active = np.arange(R.size)
    out = evaluate(nodes, active)
    if not check:
        return out
    # node-doubling ladder, refined per pair: widely separated probes squeeze
    # the Gaussian into a small corner of the (mu, nu) square and need a
    # denser rule, but most pairs converge at the base count.  Two rules
    # agreeing on a value below the provable floor
    #     P >= mass(|x| <= 10 w) / ((r1 + 10 w)(r2 + 10 w))
    # have both missed the density spot, so that never counts as converged.
    floor = 0.99 / ((r1 + 10.0 * w) * (r2 + 10.0 * w))
    n = nodes
    worst = np.inf
    for _ in range(4):
        n = 2 * n
        ref = evaluate(n, active)
        err = np.abs(out[active] - ref)
        tol = 1e-10 * np.maximum(np.abs(ref), 1e-300) + 1e-14
        out[active] = ref
        still = (err > tol) | (ref < floor[active])
        if not np.any(still):
            return out
        worst = float(np.max(err[still] / np.maximum(np.abs(ref[still]), 1e-300)))
        active = active[still]
    raise QuadratureError(
        f"two-center quadrature not converged (worst rel err {worst:.2e} "
        f"at {n} nodes); increase nodes"
    )


# -- potentials and correlators ----------------------------------------------


def mean_potential_gaussian(packet: GaussianPacket, p: SimParams, r, t=0.0):
    """Mean self-potential energy -G m^2 erf(r/w(t))/r of the free packet."""
    return -p.G * p.m**2 * single_center(r, packet.width(t))


def mean_potential_grid(r_grid: np.ndarray, density: np.ndarray, p: SimParams):
    """Self-potential energy on a radial grid for an arbitrary radial density.

    For spherically symmetric rho:
        V(r) = -4 pi G m^2 [ (1/r) int_0^r rho x^2 dx + int_r^inf rho x dx ],
    accumulated with cumulative trapezoids.  density must be the radial
    probability density (4 pi int rho r^2 dr = 1, checked to 1e-6) on at
    least 16 points.
    """
    r = np.asarray(r_grid, dtype=float)
    rho = np.asarray(density, dtype=float)
    if r.size < 16:
        raise ParamsError("grid too coarse for potential integration (need >= 16 points)")
    norm = 4.0 * np.pi * np.trapezoid(rho * r * r, r)
    if abs(norm - 1.0) > 1e-6:
        raise ParamsError(f"density not normalized: 4pi int rho r^2 dr = {norm!r}")

    inner_x2 = rho * r * r
    inner = np.concatenate(
        ([0.0], np.cumsum(0.5 * (inner_x2[1:] + inner_x2[:-1]) * np.diff(r)))
    )
    outer_x = rho * r
    outer_tail = np.concatenate(
        ([0.0], np.cumsum(0.5 * (outer_x[1:] + outer_x[:-1]) * np.diff(r)))
    )
    outer = outer_tail[-1] - outer_tail
    with np.errstate(divide="ignore", invalid="ignore"):
        V = np.where(r > 0, inner / np.where(r > 0, r, 1.0), 0.0) + outer
    # r = 0 value: all mass is "outer"
    return -4.0 * np.pi * p.G * p.m**2 * V


def stochastic_correlator(packet: GaussianPacket, p: SimParams, r, rp, t=0.0, nodes: int = 48):
    """Equal-time two-point correlator of the stochastic potential.

    C(r, r'; t) = (G^2 m^2 / 4) [ P(r, r'; w(t)) - S(r; w) S(r'; w) ], i.e.
    (G m)^2/4 times the covariance of 1/|x - r| and 1/|x - r'| under the
    instantaneous packet density -- manifestly symmetric and positive
    semidefinite as a kernel.  Units: potential-per-mass squared; multiply by
    m^2 for the potential-energy channel.
    """
    w = packet.width(t)
    P = two_center(r, rp, w, nodes=nodes)
    S1 = single_center(r, w)
    S2 = single_center(rp, w)
    return 0.25 * p.G**2 * p.m**2 * (P - S1 * S2)


def correlator_matrix(packet: GaussianPacket, p: SimParams, r_grid, t=0.0, nodes: int = 48):
    """Stochastic-potential correlator tabulated on a radial grid (symmetric)."""
    r = np.asarray(r_grid, dtype=float)
    iu, ju = np.triu_indices(r.size)
    vals = stochastic_correlator(packet, p, r[iu], r[ju], t=t, nodes=nodes)
    C = np.empty((r.size, r.size))
    C[iu, ju] = vals
    C[ju, iu] = vals
    return C


def dephasing_kernel(packet: GaussianPacket, p: SimParams, r_grid, t=0.0, nodes: int = 48):
    """Second moment of the randomized potential-energy model on a grid.

    The decoherence ensemble draws the mean self-potential channel with a
    unit-normal random scale and adds the zero-mean fluctuation field, so the
    total potential-energy second moment is

        M = Vbar (x) Vbar + m^2 C = (G^2 m^4 / 4) (3 S(x)S + P),

    the kernel whose quadratic form drives measured phase variances.
    """
    r = np.asarray(r_grid, dtype=float)
    w = packet.width(t)
    S = single_center(r, w)
    iu, ju = np.triu_indices(r.size)
    P = np.empty((r.size, r.size))
    vals = two_center(r[iu], r[ju], w, nodes=nodes)
    P[iu, ju] = vals
    P[ju, iu] = vals
    pref = 0.25 * p.G**2 * p.m**4
    return pref * (3.0 * np.outer(S, S) + P)
