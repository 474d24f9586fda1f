"""Scaled special functions for the Gaussian-packet closed forms.

Every analytic expression in this package that involves erfi pairs it with a
Gaussian damping factor, so the quantity actually needed is

    erfi_scaled(x) = exp(-x**2) * erfi(x) = (2/sqrt(pi)) * dawson(x),

which stays O(1/x) for large x while erfi alone overflows float64 near
x = 26.6.  We therefore never evaluate erfi raw on hot paths; the scaled
product is computed through a dedicated Dawson-integral routine with three
regimes (Maclaurin series, exponentially convergent sampling sum, asymptotic
series).  ``scipy.special.dawsn`` is deliberately *not* called here so the
test suite can use it as an independent oracle.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "dawson",
    "erfi_scaled",
    "erfi",
    "ERFI_OVERFLOW_X",
]

# naive erfi(x) ~ exp(x^2)/(x sqrt(pi)) passes float64 max near x = 26.6
ERFI_OVERFLOW_X = 26.0

# Rybicki sampling parameter: discretization error ~ exp(-pi^2/(4 h^2)) ~ 7e-18
_RYBICKI_H = 0.25
_RYBICKI_TERMS = 28  # one-sided count of odd offsets; e^{-(28*0.25)^2} << 1e-18


def _dawson_series(x: np.ndarray) -> np.ndarray:
    # Maclaurin: F(x) = sum_k (-2)^k x^(2k+1) / (2k+1)!!, |x| <= 0.5
    acc = np.zeros_like(x)
    term = x.copy()
    k = 0
    while True:
        acc = acc + term
        k += 1
        term = term * (-2.0) * x * x / (2 * k + 1)
        if np.all(np.abs(term) <= 1e-18 * (np.abs(acc) + 1e-300)):
            break
        if k > 40:  # unreachable for |x| <= 0.5, defensive
            break
    return acc


def _dawson_rybicki(x: np.ndarray) -> np.ndarray:
    # F(x) = (1/sqrt(pi)) * sum over odd n of exp(-(x - n h)^2)/n, sampled
    # about the nearest odd multiple of h.  Exponentially accurate in 1/h.
    h = _RYBICKI_H
    n0 = 2 * np.floor(x / (2 * h)).astype(np.int64) + 1  # odd
    out = np.zeros_like(x)
    for j in range(-_RYBICKI_TERMS, _RYBICKI_TERMS + 1):
        n = n0 + 2 * j
        d = x - n * h
        out += np.exp(-d * d) / n
    return out / np.sqrt(np.pi)


def _dawson_asymptotic(x: np.ndarray) -> np.ndarray:
    # F(x) ~ 1/(2x) * sum_k (2k-1)!!/(2x^2)^k, truncated before divergence;
    # the k=11 tail is ~7e-16 relative at x = 10 and shrinks like x^-22.
    inv2x2 = 1.0 / (2.0 * x * x)
    term = np.ones_like(x)
    acc = np.ones_like(x)
    for k in range(1, 12):
        term = term * (2 * k - 1) * inv2x2
        acc = acc + term
    return acc / (2.0 * x)


def dawson(x):
    """Dawson integral F(x) = exp(-x^2) * int_0^x exp(t^2) dt.

    Vectorized, odd in x, relative accuracy ~1e-15 over the real line.
    """
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    ax = np.abs(x)
    out = np.empty_like(x)

    small = ax <= 0.5
    large = ax >= 10.0
    mid = ~(small | large)
    if np.any(small):
        out[small] = _dawson_series(x[small])
    if np.any(mid):
        out[mid] = np.sign(x[mid]) * _dawson_rybicki(ax[mid])
    if np.any(large):
        out[large] = np.sign(x[large]) * _dawson_asymptotic(ax[large])
    return out[0] if scalar else out


def erfi_scaled(x):
    """exp(-x^2) * erfi(x), overflow-free for all float64 x."""
    return (2.0 / np.sqrt(np.pi)) * dawson(x)


def erfi(x):
    """Raw erfi(x); raises for |x| > ERFI_OVERFLOW_X where float64 overflows.

    Exists only for small-argument convenience and for tests that confirm the
    scaled path is used beyond the overflow threshold.
    """
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > ERFI_OVERFLOW_X):
        raise OverflowError(
            f"erfi overflows float64 for |x| > {ERFI_OVERFLOW_X}; "
            "use erfi_scaled (= exp(-x^2)*erfi(x)) instead"
        )
    return np.exp(x * x) * erfi_scaled(x)
