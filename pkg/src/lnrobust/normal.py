"""Standard normal kernels, the winsorized quantile map and 1-d quadrature.

The scalar functions prefixed with an underscore are compiled with numba
(see :mod:`lnrobust._accel`) and are called from the other kernels.  The
public wrappers accept Python floats and raise the package exceptions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._accel import njit
from .errors import DegenerateBandError, QuadratureError, UnboundedQuantileError

SQRT2 = math.sqrt(2.0)
INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)

# Acklam's rational approximation, used as the starting point for Newton.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
A0, A1, A2, A3, A4, A5 = _A
B0, B1, B2, B3, B4 = _B
C0, C1, C2, C3, C4, C5 = _C
D0, D1, D2, D3 = _D


@njit
def _pdf(x):
    if math.isinf(x):
        return 0.0
    return INV_SQRT2PI * math.exp(-0.5 * x * x)


@njit
def _cdf(x):
    return 0.5 * math.erfc(-x / SQRT2)


@njit
def _sf(x):
    return 0.5 * math.erfc(x / SQRT2)


@njit
def _ppf_lower(q):
    # q in (0, 0.5]; returns the (negative) quantile with relative accuracy
    if q < 0.02425:
        r = math.sqrt(-2.0 * math.log(q))
        x = (((((C0 * r + C1) * r + C2) * r + C3) * r + C4) * r + C5) / \
            ((((D0 * r + D1) * r + D2) * r + D3) * r + 1.0)
    else:
        r = q - 0.5
        s = r * r
        x = (((((A0 * s + A1) * s + A2) * s + A3) * s + A4) * s + A5) * r / \
            (((((B0 * s + B1) * s + B2) * s + B3) * s + B4) * s + 1.0)
    for _ in range(3):
        e = _cdf(x) - q
        dens = _pdf(x)
        if dens <= 0.0:
            break
        u = e / dens
        x = x - u / (1.0 + 0.5 * x * u)
    return x


@njit
def _ppf(p):
    if p <= 0.0:
        return -math.inf
    if p >= 1.0:
        return math.inf
    if p <= 0.5:
        return _ppf_lower(p)
    return -_ppf_lower(1.0 - p)


@njit
def _ppf_sf(q):
    """Quantile at upper-tail probability ``q`` (i.e. at ``1 - q``)."""
    if q <= 0.0:
        return math.inf
    if q >= 1.0:
        return -math.inf
    if q <= 0.5:
        return -_ppf_lower(q)
    return _ppf_lower(1.0 - q)


@njit
def _delta(s, gamma):
    # Phi^{-1}(s + (1 - s) Phi(gamma)) evaluated through the survival side,
    # 1 - v = (1 - s) * sf(gamma), which keeps precision when gamma is large.
    if s <= 0.0:
        return gamma
    if gamma == -math.inf:
        return _ppf(s)
    q = (1.0 - s) * _sf(gamma)
    if q >= 0.5:
        return _ppf(s + (1.0 - s) * _cdf(gamma))
    return _ppf_sf(q)


@njit
def _vec_cdf(x):
    out = np.empty(x.shape[0])
    for i in range(x.shape[0]):
        out[i] = _cdf(x[i])
    return out


@njit
def _vec_ppf(p):
    out = np.empty(p.shape[0])
    for i in range(p.shape[0]):
        out[i] = _ppf(p[i])
    return out


def std_normal_pdf(x):
    return _pdf(float(x))


def std_normal_cdf(x):
    return _cdf(float(x))


def std_normal_sf(x):
    return _sf(float(x))


def std_normal_quantile(p):
    """Inverse of the standard normal cdf.

    Raises
    ------
    UnboundedQuantileError
        If ``p`` is 0 or 1 (or outside the unit interval).
    """
    p = float(p)
    if not 0.0 < p < 1.0:
        raise UnboundedQuantileError(f"quantile of probability {p!r} is unbounded")
    return _ppf(p)


def cdf_array(x):
    return _vec_cdf(np.ascontiguousarray(x, dtype=float))


def quantile_array(p):
    return _vec_ppf(np.ascontiguousarray(p, dtype=float))


def delta(s, gamma):
    """Quantile of the standard normal truncated below at ``gamma``.

    Equals ``Phi^{-1}(s + (1 - s) * Phi(gamma))``; with ``gamma = -inf`` this is
    plain ``Phi^{-1}(s)``.
    """
    s, gamma = float(s), float(gamma)
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"s must lie in [0, 1], got {s}")
    lower = s + (1.0 - s) * _cdf(gamma)
    upper_tail = (1.0 - s) * _sf(gamma)
    if lower <= 0.0 or upper_tail <= 0.0:
        raise UnboundedQuantileError(f"delta({s}, {gamma}) diverges")
    return _delta(s, gamma)


def omega_pair(gamma, xi):
    """Inverse-Mills-type ratios of the band ``(gamma, xi)``.

    Returns ``(phi(gamma), phi(xi)) / (sf(gamma) - sf(xi))``.
    """
    gamma, xi = float(gamma), float(xi)
    if not gamma < xi:
        raise DegenerateBandError(f"need gamma < xi, got {gamma} >= {xi}")
    den = _band_mass(gamma, xi)
    return _pdf(gamma) / den, _pdf(xi) / den


@njit
def _band_mass(lo, hi):
    # Phi(hi) - Phi(lo), from whichever tail keeps precision
    if lo > 0.0:
        return _sf(lo) - _sf(hi)
    return _cdf(hi) - _cdf(lo)


@dataclass(frozen=True)
class QuadratureSpec:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-8
    max_subdivisions: int = 200

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("quadrature tolerances must be positive")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be at least 1")


DEFAULT_QUADRATURE = QuadratureSpec()
ENDPOINT_INSET = 1e-12

_GL_X, _GL_W = np.polynomial.legendre.leggauss(15)
_GL_X_LOW, _GL_W_LOW = np.polynomial.legendre.leggauss(7)


def _panel(f, lo, hi):
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    hi_order = half * sum(w * f(mid + half * x) for x, w in zip(_GL_X, _GL_W))
    lo_order = half * sum(w * f(mid + half * x) for x, w in zip(_GL_X_LOW, _GL_W_LOW))
    return hi_order, abs(hi_order - lo_order)


def integrate(f, lo, hi, spec=DEFAULT_QUADRATURE):
    """Adaptive Gauss-Legendre quadrature of ``f`` over ``[lo, hi]``.

    Panels are bisected, worst error first, until the summed error estimate
    is below ``max(abs_tol, rel_tol * |estimate|)``.  Endpoints at 0 or 1 are
    pulled inward by 1e-12 so that integrands built on ``Phi^{-1}`` stay finite.
    """
    lo, hi = float(lo), float(hi)
    if hi < lo:
        raise ValueError("integrate requires lo <= hi")
    if lo == hi:
        return 0.0
    if lo == 0.0:
        lo = ENDPOINT_INSET
    if hi == 1.0:
        hi = 1.0 - ENDPOINT_INSET
    value, err = _panel(f, lo, hi)
    panels = [(err, lo, hi, value)]
    splits = 0
    while True:
        total = math.fsum(p[3] for p in panels)
        total_err = math.fsum(p[0] for p in panels)
        if total_err <= max(spec.abs_tol, spec.rel_tol * abs(total)):
            return total
        if splits >= spec.max_subdivisions:
            raise QuadratureError(
                f"no convergence after {splits} subdivisions (error estimate {total_err:.3g})",
                estimate=total)
        panels.sort(key=lambda p: p[0])
        err, a, b, _ = panels.pop()
        m = 0.5 * (a + b)
        for a2, b2 in ((a, m), (m, b)):
            v, e = _panel(f, a2, b2)
            panels.append((e, a2, b2, v))
        splits += 1
