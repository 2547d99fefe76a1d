"""Winsorized-moment constants of the (left-truncated) standard normal.

For proportions ``a`` (lower) and ``b`` (upper) and truncation point ``gamma``
the constants are

    c_k = a * D(a)**k + int_a^{1-b} D(s)**k ds + b * D(1-b)**k,

with ``D(s) = Phi^{-1}(s + (1 - s) Phi(gamma))``.  Substituting ``s`` by the
normal cdf turns the integral into a truncated normal moment, which the
kernels below evaluate in closed form.  :func:`c_coeffs_quadrature` computes
the same quantities by direct quadrature of the definition.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._accel import njit
from .errors import QuadratureError
from .normal import DEFAULT_QUADRATURE, _delta, _pdf, _ppf_sf, _sf, delta, integrate


@dataclass(frozen=True)
class Proportions:
    """Lower (``a``) and upper (``b``) winsorizing or trimming proportions."""

    a: float = 0.0
    b: float = 0.0

    def __post_init__(self):
        a, b = float(self.a), float(self.b)
        if a < 0 or b < 0 or not a + b < 1:
            raise ValueError(f"need a, b >= 0 and a + b < 1 (got a={a}, b={b})")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    def counts(self, n):
        """``(m_n, m*_n) = (floor(n a), floor(n b))``."""
        # the 1e-9 guard keeps k/n proportions from flooring to k - 1
        return int(math.floor(n * self.a + 1e-9)), int(math.floor(n * self.b + 1e-9))


@njit
def _zpow_pdf(z, k):
    # z**k * phi(z), zero at the infinities
    if math.isinf(z):
        return 0.0
    return z ** k * _pdf(z)


@njit
def _truncated_moments(lo, hi, mass):
    """int_lo^hi z^k phi(z) dz for k = 1..4, given ``mass`` = Phi(hi) - Phi(lo)."""
    out = np.empty(4)
    out[0] = _pdf(lo) - _pdf(hi)
    out[1] = mass + _zpow_pdf(lo, 1) - _zpow_pdf(hi, 1)
    out[2] = 2.0 * (_pdf(lo) - _pdf(hi)) + _zpow_pdf(lo, 2) - _zpow_pdf(hi, 2)
    out[3] = 3.0 * mass + _zpow_pdf(lo, 3) + 3.0 * _zpow_pdf(lo, 1) \
        - _zpow_pdf(hi, 3) - 3.0 * _zpow_pdf(hi, 1)
    return out


@njit
def _g1(z):
    # antiderivative of sf(z) vanishing at +inf
    if z == math.inf:
        return 0.0
    return z * _sf(z) - _pdf(z)


@njit
def _g2(z):
    # antiderivative of z * sf(z) vanishing at +inf
    if z == math.inf:
        return 0.0
    return 0.5 * ((z * z - 1.0) * _sf(z) - z * _pdf(z))


@njit
def _ends(a, b, gamma):
    lo = gamma if a == 0.0 else _delta(a, gamma)
    # upper end from its tail probability b * sf(gamma), exact for tiny b
    hi = math.inf if b == 0.0 else _ppf_sf(b * _sf(gamma))
    return lo, hi


@njit
def _has_end(p, z):
    # an end point contributes only if its proportion is positive and the
    # density there is representable; otherwise the term is at its limit 0
    return p > 0.0 and _pdf(z) > 0.0


@njit
def c_values(a, b, gamma):
    """c_1..c_4 (winsorized) for proportions ``a``, ``b`` and truncation ``gamma``."""
    lo, hi = _ends(a, b, gamma)
    sg = _sf(gamma)
    mid = _truncated_moments(lo, hi, (1.0 - a - b) * sg)
    out = np.empty(4)
    for k in range(4):
        v = mid[k] / sg
        if _has_end(a, lo):
            v += a * lo ** (k + 1)
        if _has_end(b, hi):
            v += b * hi ** (k + 1)
        out[k] = v
    return out


@njit
def trimmed_c_values(a, b, gamma):
    """Trimmed analogues ``(1 / (1 - a - b)) int_a^{1-b} D(s)^k ds`` for k = 1, 2."""
    lo, hi = _ends(a, b, gamma)
    sg = _sf(gamma)
    mid = _truncated_moments(lo, hi, (1.0 - a - b) * sg)
    out = np.empty(2)
    scale = 1.0 / ((1.0 - a - b) * sg)
    out[0] = mid[0] * scale
    out[1] = mid[1] * scale
    return out


@njit
def dc_dgamma(a, b, gamma):
    """Partial derivatives of c_1 and c_2 with respect to ``gamma``.

    ``d c_k / d gamma = k phi(gamma) B_k`` where ``B_k`` is the bracket
    ``a(1-a) D(a)^{k-1}/phi(D(a)) + int s_bar D(s)^{k-1}/phi(D(s)) ds
    + b^2 D(1-b)^{k-1}/phi(D(1-b))``.
    """
    out = np.zeros(2)
    if gamma == -math.inf:
        return out
    lo, hi = _ends(a, b, gamma)
    sg = _sf(gamma)
    pg = _pdf(gamma)
    inner1 = (_g1(hi) - _g1(lo)) / (sg * sg)
    inner2 = (_g2(hi) - _g2(lo)) / (sg * sg)
    b1 = inner1
    b2 = inner2
    if _has_end(a, lo):
        pa = a * (1.0 - a) / _pdf(lo)
        b1 += pa
        b2 += pa * lo
    if _has_end(b, hi):
        pb = b * b / _pdf(hi)
        b1 += pb
        b2 += pb * hi
    out[0] = pg * b1
    out[1] = 2.0 * pg * b2
    return out


@njit
def cstar_values(a, b, gamma):
    """c*_1, c*_2, c*_3: scaled asymptotic (co)variances of the winsorized moments."""
    c = c_values(a, b, gamma)
    c1, c2, c3, c4 = c[0], c[1], c[2], c[3]
    lo, hi = _ends(a, b, gamma)
    sg = _sf(gamma)
    da = np.zeros(4)
    db = np.zeros(4)
    if _has_end(a, lo):
        pa = a * sg / _pdf(lo)
        for k in range(4):
            da[k] = pa * (k + 1) * lo ** k
    if _has_end(b, hi):
        pb = -b * sg / _pdf(hi)
        for k in range(4):
            db[k] = pb * (k + 1) * hi ** k
    ab = 1.0 - a
    bb = 1.0 - b
    s1 = (c2 - c1 * c1) - a * (da[1] - 2.0 * c1 * da[0]) - b * (db[1] - 2.0 * c1 * db[0]) \
        + a * ab * da[0] ** 2 + b * bb * db[0] ** 2 - 2.0 * a * b * da[0] * db[0]
    s2 = (c3 - c1 * c2) - a * (da[2] - (da[0] * c2 + c1 * da[1])) \
        - b * (db[2] - (db[0] * c2 + c1 * db[1])) \
        + a * ab * da[0] * da[1] + b * bb * db[0] * db[1] \
        - a * b * (da[0] * db[1] + db[0] * da[1])
    s3 = (c4 - c2 * c2) - a * (da[3] - 2.0 * c2 * da[1]) - b * (db[3] - 2.0 * c2 * db[1]) \
        + a * ab * da[1] ** 2 + b * bb * db[1] ** 2 - 2.0 * a * b * da[1] * db[1]
    out = np.empty(3)
    out[0] = s1
    out[1] = 0.5 * s2
    out[2] = 0.25 * s3
    return out


@dataclass(frozen=True)
class CCoefficients:
    """Winsorized-moment constants for one ``(a, b, gamma)``.

    ``dc_dgamma[k-1]`` is the derivative of ``c_k`` in ``gamma``; derivatives
    in ``theta`` and ``sigma`` follow from ``gamma = (t - theta) / sigma``.
    """

    a: float
    b: float
    gamma: float
    c: tuple
    dc_dgamma: tuple
    cstar: tuple

    @property
    def c1(self):
        return self.c[0]

    @property
    def c2(self):
        return self.c[1]

    @property
    def c3(self):
        return self.c[2]

    @property
    def c4(self):
        return self.c[3]

    @property
    def cstar1(self):
        return self.cstar[0]

    @property
    def cstar2(self):
        return self.cstar[1]

    @property
    def cstar3(self):
        return self.cstar[2]

    def dc_dtheta(self, sigma):
        return tuple(-g / sigma for g in self.dc_dgamma)

    def dc_dsigma(self, sigma):
        return tuple(-self.gamma * g / sigma for g in self.dc_dgamma) if math.isfinite(self.gamma) \
            else (0.0, 0.0)


def _props(props):
    return props if isinstance(props, Proportions) else Proportions(*props)


def c_coeffs_y(props, gamma):
    """Constants for payment-per-payment data truncated at ``gamma``."""
    p = _props(props)
    gamma = float(gamma)
    return CCoefficients(
        a=p.a, b=p.b, gamma=gamma,
        c=tuple(float(v) for v in c_values(p.a, p.b, gamma)),
        dc_dgamma=tuple(float(v) for v in dc_dgamma(p.a, p.b, gamma)),
        cstar=tuple(float(v) for v in cstar_values(p.a, p.b, gamma)),
    )


def c_coeffs_z(props):
    """The untruncated limit ``gamma -> -inf`` used for payment-per-loss data."""
    return c_coeffs_y(props, -math.inf)


def c_coeffs_quadrature(props, gamma, spec=DEFAULT_QUADRATURE):
    """c_1..c_4 and the gamma-derivatives of c_1, c_2 by adaptive quadrature.

    Independent of the closed forms; used to cross-check them.
    """
    p = _props(props)
    a, b, gamma = p.a, p.b, float(gamma)
    lo = delta(a, gamma) if (a > 0 or math.isfinite(gamma)) else -math.inf
    hi = delta(1 - b, gamma) if b > 0 else math.inf
    c = []
    for k in range(1, 5):
        body = integrate(lambda s: delta(s, gamma) ** k, a, 1 - b, spec)
        ends = (a * lo ** k if a > 0 else 0.0) + (b * hi ** k if b > 0 else 0.0)
        c.append(body + ends)
    dg = [0.0, 0.0]
    if math.isfinite(gamma):
        for k in (1, 2):
            def f(s, k=k):
                d = delta(s, gamma)
                return (1 - s) * d ** (k - 1) / _pdf(d)
            try:
                body = integrate(f, a, 1 - b, spec)
            except QuadratureError as exc:
                if exc.estimate is None:
                    raise
                body = exc.estimate
            ends = (a * (1 - a) * lo ** (k - 1) / _pdf(lo) if a > 0 else 0.0) + \
                (b * b * hi ** (k - 1) / _pdf(hi) if b > 0 else 0.0)
            dg[k - 1] = k * _pdf(gamma) * (body + ends)
    return tuple(c), tuple(dg)


def population_winsorized_moments(theta, sigma, coeffs):
    """``(W_1, W_2)`` of the log-scale variable ``h = theta + sigma * D``."""
    c1, c2 = coeffs.c[0], coeffs.c[1]
    return theta + sigma * c1, theta * theta + 2 * theta * sigma * c1 + sigma * sigma * c2
