"""Method of winsorized moments (MWM) and its asymptotic covariance.

Payment-per-payment (Y) estimates solve

    sigma = sqrt((W2 - W1^2) / (c2 - c1^2)),   theta = W1 - c1 * sigma,

where ``c_k`` depend on ``gamma = (t - theta) / sigma``; the pair is found by
fixed-point iteration.  For payment-per-loss (Z) data the constants do not
depend on the parameters and the same formulas give the estimate directly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._accel import njit
from .coefficients import (Proportions, _props, c_coeffs_y, c_coeffs_z, c_values,
                           population_winsorized_moments, trimmed_c_values)
from .errors import (CaseViolationError, ConvergenceError, InsufficientDataError,
                     InsufficientWinsorizingError, SingularMatrixError)
from .mle import MWM, FitResult
from .payments import Y, Z, PaymentSample

TOL = 1e-10
MAX_ITER = 500


@dataclass(frozen=True)
class WinsorizedMoments:
    w1: float
    w2: float

    @property
    def spread(self):
        return self.w2 - self.w1 * self.w1


def check_counts(sample: PaymentSample, props: Proportions):
    """Raise unless the censored points fall inside the winsorized tails.

    Returns ``(m, m_star)``.
    """
    m, ms = props.counts(sample.n)
    n = sample.n
    need_b = sample.n2 > ms
    need_a = sample.kind == Z and sample.n0 > m
    if need_a or need_b:
        min_a = sample.n0 / n if need_a else None
        min_b = sample.n2 / n if need_b else None
        parts = []
        if need_a:
            parts.append(f"a >= {min_a:.6g} (n0={sample.n0}, m={m})")
        if need_b:
            parts.append(f"b >= {min_b:.6g} (n2={sample.n2}, m*={ms})")
        raise InsufficientWinsorizingError("need " + " and ".join(parts), min_a=min_a, min_b=min_b)
    if n - m - ms < 1:
        raise InsufficientDataError("no observations left between the winsorized tails")
    return m, ms


def _h_sorted(sample, fr):
    return np.sort(sample.values) / fr.c + fr.t


def sample_winsorized_moments(sample: PaymentSample, props, fr) -> WinsorizedMoments:
    """First two winsorized sample moments of ``h(v) = v / c + t``."""
    props = _props(props)
    m, ms = check_counts(sample, props)
    h = _h_sorted(sample, fr)
    n = sample.n
    lo, hi = h[m], h[n - ms - 1]
    mid = h[m:n - ms]
    w1 = (m * lo + math.fsum(mid) + ms * hi) / n
    w2 = (m * lo * lo + math.fsum(mid * mid) + ms * hi * hi) / n
    return WinsorizedMoments(w1, w2)


@njit
def _fixed_point(w1, w2, a, b, t, tol, max_iter):
    spread = w2 - w1 * w1
    sigma = math.sqrt(spread)
    theta = w1
    for it in range(1, max_iter + 1):
        c = c_values(a, b, (t - theta) / sigma)
        dc = c[1] - c[0] * c[0]
        if not dc > 0.0:
            return theta, sigma, it, False
        ns = math.sqrt(spread / dc)
        nt = w1 - c[0] * ns
        step = max(abs(nt - theta), abs(ns - sigma))
        theta, sigma = nt, ns
        if step <= tol:
            return theta, sigma, it, True
    return theta, sigma, max_iter, False


@njit
def _fixed_point_trimmed(w1, w2, a, b, t, tol, max_iter):
    spread = w2 - w1 * w1
    sigma = math.sqrt(spread)
    theta = w1
    for it in range(1, max_iter + 1):
        c = trimmed_c_values(a, b, (t - theta) / sigma)
        dc = c[1] - c[0] * c[0]
        if not dc > 0.0:
            return theta, sigma, it, False
        ns = math.sqrt(spread / dc)
        nt = w1 - c[0] * ns
        step = max(abs(nt - theta), abs(ns - sigma))
        theta, sigma = nt, ns
        if step <= tol:
            return theta, sigma, it, True
    return theta, sigma, max_iter, False


def _newton_fallback(w1, w2, props, t, coeff_fn):
    from scipy import optimize

    def resid(p):
        theta, ls = p
        s = math.exp(ls)
        c1, c2 = coeff_fn(props.a, props.b, (t - theta) / s)[:2]
        return [theta + s * c1 - w1, theta * theta + 2 * theta * s * c1 + s * s * c2 - w2]

    sol = optimize.root(resid, [w1, 0.5 * math.log(w2 - w1 * w1)], method="hybr")
    if not sol.success:
        return None
    return float(sol.x[0]), math.exp(sol.x[1]), int(sol.nfev)


def case_ii_check(sample, props):
    """Payment-Y condition ``1 - b <= n1 / n`` (empirical uncensored share)."""
    s_emp = sample.n1 / sample.n
    if 1.0 - props.b > s_emp + 1e-12:
        raise CaseViolationError(
            f"1 - b = {1 - props.b:.6g} exceeds the uncensored share {s_emp:.6g}",
            min_b=1.0 - s_emp)


def case_6_check(sample, props):
    """Payment-Z condition ``F_n(t) <= a < 1 - b <= F_n(T)``."""
    n = sample.n
    fn_t = sample.n0 / n
    fn_T = (sample.n0 + sample.n1) / n
    if fn_t > props.a + 1e-12 or 1.0 - props.b > fn_T + 1e-12:
        raise CaseViolationError(
            f"need F_n(t)={fn_t:.6g} <= a={props.a:.6g} and 1-b={1 - props.b:.6g} <= F_n(T)={fn_T:.6g}",
            min_a=fn_t, min_b=1.0 - fn_T)


def _iterate_y(w, props, fr, trimmed):
    if not w.spread > 0:
        raise InsufficientDataError("winsorized sample has no spread")
    kernel = _fixed_point_trimmed if trimmed else _fixed_point
    theta, sigma, it, ok = kernel(w.w1, w.w2, props.a, props.b, fr.t, TOL, MAX_ITER)
    if not ok:
        fb = _newton_fallback(w.w1, w.w2, props, fr.t,
                              trimmed_c_values if trimmed else c_values)
        if fb is None:
            raise ConvergenceError("winsorized-moment iteration did not converge",
                                   last_iterate=(theta, sigma), iterations=it)
        theta, sigma, extra = fb
        it += extra
    return theta, sigma, it


def fit_mwm_y(sample: PaymentSample, fr, props, check_case=True) -> FitResult:
    """MWM fit from payment-per-payment data."""
    props = _props(props)
    if sample.kind != Y:
        raise ValueError("fit_mwm_y needs a Y sample")
    if check_case:
        case_ii_check(sample, props)
    w = sample_winsorized_moments(sample, props, fr)
    theta, sigma, it = _iterate_y(w, props, fr, trimmed=False)
    cov = mwm_cov_y(theta, sigma, fr, props) / sample.n
    return FitResult(MWM, theta, sigma, cov, it, True,
                     {"kind": Y, "a": props.a, "b": props.b})


def fit_mwm_z(sample: PaymentSample, fr, props, check_case=True) -> FitResult:
    """MWM fit from payment-per-loss data (closed form)."""
    props = _props(props)
    if sample.kind != Z:
        raise ValueError("fit_mwm_z needs a Z sample")
    if check_case:
        case_6_check(sample, props)
    w = sample_winsorized_moments(sample, props, fr)
    if not w.spread > 0:
        raise InsufficientDataError("winsorized sample has no spread")
    cc = c_coeffs_z(props)
    sigma = math.sqrt(w.spread / (cc.c2 - cc.c1 ** 2))
    theta = w.w1 - cc.c1 * sigma
    cov = mwm_cov_z(sigma, props) / sample.n
    return FitResult(MWM, theta, sigma, cov, 0, True,
                     {"kind": Z, "a": props.a, "b": props.b})


def mwm_jacobian_y(theta, sigma, fr, props):
    """Derivative of the Y estimator map ``(W1, W2) -> (theta, sigma)``."""
    props = _props(props)
    g = (fr.t - theta) / sigma
    cc = c_coeffs_y(props, g)
    c1, c2 = cc.c1, cc.c2
    dth = cc.dc_dtheta(sigma)
    dsg = cc.dc_dsigma(sigma)
    w1, w2 = population_winsorized_moments(theta, sigma, cc)
    dc = c2 - c1 * c1
    dw = w2 - w1 * w1
    f11 = 1.0 + sigma * dth[0]
    f12 = c1 + sigma * dsg[0]
    f21 = dth[1] - 2.0 * c1 * dth[0]
    f22 = dsg[1] - 2.0 * c1 * dsg[0]
    K = 0.5 * math.sqrt(dc / dw)
    den = f11 * dc * dc + K * dw * (f11 * f22 - f12 * f21)
    if den == 0.0 or f11 == 0.0 or not math.isfinite(den):
        raise SingularMatrixError("winsorized-moment Jacobian is singular")
    d21 = -K * (2.0 * f11 * w1 * dc + f21 * dw) / den
    d22 = K * f11 * dc / den
    d11 = (1.0 - f12 * d21) / f11
    d12 = -f12 * d22 / f11
    return np.array([[d11, d12], [d21, d22]])


def mwm_sigma_y(theta, sigma, fr, props):
    """Asymptotic covariance of the winsorized moments ``(W1, W2)`` for Y data."""
    props = _props(props)
    cc = c_coeffs_y(props, (fr.t - theta) / sigma)
    s1, s2, s3 = cc.cstar
    v11 = sigma ** 2 * s1
    v12 = 2 * theta * sigma ** 2 * s1 + 2 * sigma ** 3 * s2
    v22 = 4 * theta ** 2 * sigma ** 2 * s1 + 8 * theta * sigma ** 3 * s2 + 4 * sigma ** 4 * s3
    return np.array([[v11, v12], [v12, v22]])


def mwm_cov_y(theta, sigma, fr, props):
    """Asymptotic covariance ``S`` of the Y-data MWM estimator (not divided by n)."""
    D = mwm_jacobian_y(theta, sigma, fr, props)
    out = D @ mwm_sigma_y(theta, sigma, fr, props) @ D.T
    return 0.5 * (out + out.T)


def mwm_cov_z(sigma, props):
    """Asymptotic covariance ``S`` of the Z-data MWM estimator (not divided by n)."""
    cc = c_coeffs_z(_props(props))
    c1, c2 = cc.c1, cc.c2
    s1, s2, s3 = cc.cstar
    dc = c2 - c1 * c1
    if not dc > 0:
        raise SingularMatrixError("c2 - c1^2 is not positive")
    m11 = s1 * c2 * c2 - 2 * c1 * c2 * s2 + c1 * c1 * s3
    m12 = -s1 * c1 * c2 + c2 * s2 + c1 * c1 * s2 - c1 * s3
    m22 = s1 * c1 * c1 - 2 * c1 * s2 + s3
    return sigma ** 2 / dc ** 2 * np.array([[m11, m12], [m12, m22]])
