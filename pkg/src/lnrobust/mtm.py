"""Method of trimmed moments (MTM): the baseline the winsorized estimator is compared to.

Only point estimates are provided; variability is assessed by simulation.
"""
from __future__ import annotations

import math

from .coefficients import _props, trimmed_c_values
from .errors import InsufficientDataError
from .mle import MTM, FitResult
from .mwm import WinsorizedMoments, _h_sorted, _iterate_y, case_6_check, case_ii_check, check_counts
from .payments import Y, Z, PaymentSample


def sample_trimmed_moments(sample: PaymentSample, props, fr) -> WinsorizedMoments:
    """Average ``h^k`` over the order statistics left after trimming ``m`` low and ``m*`` high."""
    props = _props(props)
    m, ms = check_counts(sample, props)
    n = sample.n
    if n - m - ms < 2:
        raise InsufficientDataError(f"only {n - m - ms} observations remain after trimming")
    mid = _h_sorted(sample, fr)[m:n - ms]
    k = mid.size
    return WinsorizedMoments(math.fsum(mid) / k, math.fsum(mid * mid) / k)


def fit_mtm_y(sample: PaymentSample, fr, props, check_case=True) -> FitResult:
    """Trimmed-moment fit from payment-per-payment data (iterated in gamma)."""
    props = _props(props)
    if sample.kind != Y:
        raise ValueError("fit_mtm_y needs a Y sample")
    if check_case:
        case_ii_check(sample, props)
    w = sample_trimmed_moments(sample, props, fr)
    theta, sigma, it = _iterate_y(w, props, fr, trimmed=True)
    return FitResult(MTM, theta, sigma, None, it, True, {"kind": Y, "a": props.a, "b": props.b})


def fit_mtm_z(sample: PaymentSample, fr, props, check_case=True) -> FitResult:
    """Trimmed-moment fit from payment-per-loss data (closed form)."""
    props = _props(props)
    if sample.kind != Z:
        raise ValueError("fit_mtm_z needs a Z sample")
    if check_case:
        case_6_check(sample, props)
    w = sample_trimmed_moments(sample, props, fr)
    if not w.spread > 0:
        raise InsufficientDataError("trimmed sample has no spread")
    c1, c2 = trimmed_c_values(props.a, props.b, -math.inf)
    sigma = math.sqrt(w.spread / (c2 - c1 * c1))
    return FitResult(MTM, w.w1 - c1 * sigma, sigma, None, 0, True,
                     {"kind": Z, "a": props.a, "b": props.b})
