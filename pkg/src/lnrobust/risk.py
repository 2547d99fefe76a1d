"""Risk measures, premiums, efficiency ratios, goodness of fit and adaptive proportions."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate as sp_integrate
from scipy import special

from .coefficients import Proportions, _props
from .errors import AdaptivityError, LnRobustError, QuadratureError, SingularMatrixError
from .normal import _cdf, _ppf, _sf
from .payments import Y, Z, GroundUpModel, PaymentSample, cdf_payment

MEAN, MEAN_MTM, MEAN_MWM, VAR, TVAR, PHDRM = "Mean", "MeanMTM", "MeanMWM", "VaR", "TVaR", "PHDRM"
MEASURES = (MEAN, MEAN_MTM, MEAN_MWM, VAR, TVAR, PHDRM)
KS_COEF = 1.358


@dataclass(frozen=True)
class RiskSpec:
    measure: str
    p: float = 0.0
    props: Proportions = Proportions()

    def __post_init__(self):
        if self.measure not in MEASURES:
            raise ValueError(f"unknown risk measure {self.measure!r}; choose from {MEASURES}")
        if self.measure in (VAR, TVAR) and not 0.0 <= self.p < 1.0:
            raise ValueError(f"{self.measure} needs p in [0, 1)")
        if self.measure == PHDRM and not 0.0 < self.p <= 1.0:
            raise ValueError("PHDRM needs p in (0, 1]")
        object.__setattr__(self, "props", _props(self.props))

    @property
    def label(self):
        if self.measure in (VAR, TVAR, PHDRM):
            return f"{self.measure}_{self.p:g}"
        if self.measure in (MEAN_MTM, MEAN_MWM):
            return f"{self.measure}_{self.props.a:g}_{self.props.b:g}"
        return self.measure


def _phdrm(model, p, shifted):
    # substitute w - w0 = exp(theta + sigma z); integrand sf(z)^p sigma exp(theta + sigma z)
    th, s = model.theta, model.sigma

    def f(z):
        return s * math.exp(p * special.log_ndtr(-z) + th + s * z)

    # the integrand peaks where p * phi(z)/sf(z) = sigma, roughly z = sigma / p
    peak = s / p
    with warnings.catch_warnings():
        warnings.simplefilter("error", sp_integrate.IntegrationWarning)
        try:
            val, err = sp_integrate.quad(f, -40.0, 40.0 + peak, points=[0.0, peak],
                                         limit=400, epsabs=1e-10, epsrel=1e-12)
        except sp_integrate.IntegrationWarning as exc:
            raise QuadratureError(f"PHDRM quadrature failed: {exc}") from exc
    return val + (model.w0 if shifted else 0.0)


def risk_measure(model: GroundUpModel, spec: RiskSpec, shifted_phdrm=True) -> float:
    """Evaluate one risk measure of the shifted lognormal ground-up loss.

    ``shifted_phdrm=False`` integrates ``sf((ln w - theta)/sigma)^p`` over ``w > 0``
    without the shift, i.e. the excess over ``w0`` only.
    """
    th, s, w0 = model.theta, model.sigma, model.w0
    m = spec.measure
    if m == MEAN:
        return w0 + math.exp(th + 0.5 * s * s)
    if m == VAR:
        return w0 + math.exp(th + s * _ppf(spec.p))
    if m == TVAR:
        return w0 + math.exp(th + 0.5 * s * s) * _cdf(s - _ppf(spec.p)) / (1.0 - spec.p)
    if m == PHDRM:
        return _phdrm(model, spec.p, shifted_phdrm)
    a, b = spec.props.a, spec.props.b
    za = _ppf(a)
    zb = _ppf(1.0 - b)
    band = math.exp(th + 0.5 * s * s) * (_cdf(zb - s) - _cdf(za - s))
    if m == MEAN_MTM:
        return w0 + band / (1.0 - a - b)
    ends = (a * math.exp(th + s * za) if a > 0 else 0.0) + (b * math.exp(th + s * zb) if b > 0 else 0.0)
    return w0 + ends + band


def limited_expectation(model: GroundUpModel, w) -> float:
    """``E[min(W, w)]``."""
    if w <= model.w0:
        return float(w)
    if math.isinf(w):
        return model.w0 + math.exp(model.theta + 0.5 * model.sigma ** 2)
    z = (math.log(w - model.w0) - model.theta) / model.sigma
    return (model.w0 + math.exp(model.theta + 0.5 * model.sigma ** 2) * _cdf(z - model.sigma)
            + (w - model.w0) * _sf(z))


def lev(model: GroundUpModel, fr, kind) -> float:
    """Limited expected value of the payment: per payment (Y) or per loss (Z)."""
    diff = limited_expectation(model, fr.u) - limited_expectation(model, fr.d)
    if str(kind).upper() == Y:
        return diff / model.sf(fr.d)
    return diff


def are(cov_ref, cov_alt) -> float:
    """``sqrt(det(cov_ref) / det(cov_alt))``."""
    d_ref = float(np.linalg.det(np.asarray(cov_ref, dtype=float)))
    d_alt = float(np.linalg.det(np.asarray(cov_alt, dtype=float)))
    if not (d_ref > 0 and d_alt > 0):
        raise SingularMatrixError(f"determinants must be positive (got {d_ref:.3g}, {d_alt:.3g})")
    return math.sqrt(d_ref / d_alt)


def re_finite(mc_moments, cov_mle) -> float:
    """Finite-sample efficiency relative to the MLE asymptotic covariance.

    ``mc_moments`` is ``(E[(t-theta)^2], E[(t-theta)(s-sigma)], E[(s-sigma)^2])`` and
    ``cov_mle`` is already divided by n.
    """
    m11, m12, m22 = mc_moments
    d_mc = m11 * m22 - m12 * m12
    d_ref = float(np.linalg.det(np.asarray(cov_mle, dtype=float)))
    if not d_ref > 0:
        raise SingularMatrixError("reference covariance is not positive definite")
    if d_mc <= 0:
        return math.inf
    return math.sqrt(d_ref) / math.sqrt(d_mc)


def ks_statistic(sample: PaymentSample, fr, fitted, w0=None, critical_n=None):
    """Kolmogorov-Smirnov distance between the sample and fitted payment cdfs.

    Returns ``(D, flag)`` with ``flag = 1`` when ``D > 1.358 / sqrt(n)``.
    """
    if w0 is None:
        w0 = fr.w0
    model = GroundUpModel(w0, fitted.theta_hat, fitted.sigma_hat) \
        if not isinstance(fitted, GroundUpModel) else fitted
    v = np.sort(sample.values)
    n = v.size
    exact = np.unique(v[(v > 0.0) & (v < fr.cap)])
    # empirical cdf just after and just before each jump
    after = np.searchsorted(v, exact, side="right") / n
    before = np.searchsorted(v, exact, side="left") / n
    fit = cdf_payment(exact, fr, model, sample.kind)
    d = 0.0
    if exact.size:
        d = max(float(np.max(np.abs(after - fit))), float(np.max(np.abs(before - fit))))
    # left limit at the cap atom
    g, xi = fr.gamma(model), fr.xi(model)
    fit_cap_minus = (1.0 - _sf(xi) / _sf(g)) if sample.kind == Y else 1.0 - _sf(xi)
    emp_cap_minus = np.searchsorted(v, fr.cap, side="left") / n
    d = max(d, abs(emp_cap_minus - fit_cap_minus))
    if sample.kind == Z:
        d = max(d, abs(np.searchsorted(v, 0.0, side="right") / n - _cdf(g)))
    crit = KS_COEF / math.sqrt(critical_n if critical_n else n)
    return d, int(d > crit)


def confidence_interval(fit, level=0.95):
    """Normal-theory intervals for theta and sigma; ``None`` without a covariance."""
    if fit.cov is None:
        return None
    if not 0.0 <= level < 1.0:
        raise ValueError("level must lie in [0, 1)")
    z = 0.0 if level == 0 else _ppf(0.5 * (1.0 + level))
    se = np.sqrt(np.maximum(np.diag(fit.cov), 0.0))
    return ((fit.theta_hat - z * se[0], fit.theta_hat + z * se[0]),
            (fit.sigma_hat - z * se[1], fit.sigma_hat + z * se[1]))


def _grid_up(x, n):
    return math.ceil(x * n - 1e-9) / n


def _required(sample, fr, kind, props, fit):
    """Smallest ``(a, b)`` on the 1/n grid meeting the empirical and fitted conditions."""
    n = sample.n
    a, b = props.a, props.b
    if kind == Y:
        s_emp = sample.n1 / n
        s_par = None
        if fit is not None:
            model = GroundUpModel(fr.w0, fit.theta_hat, fit.sigma_hat)
            g, xi = fr.gamma(model), fr.xi(model)
            s_par = (_sf(g) - _sf(xi)) / _sf(g) if g > 0 else (_cdf(xi) - _cdf(g)) / _sf(g)
        s_min = s_emp if s_par is None else min(s_emp, s_par)
        b = max(b, _grid_up(1.0 - s_min, n))
    else:
        lo = sample.n0 / n
        hi = (sample.n0 + sample.n1) / n
        if fit is not None:
            model = GroundUpModel(fr.w0, fit.theta_hat, fit.sigma_hat)
            lo = max(lo, _cdf(fr.gamma(model)))
            hi = min(hi, _cdf(fr.xi(model)))
        a = max(a, _grid_up(lo, n))
        b = max(b, _grid_up(1.0 - hi, n))
    return a, b


def adapt_proportions(sample, fr, kind, requested, fit_fn, max_rounds=20):
    """Raise ``b`` (and ``a`` for Z) until the case conditions hold at the data and the fit.

    ``fit_fn(sample, fr, props)`` returns a :class:`FitResult`.
    Returns ``(props, fit)``.
    """
    kind = str(kind).upper()
    props = _props(requested)
    a, b = _required(sample, fr, kind, props, None)
    for _ in range(max_rounds):
        if not a + b < 1.0:
            raise AdaptivityError(f"no admissible proportions: a={a:.6g}, b={b:.6g}")
        props = Proportions(a, b)
        try:
            fit = fit_fn(sample, fr, props)
        except LnRobustError as exc:
            raise AdaptivityError(f"fit failed at a={a:.6g}, b={b:.6g}: {exc}") from exc
        na, nb = _required(sample, fr, kind, props, fit)
        if (na, nb) == (a, b):
            return props, fit
        a, b = na, nb
    raise AdaptivityError(f"proportions did not settle within {max_rounds} rounds")
