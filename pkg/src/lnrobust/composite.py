"""Composite lognormal body with a Pareto (LNPaI) or generalized Pareto (LNGPD) tail.

The body ``f1`` is the shifted lognormal density and the tail ``f2`` is
``alpha (lam + x0)^alpha / (lam + x)^(alpha+1)`` on ``x > x0`` (``lam = 0`` for
LNPaI).  Continuity and smoothness of the spliced density at ``x0`` pin down
``theta`` and the body weight ``w``, leaving ``(x0, alpha, sigma[, lam])`` free.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate as sp_integrate
from scipy import optimize, special

from .errors import InsufficientDataError, InvalidThresholdError, OptimizationError
from .mle import LNGPD, LNPAI, FitResult
from .payments import Y, Z, GroundUpModel, PaymentSample, from_log_scale

N_FREE = {"LN": 2, LNPAI: 3, LNGPD: 4}
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class CompositeParams:
    variant: str
    x0: float
    alpha: float
    sigma: float
    lam: float = 0.0
    w0: float = 0.0

    def __post_init__(self):
        if self.variant not in (LNPAI, LNGPD):
            raise ValueError(f"variant must be {LNPAI!r} or {LNGPD!r}")
        if not (self.alpha > 0 and self.sigma > 0 and self.x0 > self.w0):
            raise ValueError("need alpha > 0, sigma > 0 and x0 > w0")
        if self.variant == LNGPD and not self.lam > 0:
            raise ValueError("LNGPD needs lam > 0")
        if self.variant == LNPAI and self.lam != 0.0:
            raise ValueError("LNPaI has no lam parameter")

    @property
    def z0(self):
        """Standardized splice point ``(ln(x0 - w0) - theta) / sigma``."""
        return self.sigma * ((self.alpha + 1.0) * (self.x0 - self.w0) / (self.lam + self.x0) - 1.0)

    @property
    def theta(self):
        return math.log(self.x0 - self.w0) - self.sigma * self.z0

    @property
    def w(self):
        z0 = self.z0
        # odds w / (1 - w), on the log scale to avoid overflow
        log_odds = (math.log(self.alpha * self.sigma * (self.x0 - self.w0) / (self.lam + self.x0))
                    + special.log_ndtr(z0) + 0.5 * z0 * z0 + _LOG_SQRT_2PI)
        return float(special.expit(log_odds))

    def body(self):
        return GroundUpModel(self.w0, self.theta, self.sigma)


def _log_f1(x, p):
    z = (np.log(x - p.w0) - p.theta) / p.sigma
    return -0.5 * z * z - np.log(p.sigma * (x - p.w0)) - _LOG_SQRT_2PI


def _log_F1(x, p):
    return special.log_ndtr((np.log(np.asarray(x, dtype=float) - p.w0) - p.theta) / p.sigma)


def _log_f2(x, p):
    return math.log(p.alpha) + p.alpha * math.log(p.lam + p.x0) - (p.alpha + 1.0) * np.log(p.lam + x)


def _log_sf2(x, p):
    return p.alpha * (math.log(p.lam + p.x0) - np.log(p.lam + x))


def composite_pdf_cdf(x, params: CompositeParams):
    """Spliced density and cdf at ``x > w0``."""
    x = float(x)
    p = params
    w = p.w
    if x <= p.w0:
        return 0.0, 0.0
    if x <= p.x0:
        lf0 = float(_log_F1(p.x0, p))
        return (w * math.exp(float(_log_f1(x, p)) - lf0),
                w * math.exp(float(_log_F1(x, p)) - lf0))
    if math.isinf(x):
        return 0.0, 1.0
    return ((1.0 - w) * math.exp(float(_log_f2(x, p))),
            w + (1.0 - w) * -math.expm1(float(_log_sf2(x, p))))


def recover_losses(sample: PaymentSample, fr):
    """Ground-up losses ``x = raw / c + d`` with censoring flags.

    Returns ``(x, at_d, at_u)`` where ``at_d`` marks zero payments (Z) and
    ``at_u`` marks payments at the limit.
    """
    raw = from_log_scale(sample.values, fr)
    x = raw / fr.c + fr.d
    at_u = sample.values == sample.cap
    at_d = sample.values == 0.0
    x[at_u] = fr.u
    x[at_d] = fr.d
    return x, at_d, at_u


def composite_loglik(x, at_d, at_u, fr, params: CompositeParams, kind):
    """Log-likelihood of recovered losses under the composite model."""
    p = params
    if not fr.d < p.x0 < fr.u:
        raise InvalidThresholdError(f"x0={p.x0} must lie strictly between d={fr.d} and u={fr.u}")
    x = np.asarray(x, dtype=float)
    w = p.w
    if not 0.0 < w < 1.0:
        return -math.inf
    log_w, log_1w = math.log(w), math.log1p(-w)
    lf0 = float(_log_F1(p.x0, p))
    exact = ~(at_d | at_u)
    body = exact & (x <= p.x0)
    tail = exact & (x > p.x0)
    n_body = int(np.count_nonzero(x <= p.x0))
    n_tail = x.size - n_body
    ll = float(np.sum(_log_f1(x[body], p)))
    ll += (log_w - lf0) * n_body
    ll += float(np.sum(_log_f2(x[tail], p)))
    ll += float(_log_sf2(fr.u, p)) * int(np.count_nonzero(at_u))
    ll += log_1w * n_tail
    if str(kind).upper() == Y:
        ll -= x.size * math.log1p(-w * math.exp(float(_log_F1(fr.d, p)) - lf0))
    else:
        n_d = int(np.count_nonzero(at_d))
        if n_d:
            ll += float(_log_F1(fr.d, p)) * n_d
    return ll


def lognormal_loglik(x, at_d, at_u, fr, model: GroundUpModel, kind):
    """Log-likelihood of recovered losses under the stand-alone shifted lognormal."""
    exact = ~(at_d | at_u)
    xe = x[exact]
    z = (np.log(xe - model.w0) - model.theta) / model.sigma
    ll = float(np.sum(-0.5 * z * z - np.log(model.sigma * (xe - model.w0)))) - xe.size * _LOG_SQRT_2PI
    n_u = int(np.count_nonzero(at_u))
    if n_u:
        ll += n_u * math.log(model.sf(fr.u))
    if str(kind).upper() == Y:
        ll -= x.size * math.log(model.sf(fr.d))
    else:
        n_d = int(np.count_nonzero(at_d))
        if n_d:
            ll += n_d * math.log(model.cdf(fr.d))
    return ll


def aic(nll, n_free):
    return 2.0 * nll + 2.0 * n_free


def composite_lev(params: CompositeParams, fr, kind):
    """Limited expected value of the payment under the composite model."""
    def sf(x):
        return 1.0 - composite_pdf_cdf(x, params)[1]

    pts = [params.x0] if fr.d < params.x0 < fr.u else None
    val, _ = sp_integrate.quad(sf, fr.d, fr.u, points=pts, limit=200)
    if str(kind).upper() == Y:
        return val / sf(fr.d)
    return val


def _unpack(v, fr, variant, w0):
    x0 = fr.d + (fr.u - fr.d) * float(special.expit(v[0]))
    lam = math.exp(v[3]) if variant == LNGPD else 0.0
    return CompositeParams(variant, x0, math.exp(v[1]), math.exp(v[2]), lam, w0)


def _starts(x, exact, fr, variant):
    xe = x[exact]
    sd = float(np.std(np.log(xe - fr.w0))) or 1.0
    out = []
    for q in (0.5, 0.75, 0.9, 0.97):
        x0 = float(np.quantile(xe, q))
        x0 = min(max(x0, fr.d + 1e-6 * (fr.u - fr.d)), fr.u - 1e-6 * (fr.u - fr.d))
        s = (x0 - fr.d) / (fr.u - fr.d)
        for alpha in (0.7, 2.0):
            v = [math.log(s / (1 - s)), math.log(alpha), math.log(sd)]
            if variant == LNGPD:
                v.append(math.log(x0))
            out.append(np.array(v))
    return out


def fit_composite(sample: PaymentSample, fr, variant, kind=None) -> FitResult:
    """Maximum likelihood fit of a composite model by multistart Nelder-Mead."""
    kind = sample.kind if kind is None else str(kind).upper()
    if sample.n1 < 4:
        raise InsufficientDataError(f"need at least 4 uncensored payments, got {sample.n1}")
    x, at_d, at_u = recover_losses(sample, fr)
    exact = ~(at_d | at_u)

    def nll(v):
        try:
            p = _unpack(v, fr, variant, fr.w0)
            val = -composite_loglik(x, at_d, at_u, fr, p, kind)
        except (ValueError, OverflowError, ZeroDivisionError):
            return math.inf
        return val if math.isfinite(val) else math.inf

    best = None
    for v0 in _starts(x, exact, fr, variant):
        res = optimize.minimize(nll, v0, method="Nelder-Mead",
                                options={"xatol": 1e-9, "fatol": 1e-10, "maxiter": 20000, "maxfev": 40000})
        # restart once from the optimum to shake off a collapsed simplex
        res = optimize.minimize(nll, res.x, method="Nelder-Mead",
                                options={"xatol": 1e-10, "fatol": 1e-11, "maxiter": 20000, "maxfev": 40000})
        if math.isfinite(res.fun) and (best is None or res.fun < best.fun):
            best = res
    if best is None:
        raise OptimizationError("no start produced a finite likelihood")
    p = _unpack(best.x, fr, variant, fr.w0)
    value = float(best.fun)
    extras = {
        "kind": kind, "x0": p.x0, "alpha": p.alpha, "w": p.w, "nll": value,
        "aic": aic(value, N_FREE[variant]), "lev": composite_lev(p, fr, kind),
        "params": p,
    }
    if variant == LNGPD:
        extras["lambda"] = p.lam
    return FitResult(variant, p.theta, p.sigma, None, int(best.nit), bool(best.success), extras)
