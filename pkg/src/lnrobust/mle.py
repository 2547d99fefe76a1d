"""Maximum likelihood for censored/truncated lognormal payments.

The estimates solve the two moment-form score equations in ``(gamma, sigma)``
with a damped Newton iteration (compiled), falling back to
``scipy.optimize.root`` if Newton stalls.  ``theta = t - sigma * gamma``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from ._accel import njit
from .errors import ConvergenceError, InsufficientDataError, SingularMatrixError
from .normal import _cdf, _pdf, _sf
from .payments import Y, Z, PaymentSample

MLE, MWM, MTM, LNPAI, LNGPD = "MLE", "MWM", "MTM", "LNPaI", "LNGPD"
TOL = 1e-10
MAX_ITER = 200


@dataclass(frozen=True)
class FitResult:
    """Point estimate ``(theta_hat, sigma_hat)`` with covariance already divided by n.

    ``cov`` is ``None`` when no asymptotic covariance is available (MTM).
    """

    estimator: str
    theta_hat: float
    sigma_hat: float
    cov: np.ndarray | None
    iterations: int = 0
    converged: bool = True
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.sigma_hat > 0:
            raise ValueError(f"sigma_hat must be positive, got {self.sigma_hat}")

    def std_errors(self):
        if self.cov is None:
            return None
        return np.sqrt(np.diag(self.cov))

    def to_dict(self):
        out = {
            "estimator": self.estimator,
            "theta_hat": self.theta_hat,
            "sigma_hat": self.sigma_hat,
            "cov": None if self.cov is None else np.asarray(self.cov).tolist(),
            "iterations": self.iterations,
            "converged": self.converged,
        }
        out.update({k: v for k, v in self.extras.items()})
        return out


@njit
def _hazard(x):
    """phi(x) / sf(x), stable in the far right tail."""
    if x == math.inf:
        return math.inf
    if x == -math.inf:
        return 0.0
    if x < 25.0:
        return _pdf(x) / _sf(x)
    r = 1.0 / (x * x)
    return x / (1.0 - r + 3.0 * r * r - 15.0 * r * r * r)


@njit
def _residual(g, log_s, m1, m2, k1, k2, R, lower_cens):
    # k1 = n/n1 (truncated) or n0/n1 (censored below); k2 = n2/n1
    s = math.exp(log_s)
    xi = g + R / s
    o1 = k1 * (_hazard(-g) if lower_cens else _hazard(g))
    o2 = k2 * _hazard(xi) if k2 > 0.0 else 0.0
    inner = o1 - o2 - g
    r1 = inner - m1 / s
    r2 = 1.0 - g * inner - o2 * R / s - m2 / (s * s)
    return r1, r2


@njit
def _newton(g0, ls0, m1, m2, k1, k2, R, lower_cens, tol, max_iter):
    g, ls = g0, ls0
    f1, f2 = _residual(g, ls, m1, m2, k1, k2, R, lower_cens)
    norm = math.sqrt(f1 * f1 + f2 * f2)
    it = 0
    while it < max_iter and norm > tol:
        it += 1
        hg = 1e-6 * max(1.0, abs(g))
        hs = 1e-6 * max(1.0, abs(ls))
        a1, a2 = _residual(g + hg, ls, m1, m2, k1, k2, R, lower_cens)
        b1, b2 = _residual(g - hg, ls, m1, m2, k1, k2, R, lower_cens)
        c1, c2 = _residual(g, ls + hs, m1, m2, k1, k2, R, lower_cens)
        e1, e2 = _residual(g, ls - hs, m1, m2, k1, k2, R, lower_cens)
        j11 = (a1 - b1) / (2 * hg)
        j21 = (a2 - b2) / (2 * hg)
        j12 = (c1 - e1) / (2 * hs)
        j22 = (c2 - e2) / (2 * hs)
        det = j11 * j22 - j12 * j21
        if det == 0.0 or not math.isfinite(det):
            return g, ls, it, norm, False
        dg = (j22 * f1 - j12 * f2) / det
        dl = (j11 * f2 - j21 * f1) / det
        step = 1.0
        improved = False
        for _ in range(40):
            ng = g - step * dg
            nl = ls - step * dl
            n1, n2 = _residual(ng, nl, m1, m2, k1, k2, R, lower_cens)
            nn = math.sqrt(n1 * n1 + n2 * n2)
            if math.isfinite(nn) and nn < norm:
                g, ls, f1, f2, norm = ng, nl, n1, n2, nn
                improved = True
                break
            step *= 0.5
        if not improved:
            return g, ls, it, norm, norm <= tol
    return g, ls, it, norm, norm <= tol


def _moments(sample, fr):
    x = sample.exact()
    if x.size < 2:
        raise InsufficientDataError(f"need at least 2 uncensored payments, got {x.size}")
    m1 = math.fsum(x) / x.size / fr.c
    m2 = math.fsum(x * x) / x.size / fr.c ** 2
    return x, m1, m2


def _solve(sample, fr, lower_cens, k1):
    x, m1, m2 = _moments(sample, fr)
    k2 = sample.n2 / sample.n1
    # method of moments on the exact log-values as the starting point
    h = x / fr.c
    mean = math.fsum(h) / h.size
    sd = math.sqrt(max(math.fsum((h - mean) ** 2) / h.size, 1e-12))
    g0, ls0 = -mean / sd, math.log(sd)
    args = (m1, m2, k1, k2, fr.R, lower_cens)
    g, ls, it, norm, ok = _newton(g0, ls0, *args, TOL, MAX_ITER)
    if not ok:
        sol = optimize.root(lambda p: _residual(p[0], p[1], *args), [g0, ls0],
                            method="hybr", options={"xtol": 1e-14})
        res = _residual(sol.x[0], sol.x[1], *args)
        rnorm = math.hypot(*res)
        if rnorm <= TOL:
            g, ls, norm, ok = float(sol.x[0]), float(sol.x[1]), rnorm, True
            it += int(sol.nfev)
        else:
            last = (fr.t - math.exp(ls) * g, math.exp(ls))
            raise ConvergenceError(
                f"likelihood equations not solved: residual {min(norm, rnorm):.3g}",
                last_iterate=last, iterations=it)
    sigma = math.exp(ls)
    return fr.t - sigma * g, sigma, it


def fit_mle_y(sample: PaymentSample, fr) -> FitResult:
    """Maximum likelihood fit from payment-per-payment data."""
    if sample.kind != Y:
        raise ValueError("fit_mle_y needs a Y sample")
    _moments(sample, fr)
    theta, sigma, it = _solve(sample, fr, False, sample.n / sample.n1)
    cov = mle_cov_y(theta, sigma, fr) / sample.n
    return FitResult(MLE, theta, sigma, cov, it, True, {"kind": Y})


def fit_mle_z(sample: PaymentSample, fr) -> FitResult:
    """Maximum likelihood fit from payment-per-loss data."""
    if sample.kind != Z:
        raise ValueError("fit_mle_z needs a Z sample")
    _moments(sample, fr)
    theta, sigma, it = _solve(sample, fr, True, sample.n0 / sample.n1)
    cov = mle_cov_z(theta, sigma, fr) / sample.n
    return FitResult(MLE, theta, sigma, cov, it, True, {"kind": Z})


def _band_terms(theta, sigma, fr):
    g = (fr.t - theta) / sigma
    xi = g + fr.R / sigma
    sg, sx = _sf(g), _sf(xi)
    band = sg - sx if g > 0 else _cdf(xi) - _cdf(g)
    if not band > 0:
        raise SingularMatrixError(f"no probability between gamma={g} and xi={xi}")
    return g, xi, sg, band, _pdf(g) / band, _pdf(xi) / band


def _assemble(q1, q2, q3, sigma, g, scale):
    det = q1 * q3 - q2 * q2
    if not det > 0:
        raise SingularMatrixError(f"information determinant {det:.3g} is not positive")
    inner = scale / det * np.array([[-q3, sigma * q2], [sigma * q2, -sigma * sigma * q1]])
    D = np.array([[-sigma, -g], [0.0, 1.0]])
    out = D @ inner @ D.T
    return 0.5 * (out + out.T)


def mle_cov_y(theta, sigma, fr):
    """Asymptotic covariance ``S`` of the Y-data MLE of ``(theta, sigma)`` (not divided by n)."""
    g, xi, sg, band, o1, o2 = _band_terms(theta, sigma, fr)
    rho = fr.R / sigma
    hg, hx = _hazard(g), _hazard(xi)
    r1 = -(1 + g * o1 - xi * o2 - hg * o1 + hx * o2)
    r2 = rho * o2 * (hx - xi) + (o1 - o2 - g)
    r3 = rho * rho * o2 * (xi - hx) - (2 - g * (o1 - o2 - g) - o2 * rho)
    lam = band / sg
    return _assemble(r1, r2, r3, sigma, g, 1.0 / lam)


def mle_cov_z(theta, sigma, fr):
    """Asymptotic covariance ``S`` of the Z-data MLE of ``(theta, sigma)`` (not divided by n)."""
    g, xi, sg, band, o1, o2 = _band_terms(theta, sigma, fr)
    rho = fr.R / sigma
    hg, hx = _hazard(-g), _hazard(xi)
    p1 = -(1 + g * o1 - xi * o2 + hg * o1 + hx * o2)
    p2 = rho * o2 * (hx - xi) + (o1 - o2 - g)
    p3 = rho * rho * o2 * (xi - hx) - (2 - g * (o1 - o2 - g) - o2 * rho)
    return _assemble(p1, p2, p3, sigma, g, 1.0 / band)


def loglik_y(theta, sigma, sample, fr):
    """Log-likelihood of a Y sample in the log-scale parameterization."""
    g = (fr.t - theta) / sigma
    x = sample.exact() / fr.c + fr.t
    z = (x - theta) / sigma
    ll = np.sum(-0.5 * z * z) - x.size * (math.log(sigma) + 0.5 * math.log(2 * math.pi))
    if sample.n2:
        ll += sample.n2 * math.log(_sf(g + fr.R / sigma))
    return float(ll - sample.n * math.log(_sf(g)))


def loglik_z(theta, sigma, sample, fr):
    """Log-likelihood of a Z sample in the log-scale parameterization."""
    g = (fr.t - theta) / sigma
    x = sample.exact() / fr.c + fr.t
    z = (x - theta) / sigma
    ll = np.sum(-0.5 * z * z) - x.size * (math.log(sigma) + 0.5 * math.log(2 * math.pi))
    if sample.n0:
        ll += sample.n0 * math.log(_cdf(g))
    if sample.n2:
        ll += sample.n2 * math.log(_sf(g + fr.R / sigma))
    return float(ll)
