"""Policy frames, payment transforms, payment laws and samplers.

Payments are handled on the log scale: a raw payment ``v`` becomes
``c * log(v / (c * (d - w0)) + 1)``, which equals ``c * (min(X, T) - t)``
for the normal variable ``X = log(W - w0)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._accel import njit
from .errors import InsufficientDataError, InvalidPolicyError, OutOfRangeError
from .normal import _cdf, _delta, _pdf, _ppf, _sf

Y = "Y"
Z = "Z"
CAP_RTOL = 1e-9


def _check_kind(kind):
    kind = str(kind).upper()
    if kind not in (Y, Z):
        raise ValueError(f"payment kind must be 'Y' or 'Z', got {kind!r}")
    return kind


@dataclass(frozen=True)
class GroundUpModel:
    """Shifted lognormal loss ``W = w0 + exp(X)``, ``X ~ N(theta, sigma^2)``."""

    w0: float
    theta: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    def cdf(self, w):
        w = float(w)
        if w <= self.w0:
            return 0.0
        return _cdf((math.log(w - self.w0) - self.theta) / self.sigma)

    def sf(self, w):
        w = float(w)
        if w <= self.w0:
            return 1.0
        return _sf((math.log(w - self.w0) - self.theta) / self.sigma)


@dataclass(frozen=True)
class PolicyFrame:
    d: float
    u: float
    c: float
    w0: float
    t: float
    T: float
    R: float

    @property
    def cap(self):
        """Largest log-scale payment, ``c * R``."""
        return self.c * self.R

    @property
    def raw_cap(self):
        return self.c * (self.u - self.d)

    def gamma(self, model):
        return (self.t - model.theta) / model.sigma

    def xi(self, model):
        return (self.T - model.theta) / model.sigma


def frame(d, u, c=1.0, w0=0.0):
    """Build a :class:`PolicyFrame` from deductible, limit, coinsurance and shift."""
    d, u, c, w0 = float(d), float(u), float(c), float(w0)
    if not (w0 < d < u) or not c > 0:
        raise InvalidPolicyError(f"need w0 < d < u and c > 0 (got w0={w0}, d={d}, u={u}, c={c})")
    t = math.log(d - w0)
    T = math.log(u - w0)
    return PolicyFrame(d=d, u=u, c=c, w0=w0, t=t, T=T, R=T - t)


@dataclass(frozen=True)
class PaymentSample:
    """Log-scale payments of one kind with their censoring counts."""

    kind: str
    values: np.ndarray
    cap: float
    n0: int = field(default=-1)
    n1: int = field(default=-1)
    n2: int = field(default=-1)

    def __post_init__(self):
        kind = _check_kind(self.kind)
        values = np.asarray(self.values, dtype=float)
        values.setflags(write=False)
        n0 = int(np.count_nonzero(values == 0.0))
        n2 = int(np.count_nonzero(values == self.cap))
        n1 = int(values.size - n0 - n2)
        if np.any(values < 0.0) or np.any(values > self.cap):
            raise OutOfRangeError("log-scale payments must lie in [0, cR]")
        if kind == Y and n0:
            raise OutOfRangeError("payment-per-payment values must be positive")
        for name, got, want in (("n0", self.n0, n0), ("n1", self.n1, n1), ("n2", self.n2, n2)):
            if got not in (-1, want):
                raise ValueError(f"{name}={got} disagrees with the values ({want})")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "n0", n0)
        object.__setattr__(self, "n1", n1)
        object.__setattr__(self, "n2", n2)

    @property
    def n(self):
        return int(self.values.size)

    def exact(self):
        """The ``n1`` values strictly inside ``(0, cR)``."""
        v = self.values
        return v[(v > 0.0) & (v < self.cap)]

    def with_values(self, values):
        return PaymentSample(self.kind, values, self.cap)


def to_log_scale(raw_payments, fr, kind):
    """Map raw payments to the log scale and tally censoring counts.

    Raw payments within 1e-9 (relative) of ``c(u - d)`` are treated as
    censored at the limit and map exactly to ``cR``.
    """
    kind = _check_kind(kind)
    raw = np.asarray(raw_payments, dtype=float).ravel()
    cap = fr.raw_cap
    tol = CAP_RTOL * cap
    bad = ~np.isfinite(raw) | (raw > cap + tol) | (raw < 0.0)
    if kind == Y:
        bad |= raw <= 0.0
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        allowed = "(0, c(u-d)]" if kind == Y else "[0, c(u-d)]"
        raise OutOfRangeError(f"raw payment #{i} = {float(raw[i])!r} outside {allowed} with c(u-d) = {cap}", index=i)
    values = fr.c * np.log1p(raw / (fr.c * (fr.d - fr.w0)))
    values[raw >= cap - tol] = fr.cap
    values[raw == 0.0] = 0.0
    return PaymentSample(kind, values, fr.cap)


def from_log_scale(values, fr):
    """Inverse of :func:`to_log_scale` on admissible values."""
    v = np.asarray(values, dtype=float)
    return fr.c * (fr.d - fr.w0) * np.expm1(v / fr.c)


def ground_up(sample, fr):
    """Ground-up losses ``w0 + exp(v / c + t)`` behind a log-scale sample."""
    return fr.w0 + np.exp(sample.values / fr.c + fr.t)


def pdf_y(y, fr, model):
    """Density of the payment-per-payment variable; point mass at ``cR``."""
    y = float(y)
    g = fr.gamma(model)
    if y == fr.cap:
        return _sf(fr.xi(model)) / _sf(g)
    if 0.0 < y < fr.cap:
        z = (y / fr.c + fr.t - model.theta) / model.sigma
        return _pdf(z) / (model.sigma * fr.c * _sf(g))
    return 0.0


def pdf_z(z, fr, model):
    """Density of the payment-per-loss variable; point masses at 0 and ``cR``."""
    z = float(z)
    if z == 0.0:
        return _cdf(fr.gamma(model))
    if z == fr.cap:
        return _sf(fr.xi(model))
    if 0.0 < z < fr.cap:
        x = (z / fr.c + fr.t - model.theta) / model.sigma
        return _pdf(x) / (model.sigma * fr.c)
    return 0.0


def cdf_payment(v, fr, model, kind):
    """Fitted cdf of Y or Z at log-scale value(s) ``v`` (right-continuous)."""
    kind = _check_kind(kind)
    v = np.asarray(v, dtype=float)
    g = fr.gamma(model)
    z = (v / fr.c + fr.t - model.theta) / model.sigma
    phi_z = np.array([_cdf(x) for x in z.ravel()]).reshape(z.shape)
    if kind == Y:
        out = (phi_z - _cdf(g)) / _sf(g)
        out = np.where(v <= 0.0, 0.0, out)
    else:
        out = np.where(v < 0.0, 0.0, phi_z)
    return np.where(v >= fr.cap, 1.0, out)


def s_star(fr, model_or_sample):
    """Probability that a payment-per-payment observation is uncensored.

    With a :class:`GroundUpModel` this is ``(Phi(xi) - Phi(gamma)) / sf(gamma)``;
    with a sample it is the empirical ``n1 / n``.
    """
    if isinstance(model_or_sample, PaymentSample):
        s = model_or_sample
        if s.n == 0:
            raise InsufficientDataError("empty sample")
        return s.n1 / s.n
    g, x = fr.gamma(model_or_sample), fr.xi(model_or_sample)
    if g > 0.0:
        return (_sf(g) - _sf(x)) / _sf(g)
    return (_cdf(x) - _cdf(g)) / _sf(g)


@dataclass(frozen=True)
class SeededRng:
    """Reproducible generator identified by ``(seed, stream)``."""

    seed: int
    stream: int = 0

    def generator(self):
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.stream),))
        return np.random.Generator(np.random.PCG64(ss))


@njit
def _draw_y(u, gamma, theta, sigma, t, T, c, cap):
    out = np.empty(u.shape[0])
    for i in range(u.shape[0]):
        x = theta + sigma * _delta(u[i], gamma)
        out[i] = cap if x >= T else c * (x - t)
    return out


@njit
def _draw_z(u, theta, sigma, t, T, c, cap):
    out = np.empty(u.shape[0])
    for i in range(u.shape[0]):
        x = theta + sigma * _ppf(u[i])
        if x <= t:
            out[i] = 0.0
        elif x >= T:
            out[i] = cap
        else:
            out[i] = c * (x - t)
    return out


def draw_log_payments(uniforms, fr, model, kind):
    """Inverse-transform draws of log-scale payments from given uniforms."""
    u = np.ascontiguousarray(uniforms, dtype=float)
    if kind == Y:
        return _draw_y(u, fr.gamma(model), model.theta, model.sigma, fr.t, fr.T, fr.c, fr.cap)
    return _draw_z(u, model.theta, model.sigma, fr.t, fr.T, fr.c, fr.cap)


def sample_payments(fr, model, n, kind, rng):
    """Draw ``n`` payments of the given kind.

    Payment-per-payment draws use the inverse cdf of ``X`` conditional on
    ``X > t``; payment-per-loss draws censor on both sides.
    """
    kind = _check_kind(kind)
    if n < 1:
        raise ValueError("n must be at least 1")
    gen = rng.generator() if isinstance(rng, SeededRng) else rng
    u = gen.random(int(n))
    return PaymentSample(kind, draw_log_payments(u, fr, model, kind), fr.cap)
