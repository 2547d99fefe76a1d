"""Seeded Monte Carlo studies and outlier sensitivity curves.

Replication ``r`` draws its uniforms from the stream ``(seed, r)``, so a study
is reproducible and independent of the order in which replications run.  The
per-replication fits run inside one compiled kernel.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._accel import njit
from .coefficients import Proportions, _props, c_values, trimmed_c_values
from .errors import LnRobustError
from .mle import MLE, MTM, MWM, _newton, fit_mle_y, fit_mle_z, mle_cov_y, mle_cov_z
from .mtm import fit_mtm_y, fit_mtm_z
from .mwm import _fixed_point, _fixed_point_trimmed, fit_mwm_y, fit_mwm_z, mwm_cov_y, mwm_cov_z
from .normal import _cdf, _sf
from .payments import (Y, Z, GroundUpModel, PaymentSample, SeededRng, _check_kind, _draw_y,
                       _draw_z, frame, to_log_scale)
from .risk import RiskSpec, are, re_finite, risk_measure

OK, CASE_FAIL, SOLVER_FAIL = 0, 1, 2
_CODES = {MLE: 0, MWM: 1, MTM: 2}
EXCLUDE, COMPUTE = "exclude", "compute"


@dataclass(frozen=True)
class EstimatorSpec:
    """An estimator name with its proportions (ignored for MLE)."""

    estimator: str
    props: Proportions = Proportions()

    def __post_init__(self):
        if self.estimator not in _CODES:
            raise ValueError(f"estimator must be one of {sorted(_CODES)}")
        object.__setattr__(self, "props", _props(self.props))

    @property
    def tag(self):
        if self.estimator == MLE:
            return MLE
        return f"{self.estimator}({self.props.a:g},{self.props.b:g})"


@dataclass(frozen=True)
class StudyConfig:
    model: GroundUpModel
    frame: object
    kind: str
    n_grid: tuple
    replications: int
    estimators: tuple
    seed: int = 20240101
    case_policy: str = EXCLUDE

    def __post_init__(self):
        object.__setattr__(self, "kind", _check_kind(self.kind))
        if int(self.replications) < 1:
            raise ValueError("replications must be at least 1")
        if not self.n_grid or any(int(n) < 2 for n in self.n_grid):
            raise ValueError("sample sizes must be at least 2")
        if self.case_policy not in (EXCLUDE, COMPUTE):
            raise ValueError(f"case_policy must be {EXCLUDE!r} or {COMPUTE!r}")
        specs = tuple(e if isinstance(e, EstimatorSpec) else EstimatorSpec(*e) for e in self.estimators)
        object.__setattr__(self, "estimators", specs)
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))

    def validity(self, n):
        """Per estimator: does it respect the two-standard-error margin at sample size ``n``?"""
        g = self.frame.gamma(self.model)
        xi = self.frame.xi(self.model)
        out = {}
        for e in self.estimators:
            if e.estimator == MLE:
                out[e.tag] = True
                continue
            a, b = e.props.a, e.props.b
            if self.kind == Y:
                s = (_cdf(xi) - _cdf(g)) / _sf(g)
                out[e.tag] = 1 - b <= s - 2 * math.sqrt(s * (1 - s) / n)
            else:
                fd, fu = _cdf(g), _cdf(xi)
                out[e.tag] = (fd + 2 * math.sqrt(fd * (1 - fd) / n) <= a
                              and 1 - b <= fu - 2 * math.sqrt(fu * (1 - fu) / n))
        return out


@njit
def _fit_sorted(v, kind_y, t, c, R, cap, code, a, b, check):
    """Fit one estimator to sorted log-scale payments. Returns (theta, sigma, status)."""
    n = v.shape[0]
    n0 = 0
    n2 = 0
    for i in range(n):
        if v[i] == 0.0:
            n0 += 1
        elif v[i] == cap:
            n2 += 1
    n1 = n - n0 - n2
    if code == 0:
        if n1 < 2:
            return 0.0, 1.0, CASE_FAIL
        s1 = 0.0
        s2 = 0.0
        sh = 0.0
        for i in range(n0, n0 + n1):
            s1 += v[i] / c
            s2 += (v[i] / c) ** 2
        m1 = s1 / n1
        m2 = s2 / n1
        for i in range(n0, n0 + n1):
            sh += (v[i] / c - m1) ** 2
        sd = math.sqrt(max(sh / n1, 1e-12))
        k1 = n / n1 if kind_y else n0 / n1
        g, ls, it, norm, ok = _newton(-m1 / sd, math.log(sd), m1, m2, k1, n2 / n1, R,
                                      not kind_y, 1e-10, 200)
        if not ok:
            return 0.0, 1.0, SOLVER_FAIL
        s = math.exp(ls)
        return t - s * g, s, OK
    m = int(math.floor(n * a + 1e-9))
    ms = int(math.floor(n * b + 1e-9))
    if n - m - ms < 2:
        return 0.0, 1.0, CASE_FAIL
    if check:
        # censored points must sit inside the winsorized tails
        if ms < n2 or (not kind_y and m < n0):
            return 0.0, 1.0, CASE_FAIL
        if kind_y:
            if 1.0 - b > n1 / n + 1e-12:
                return 0.0, 1.0, CASE_FAIL
        else:
            if n0 / n > a + 1e-12 or 1.0 - b > (n0 + n1) / n + 1e-12:
                return 0.0, 1.0, CASE_FAIL
    lo = v[m] / c + t
    hi = v[n - ms - 1] / c + t
    s1 = 0.0
    s2 = 0.0
    for i in range(m, n - ms):
        h = v[i] / c + t
        s1 += h
        s2 += h * h
    if code == 1:
        w1 = (m * lo + s1 + ms * hi) / n
        w2 = (m * lo * lo + s2 + ms * hi * hi) / n
    else:
        k = n - m - ms
        w1 = s1 / k
        w2 = s2 / k
    spread = w2 - w1 * w1
    if not spread > 0.0:
        return 0.0, 1.0, CASE_FAIL
    if kind_y:
        if code == 1:
            th, sg, it, ok = _fixed_point(w1, w2, a, b, t, 1e-10, 500)
        else:
            th, sg, it, ok = _fixed_point_trimmed(w1, w2, a, b, t, 1e-10, 500)
        if not ok:
            return th, sg, SOLVER_FAIL
        return th, sg, OK
    if code == 1:
        cc = c_values(a, b, -math.inf)
    else:
        cc = trimmed_c_values(a, b, -math.inf)
    sg = math.sqrt(spread / (cc[1] - cc[0] * cc[0]))
    return w1 - cc[0] * sg, sg, OK


@njit
def _replicate(u, kind_y, theta, sigma, gamma, t, T, c, R, cap, codes, aa, bb, check):
    if kind_y:
        v = _draw_y(u, gamma, theta, sigma, t, T, c, cap)
    else:
        v = _draw_z(u, theta, sigma, t, T, c, cap)
    v = np.sort(v)
    out = np.empty((codes.shape[0], 3))
    for j in range(codes.shape[0]):
        th, sg, st = _fit_sorted(v, kind_y, t, c, R, cap, codes[j], aa[j], bb[j], check)
        out[j, 0] = th
        out[j, 1] = sg
        out[j, 2] = st
    return out, v


_FITTERS = {(MLE, Y): lambda s, fr, p: fit_mle_y(s, fr), (MLE, Z): lambda s, fr, p: fit_mle_z(s, fr),
            (MWM, Y): fit_mwm_y, (MWM, Z): fit_mwm_z, (MTM, Y): fit_mtm_y, (MTM, Z): fit_mtm_z}


def fit_estimator(spec: EstimatorSpec, sample, fr, check_case=True):
    fn = _FITTERS[(spec.estimator, sample.kind)]
    if spec.estimator == MLE:
        return fn(sample, fr, None)
    return fn(sample, fr, spec.props, check_case=check_case)


def replication_estimates(config: StudyConfig, n):
    """Array ``(replications, estimators, 3)`` of ``(theta, sigma, status)``."""
    fr, mdl = config.frame, config.model
    kind_y = config.kind == Y
    codes = np.array([_CODES[e.estimator] for e in config.estimators], dtype=np.int64)
    aa = np.array([e.props.a for e in config.estimators])
    bb = np.array([e.props.b for e in config.estimators])
    check = config.case_policy == EXCLUDE
    gamma = fr.gamma(mdl)
    out = np.empty((config.replications, len(codes), 3))
    for r in range(config.replications):
        u = SeededRng(config.seed, r).generator().random(n)
        res, v = _replicate(u, kind_y, mdl.theta, mdl.sigma, gamma, fr.t, fr.T, fr.c, fr.R,
                            fr.cap, codes, aa, bb, check)
        for j in np.flatnonzero(res[:, 2] == SOLVER_FAIL):
            # retry through the public path, which has a scipy fallback
            try:
                f = fit_estimator(config.estimators[j], PaymentSample(config.kind, v, fr.cap), fr,
                                  check_case=check)
                res[j] = (f.theta_hat, f.sigma_hat, OK)
            except LnRobustError:
                pass
        out[r] = res
    return out


@dataclass
class StudyRow:
    n: int
    estimator: str
    valid: bool
    successes: int
    failures: int
    theta_ratio: float
    sigma_ratio: float
    theta_ratio_se: float
    sigma_ratio_se: float
    mse_theta: float
    mse_cross: float
    mse_sigma: float
    re: float
    are: float | None


@dataclass
class StudyReport:
    config: StudyConfig
    rows: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    COLUMNS = ("n", "estimator", "valid", "successes", "failures", "theta_ratio", "sigma_ratio",
               "theta_ratio_se", "sigma_ratio_se", "mse_theta", "mse_cross", "mse_sigma", "re", "are")

    def row(self, n, tag):
        for r in self.rows:
            if r.n == n and r.estimator == tag:
                return r
        raise KeyError((n, tag))

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(getattr(r, c)) for c in self.COLUMNS])
        return buf.getvalue()

    def to_json(self):
        return json.dumps({
            "kind": self.config.kind,
            "seed": self.config.seed,
            "replications": self.config.replications,
            "warnings": self.warnings,
            "rows": [{c: getattr(r, c) for c in self.COLUMNS} for r in self.rows],
        }, indent=2, default=float)


def _fmt(x):
    if isinstance(x, float):
        return repr(x) if math.isfinite(x) else str(x)
    return "" if x is None else str(x)


def _mean(xs):
    return math.fsum(xs) / len(xs)


def asymptotic_cov(estimator, props, model, fr, kind):
    """Asymptotic covariance ``S`` (not divided by n); ``None`` for MTM."""
    if estimator == MLE:
        return (mle_cov_y if kind == Y else mle_cov_z)(model.theta, model.sigma, fr)
    if estimator == MWM:
        if kind == Y:
            return mwm_cov_y(model.theta, model.sigma, fr, props)
        return mwm_cov_z(model.sigma, props)
    return None


def run_study(config: StudyConfig) -> StudyReport:
    """Bias ratios and finite-sample efficiencies for every ``(n, estimator)``."""
    report = StudyReport(config)
    mdl, fr = config.model, config.frame
    s_mle = asymptotic_cov(MLE, None, mdl, fr, config.kind)
    for n in config.n_grid:
        est = replication_estimates(config, n)
        valid = config.validity(n)
        for j, spec in enumerate(config.estimators):
            ok = est[:, j, 2] == OK
            th = est[ok, j, 0]
            sg = est[ok, j, 1]
            k = int(ok.sum())
            fails = config.replications - k
            if fails > 0.01 * config.replications:
                report.warnings.append(
                    f"n={n} {spec.tag}: {fails} of {config.replications} replications failed")
            if k == 0:
                report.rows.append(StudyRow(n, spec.tag, valid[spec.tag], 0, fails, *([math.nan] * 8),
                                            None))
                continue
            tr = th / mdl.theta
            sr = sg / mdl.sigma
            dt = th - mdl.theta
            ds = sg - mdl.sigma
            mom = (_mean(dt * dt), _mean(dt * ds), _mean(ds * ds))
            se = (lambda x: math.sqrt(_mean((x - _mean(x)) ** 2) / k) if k > 1 else 0.0)
            try:
                re = re_finite(mom, s_mle / n)
            except LnRobustError:
                re = math.nan
            s_alt = None
            try:
                s_alt = asymptotic_cov(spec.estimator, spec.props, mdl, fr, config.kind)
                a_val = are(s_mle, s_alt) if s_alt is not None else None
            except LnRobustError:
                a_val = None
            report.rows.append(StudyRow(n, spec.tag, valid[spec.tag], k, fails, _mean(tr), _mean(sr),
                                        se(tr), se(sr), *mom, re, a_val))
    return report


# ---------------------------------------------------------------- sensitivity

@dataclass(frozen=True)
class SensitivityConfig:
    """Outlier locations are ground-up loss values in ``[d, u]``."""

    base_sample: PaymentSample
    frame: object
    outlier_grid: tuple
    estimators: tuple
    risk_specs: tuple
    labels: tuple = ()

    def __post_init__(self):
        fr = self.frame
        grid = tuple(float(x) for x in self.outlier_grid)
        if any(not fr.d <= x <= fr.u for x in grid):
            raise ValueError(f"outlier locations must lie in [d, u] = [{fr.d}, {fr.u}]")
        specs = tuple(e if isinstance(e, EstimatorSpec) else EstimatorSpec(*e) for e in self.estimators)
        object.__setattr__(self, "outlier_grid", grid)
        object.__setattr__(self, "estimators", specs)
        if not self.labels:
            object.__setattr__(self, "labels", tuple(e.tag for e in specs))


@dataclass
class CurveSet:
    rows: list = field(default_factory=list)  # (location, estimator, measure, value)
    gaps: list = field(default_factory=list)  # (location, estimator, message)

    def curve(self, estimator, measure):
        pts = [(x, v) for x, e, m, v in self.rows if e == estimator and m == measure]
        return np.array([p[0] for p in pts]), np.array([p[1] for p in pts])

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("location", "estimator", "measure", "value"))
        for x, e, m, v in self.rows:
            w.writerow((repr(x), e, m, repr(v)))
        return buf.getvalue()

    def gnuplot_script(self, csv_name="curves.csv", targets=None):
        """A gnuplot script drawing one panel per measure from the CSV file."""
        measures = list(dict.fromkeys(m for _, _, m, _ in self.rows))
        ests = list(dict.fromkeys(e for _, e, _, _ in self.rows))
        lines = ["set datafile separator ','", "set key outside", "set xlabel 'outlier location'",
                 f"set multiplot layout {len(measures)},1"]
        for m in measures:
            plots = [f"'< grep \",{e},{m},\" {csv_name}' using 1:4 with lines title '{e}'" for e in ests]
            if targets and m in targets:
                plots.append(f"{targets[m]!r} with lines dashtype 2 title 'target'")
            lines.append(f"set ylabel '{m}'")
            lines.append("plot " + ", ".join(plots))
        lines.append("unset multiplot")
        return "\n".join(lines) + "\n"


def outlier_payment(x, fr, kind):
    """Raw payment produced by a ground-up loss ``x``."""
    if x <= fr.d:
        return 0.0
    return fr.c * (min(x, fr.u) - fr.d)


def sensitivity_curves(config: SensitivityConfig, w0=None) -> CurveSet:
    """Refit each estimator with one extra loss at each grid location."""
    fr = config.frame
    base = config.base_sample
    w0 = fr.w0 if w0 is None else w0
    out = CurveSet()
    for x in config.outlier_grid:
        raw = outlier_payment(x, fr, base.kind)
        if base.kind == Y and raw == 0.0:
            # a loss at the deductible is not a payment; nudge it inside
            raw = 1e-9 * fr.raw_cap
        extra = to_log_scale([raw], fr, base.kind).values
        sample = PaymentSample(base.kind, np.concatenate([base.values, extra]), base.cap)
        for spec, label in zip(config.estimators, config.labels):
            try:
                fit = fit_estimator(spec, sample, fr)
                model = GroundUpModel(w0, fit.theta_hat, fit.sigma_hat)
                for rs in config.risk_specs:
                    out.rows.append((x, label, rs.label, risk_measure(model, rs)))
            except LnRobustError as exc:
                out.gaps.append((x, label, str(exc)))
    return out


# ---------------------------------------------------------------- fixtures

_FIXTURE_Y = """
70.89 290.60 47.22 100.36 411.36 1374.10 1736.60 28.12 207.47 349.15
465.04 10.41 6.12 96.41 340.27 114.82 391.35 1036.80 30.69 391.35
426.90 132.63 64.22 2400.00 213.66 257.07 849.73 34.64 275.32 2257.90
742.44 1059.80 556.32 25.60 2400.00 12.62 275.32 1288.30 2400.00 65.85
1014.30 232.99 76.06 104.39 610.90 92.54 1403.90 1647.10 216.80 239.70
116.97 29.40 279.09 2400.00 1718.30 207.47 5.08 232.99 3.02 1048.20
132.63 149.42 367.44 2400.00 260.65 132.63 104.39 928.74 76.06 618.03
625.24 970.69 54.718 45.77 670.02 198.41 3.02 223.18 2400.00 14.88
81.39 110.58 603.83 33.31 358.20 34.64 275.32 6.12 25.60 340.27
86.88 2098.60 110.58 530.62 53.19 67.52 50.18 56.26 358.20 24.36
"""

_FIXTURE_Z = """
30.21 272.88 0 336.39 99.19 284.59 43.92 120.16 0 445.00
6.07 0 45.09 41.65 5.09 78.67 31.11 1.63 0 186.15
0 805.80 17.79 569.51 0 38.93 200.66 64.97 10.76 64.18
2.76 0 0 0 54.65 1081.60 1479.77 0 1479.77 102.64
319.30 5.47 9.79 19.42 0 106.19 0 458.98 33.90 0
0 1479.77 0 361.80 10.27 124.25 1421.20 0 87.40 0
90.49 0 220.88 1479.77 92.60 6.47 0 50.65 15.05 67.37
2.76 1479.77 530.06 86.39 358.06 0 1479.77 29.77 13.91 670.75
127.04 196.41 50.65 503.52 12.02 0 26.41 30.21 56.04 8.18
124.25 0 08 0 0 218.54 0 145.02 48.74 3.80
"""

FIXTURE_Y_FRAME = dict(d=100.0, u=2500.0, c=1.0, w0=1.0)
FIXTURE_Z_FRAME = dict(d=15.0, u=1500.0, c=1.0, w0=1.0)
# the largest recorded Z payment stands for the censored limit payment
FIXTURE_Z_CENSORED = 1479.77


def fixture_raw():
    """Raw payment tables as printed, row by row."""
    y = np.array([float(s) for s in _FIXTURE_Y.split()])
    z = np.array([float(s) for s in _FIXTURE_Z.split()])
    return y, z


def appendix_fixtures():
    """The two 100-payment sensitivity samples, as log-scale :class:`PaymentSample`s.

    Returns ``((sample_y, frame_y), (sample_z, frame_z))``.
    """
    y, z = fixture_raw()
    fy = frame(**FIXTURE_Y_FRAME)
    fz = frame(**FIXTURE_Z_FRAME)
    z = np.where(z == FIXTURE_Z_CENSORED, fz.raw_cap, z)
    return (to_log_scale(y, fy, Y), fy), (to_log_scale(z, fz, Z), fz)
