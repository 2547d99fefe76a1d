"""Command-line interface: ``lnrobust {fit,are,simulate,sensitivity,risk,composite}``.

Exit codes: 0 success, 2 usage, 3 data problems, 4 numerical failures.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .coefficients import Proportions
from .composite import fit_composite
from .errors import (ConvergenceError, InsufficientDataError, InsufficientWinsorizingError,
                     InvalidPolicyError, InvalidThresholdError, LnRobustError, OutOfRangeError)
from .mle import LNGPD, LNPAI, MLE, MTM, MWM, fit_mle_y, fit_mle_z
from .mtm import fit_mtm_y, fit_mtm_z
from .mwm import fit_mwm_y, fit_mwm_z
from .payments import Y, Z, GroundUpModel, frame, to_log_scale
from .risk import (MEAN, MEAN_MTM, MEAN_MWM, PHDRM, TVAR, VAR, RiskSpec, adapt_proportions, are,
                   confidence_interval, ks_statistic, lev, risk_measure)
from .simulation import (EstimatorSpec, SensitivityConfig, StudyConfig, appendix_fixtures,
                         asymptotic_cov, run_study, sensitivity_curves)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
DATA_ERRORS = (OutOfRangeError, InsufficientDataError, InvalidPolicyError, InvalidThresholdError,
               InsufficientWinsorizingError)


class DataError(Exception):
    """Input that cannot be parsed or is inconsistent."""


def _num(x):
    """Format a float with 17 significant digits (round-trip safe)."""
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return x


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def read_payments(path):
    """Read raw payments from a one-column CSV (optional header).

    Blank lines are skipped; anything else that is not a number is an error
    reported with its line number.
    """
    values = []
    try:
        with open(path, newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh), start=1):
                if not row or not "".join(row).strip():
                    continue
                cell = row[0].strip()
                try:
                    values.append(float(cell))
                except ValueError:
                    if lineno == 1 and not values:
                        continue  # header
                    raise DataError(f"{path}:{lineno}: not a number: {cell!r}") from None
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    if not values:
        raise DataError(f"{path}: no payments found")
    return np.array(values)


def read_config(path):
    """Parse a JSON document or flat ``key=value`` lines."""
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    cfg = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{path}:{lineno}: expected key=value")
        k, v = (s.strip() for s in line.split("=", 1))
        cfg[k] = v
    return cfg


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_output(text, args, inputs=(), seed=None):
    """Write ``text`` to ``--output`` (or stdout) and a reproduction manifest next to it."""
    if args.output:
        Path(args.output).write_text(text)
        outputs = {args.output: _sha256(args.output)}
        extra = getattr(args, "_extra_outputs", [])
        outputs.update({p: _sha256(p) for p in extra})
        manifest = {
            "command": args.command,
            "version": __version__,
            "argv": sys.argv[1:],
            "inputs": {p: _sha256(p) for p in inputs},
            "flags": {k: v for k, v in vars(args).items() if not k.startswith("_") and k != "func"},
            "seed": seed,
            "outputs": outputs,
        }
        Path(args.manifest or args.output + ".manifest.json").write_text(
            json.dumps(_jsonable(manifest), indent=2) + "\n")
    else:
        sys.stdout.write(text)


def _frame(args):
    return frame(args.d, args.u, args.c, args.w0)


def _parse_props(a, b):
    return Proportions(_fraction(a), _fraction(b))


def _fraction(s):
    """Accept ``0.1`` or ``150/1451``."""
    s = str(s)
    if "/" in s:
        num, den = s.split("/", 1)
        return float(num) / float(den)
    return float(s)


_FIT = {(MLE, Y): fit_mle_y, (MLE, Z): fit_mle_z, (MWM, Y): fit_mwm_y, (MWM, Z): fit_mwm_z,
        (MTM, Y): fit_mtm_y, (MTM, Z): fit_mtm_z}
_EST_NAMES = {"mle": MLE, "mwm": MWM, "mtm": MTM, "lnpai": LNPAI, "lngpd": LNGPD}


def _report(fit, sample, fr, kind, level):
    out = fit.to_dict()
    out.pop("params", None)
    model = GroundUpModel(fr.w0, fit.theta_hat, fit.sigma_hat)
    if "lev" not in out:
        out["lev"] = lev(model, fr, kind)
    if fit.estimator not in (LNPAI, LNGPD):
        d, flag = ks_statistic(sample, fr, fit)
        out["ks"] = d
        out["ks_reject"] = flag
    ci = confidence_interval(fit, level)
    out["ci_level"] = level
    out["ci_theta"] = None if ci is None else list(ci[0])
    out["ci_sigma"] = None if ci is None else list(ci[1])
    out["n"] = sample.n
    out["n0"], out["n1"], out["n2"] = sample.n0, sample.n1, sample.n2
    return out


def _emit_record(rec, args, inputs):
    if args.format == "json":
        text = json.dumps(_jsonable(rec), indent=2) + "\n"
    else:
        flat = {}
        for k, v in rec.items():
            if isinstance(v, (list, tuple, np.ndarray)):
                for idx, x in np.ndenumerate(np.asarray(v, dtype=float)):
                    flat[k + "_" + "".join(map(str, idx))] = x
            elif v is not None and not isinstance(v, dict):
                flat[k] = v
        lines = [",".join(flat), ",".join(str(_num(v)) for v in flat.values())]
        text = "\n".join(lines) + "\n"
    write_output(text, args, inputs)


def cmd_fit(args):
    kind = args.kind.upper()
    fr = _frame(args)
    sample = to_log_scale(read_payments(args.csv), fr, kind)
    est = _EST_NAMES[args.estimator]
    if est in (LNPAI, LNGPD):
        fit = fit_composite(sample, fr, est, kind)
    elif est == MLE:
        fit = _FIT[(est, kind)](sample, fr)
    else:
        props = _parse_props(args.a, args.b)
        fn = _FIT[(est, kind)]
        if args.adaptive:
            props, fit = adapt_proportions(sample, fr, kind, props, fn)
        else:
            fit = fn(sample, fr, props)
    rec = _report(fit, sample, fr, kind, args.level)
    _emit_record(rec, args, [args.csv])
    return EXIT_OK


def cmd_composite(args):
    args.estimator = args.variant.lower()
    return cmd_fit(args)


def _grid(spec):
    cells = []
    for item in spec.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            a, b = item.split(":")
            cells.append((_fraction(a), _fraction(b)))
        except ValueError:
            raise DataError(f"bad grid cell {item!r}; expected a:b") from None
    return cells


def _model(spec):
    try:
        theta, sigma, w0 = (float(x) for x in spec.split(","))
    except ValueError:
        raise DataError(f"--model expects theta,sigma,w0 (got {spec!r})") from None
    return GroundUpModel(w0, theta, sigma)


def cmd_are(args):
    model = _model(args.model)
    kind = args.kind.upper()
    est = _EST_NAMES[args.estimator]
    cells = _grid(args.grid)
    if args.sweep_d:
        lo, hi, steps = args.sweep_d.split(":")
        ds = np.linspace(float(lo), float(hi), int(steps))
    else:
        ds = [args.d]
    rows = [("d", "u", "a", "b", "are", "error")]
    for d in ds:
        try:
            fr = frame(d, args.u, args.c, model.w0)
            s_mle = asymptotic_cov(MLE, None, model, fr, kind)
        except LnRobustError as exc:
            rows.extend((d, args.u, a, b, "", str(exc)) for a, b in cells)
            continue
        for a, b in cells:
            try:
                s_alt = asymptotic_cov(est, Proportions(a, b), model, fr, kind)
                rows.append((d, args.u, a, b, are(s_mle, s_alt), ""))
            except (LnRobustError, ValueError) as exc:
                rows.append((d, args.u, a, b, "", str(exc)))
    text = "\n".join(",".join(str(_num(v)) for v in r) for r in rows) + "\n"
    write_output(text, args)
    return EXIT_OK


def _estimator_specs(items):
    specs = []
    for item in items:
        parts = str(item).split(":")
        name = _EST_NAMES.get(parts[0].lower())
        if name is None or name in (LNPAI, LNGPD):
            raise DataError(f"unknown estimator {item!r}")
        if name == MLE:
            specs.append(EstimatorSpec(MLE))
        else:
            if len(parts) != 3:
                raise DataError(f"estimator {item!r} needs proportions, e.g. mwm:0.05:0.05")
            specs.append(EstimatorSpec(name, Proportions(_fraction(parts[1]), _fraction(parts[2]))))
    return specs


def _listify(v):
    if isinstance(v, (list, tuple)):
        return list(v)
    return [s.strip() for s in str(v).replace(";", ",").split(",") if s.strip()]


def study_from_config(cfg):
    try:
        model = GroundUpModel(float(cfg.get("w0", 1.0)), float(cfg["theta"]), float(cfg["sigma"]))
        fr = frame(float(cfg["d"]), float(cfg["u"]), float(cfg.get("c", 1.0)), model.w0)
        reps = int(cfg["replications"])
        if reps < 1:
            raise DataError("replications must be at least 1")
        return StudyConfig(
            model=model, frame=fr, kind=str(cfg["kind"]).upper(),
            n_grid=tuple(int(n) for n in _listify(cfg["n"])), replications=reps,
            estimators=tuple(_estimator_specs(_listify(cfg["estimators"]))),
            seed=int(cfg.get("seed", 20240101)), case_policy=str(cfg.get("case_policy", "exclude")))
    except KeyError as exc:
        raise DataError(f"config is missing key {exc}") from None
    except ValueError as exc:
        raise DataError(f"config: {exc}") from None


def cmd_simulate(args):
    cfg = read_config(args.config)
    study = study_from_config(cfg)
    report = run_study(study)
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    text = report.to_json() + "\n" if args.format == "json" else report.to_csv()
    write_output(text, args, [args.config], seed=study.seed)
    return EXIT_OK


def _risk_specs(items):
    out = []
    for item in items:
        parts = str(item).split(":")
        name = parts[0].lower()
        if name == "mean":
            out.append(RiskSpec(MEAN))
        elif name in ("var", "tvar", "phdrm"):
            p = float(parts[1]) if len(parts) > 1 else 0.99
            out.append(RiskSpec({"var": VAR, "tvar": TVAR, "phdrm": PHDRM}[name], p))
        elif name in ("meanmtm", "meanmwm") and len(parts) == 3:
            out.append(RiskSpec(MEAN_MTM if name == "meanmtm" else MEAN_MWM, 0.0,
                                Proportions(_fraction(parts[1]), _fraction(parts[2]))))
        else:
            raise DataError(f"unknown risk measure {item!r}")
    return out


def cmd_sensitivity(args):
    cfg = read_config(args.config)
    source = str(cfg.get("sample", "fixture-y")).lower()
    inputs = [args.config]
    if source in ("fixture-y", "fixture-z"):
        (sy, fy), (sz, fz) = appendix_fixtures()
        sample, fr = (sy, fy) if source == "fixture-y" else (sz, fz)
    else:
        kind = str(cfg["kind"]).upper()
        fr = frame(float(cfg["d"]), float(cfg["u"]), float(cfg.get("c", 1.0)), float(cfg.get("w0", 0.0)))
        sample = to_log_scale(read_payments(source), fr, kind)
        inputs.append(source)
    lo = float(cfg.get("grid_start", fr.d))
    hi = float(cfg.get("grid_stop", fr.u))
    num = int(cfg.get("grid_points", 200))
    grid = np.linspace(lo, hi, num)
    specs = _estimator_specs(_listify(cfg.get("estimators", "mle")))
    measures = _risk_specs(_listify(cfg.get("measures", "mean,var:0.99,tvar:0.99,phdrm:0.99")))
    curves = sensitivity_curves(SensitivityConfig(sample, fr, tuple(grid), tuple(specs), tuple(measures)))
    for x, e, msg in curves.gaps:
        print(f"gap at {x}: {e}: {msg}", file=sys.stderr)
    if args.output:
        script = Path(args.output).with_suffix(".gp")
        script.write_text(curves.gnuplot_script(Path(args.output).name))
        args._extra_outputs = [str(script)]
    write_output(curves.to_csv(), args, inputs)
    return EXIT_OK


def cmd_risk(args):
    model = _model(args.model)
    rows = [("measure", "value")]
    for spec in _risk_specs(_listify(args.measures)):
        rows.append((spec.label, risk_measure(model, spec, shifted_phdrm=not args.unshifted_phdrm)))
    write_output("\n".join(",".join(str(_num(v)) for v in r) for r in rows) + "\n", args)
    return EXIT_OK


def _add_policy(p):
    p.add_argument("--kind", choices=["y", "z", "Y", "Z"], required=True)
    p.add_argument("--d", type=float, required=True, help="deductible")
    p.add_argument("--u", type=float, required=True, help="policy limit")
    p.add_argument("--c", type=float, default=1.0, help="coinsurance rate")
    p.add_argument("--w0", type=float, default=0.0, help="loss shift")


def _add_output(p, formats=("json", "csv")):
    p.add_argument("--output", "-o", help="write here instead of stdout (a manifest is written alongside)")
    p.add_argument("--manifest", help="manifest path (default: OUTPUT.manifest.json)")
    if formats:
        p.add_argument("--format", choices=formats, default=formats[0])


def build_parser():
    parser = argparse.ArgumentParser(prog="lnrobust", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a lognormal severity model to payments")
    p.add_argument("csv", help="one-column CSV of raw payments")
    _add_policy(p)
    p.add_argument("--estimator", choices=sorted(_EST_NAMES), default="mle")
    p.add_argument("--a", default="0", help="lower proportion (decimal or k/n)")
    p.add_argument("--b", default="0", help="upper proportion (decimal or k/n)")
    p.add_argument("--adaptive", action="store_true", help="raise a, b until the case conditions hold")
    p.add_argument("--level", type=float, default=0.95, help="confidence level")
    _add_output(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("composite", help="fit a composite lognormal-Pareto model")
    p.add_argument("csv")
    _add_policy(p)
    p.add_argument("--variant", choices=["lnpai", "lngpd"], default="lnpai")
    p.add_argument("--level", type=float, default=0.95)
    _add_output(p)
    p.set_defaults(func=cmd_composite, adaptive=False, a="0", b="0")

    p = sub.add_parser("are", help="tabulate asymptotic relative efficiencies against the MLE")
    p.add_argument("--model", default="4,2,1", help="theta,sigma,w0")
    p.add_argument("--kind", choices=["y", "z", "Y", "Z"], default="y")
    p.add_argument("--d", type=float, default=3.0)
    p.add_argument("--u", type=float, default=5.96e3)
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--estimator", choices=["mwm"], default="mwm")
    p.add_argument("--grid", default="0:0.01,0:0.05,0:0.10,0:0.15,0:0.25", help="a:b cells, comma separated")
    p.add_argument("--sweep-d", help="start:stop:points; tabulate over a range of deductibles")
    _add_output(p, formats=None)
    p.set_defaults(func=cmd_are)

    p = sub.add_parser("simulate", help="run a Monte Carlo study from a config file")
    p.add_argument("config", help="JSON or key=value file")
    _add_output(p, formats=("csv", "json"))
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sensitivity", help="outlier sensitivity curves from a config file")
    p.add_argument("config")
    _add_output(p, formats=None)
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("risk", help="risk measures of a shifted lognormal")
    p.add_argument("--model", default="4,2,1", help="theta,sigma,w0")
    p.add_argument("--measures", default="mean,var:0.99,tvar:0.99,phdrm:0.99")
    p.add_argument("--unshifted-phdrm", action="store_true",
                   help="integrate the PH distortion over w > 0 without the shift")
    _add_output(p, formats=None)
    p.set_defaults(func=cmd_risk)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DataError, *DATA_ERRORS) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (LnRobustError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
