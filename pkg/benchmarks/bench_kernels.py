"""Time the compiled kernels against the pure-Python fallback.

Each backend runs in its own interpreter, since the switch is read at import.

    python benchmarks/bench_kernels.py [--reps 200] [--n 1000]
"""
import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
from lnrobust import backend
from lnrobust.coefficients import c_coeffs_y
from lnrobust.mle import MLE, MTM, MWM
from lnrobust.payments import Y, GroundUpModel, frame
from lnrobust.simulation import StudyConfig, replication_estimates

reps, n = int(sys.argv[1]), int(sys.argv[2])
cfg = StudyConfig(GroundUpModel(1.0, 4.0, 2.0), frame(3.0, 5.96e3, 1.0, 1.0), Y, (n,), reps,
                  ((MLE,), (MWM, (0.05, 0.05)), (MTM, (0.05, 0.05))), seed=1)
replication_estimates(StudyConfig(cfg.model, cfg.frame, Y, (n,), 1, cfg.estimators), n)  # warm-up / compile
t0 = time.perf_counter()
replication_estimates(cfg, n)
study = time.perf_counter() - t0
t0 = time.perf_counter()
for i in range(2000):
    c_coeffs_y((0.05, 0.1), -2.0 + i * 1e-3)
coeffs = time.perf_counter() - t0
print(json.dumps({"backend": backend(), "study_s": study, "coeff_us": coeffs / 2000 * 1e6}))
"""


def run(disable, reps, n):
    env = dict(os.environ)
    env.pop("LNROBUST_DISABLE_NUMBA", None)
    if disable:
        env["LNROBUST_DISABLE_NUMBA"] = "1"
    out = subprocess.run([sys.executable, "-c", WORKER, str(reps), str(n)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=200)
    ap.add_argument("--n", type=int, default=1000)
    args = ap.parse_args()
    fast = run(False, args.reps, args.n)
    slow = run(True, args.reps, args.n)
    print(f"{'backend':<8} {'study (s)':>10} {'c-coeffs (us)':>14}")
    for r in (fast, slow):
        print(f"{r['backend']:<8} {r['study_s']:>10.3f} {r['coeff_us']:>14.1f}")
    print(f"speedup: study x{slow['study_s'] / fast['study_s']:.1f}, "
          f"c-coeffs x{slow['coeff_us'] / fast['coeff_us']:.1f}")


if __name__ == "__main__":
    main()
