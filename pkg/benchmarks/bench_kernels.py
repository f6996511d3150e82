"""Compare the compiled and pure-Python kernels.

Run with ``python benchmarks/bench_kernels.py [--repeat N]``. Each kernel is
timed on identical inputs with both backends, and outputs are checked for
agreement before timing.
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from noma_waterfill import kernels, oracle


def _inputs(seed: int = 0):
    rng = np.random.default_rng(seed)
    clusters = [oracle.random_cluster(rng, 6) for _ in range(200)]
    cc = [(cl.cnrs, cl.rate_fractions) for cl in clusters]
    n = 64
    h = 10 ** rng.uniform(-2, 2, n)
    lo = rng.uniform(0, 1, n)
    hi = lo + rng.uniform(0.1, 3, n)
    total = float(lo.sum() + 0.5 * (hi.sum() - lo.sum()))
    cnr = rng.exponential(size=(60, 15))
    return cc, (h, lo, hi, total, 1.0, 1e-10, 200), cnr


def _cases(mod, cc, wf_args, cnr):
    return {
        "cluster_constants x200 (size 6)": lambda: [mod.cluster_constants(h, r) for h, r in cc],
        "waterfill_bisect (64 channels)": lambda: mod.waterfill_bisect(*wf_args),
        "greedy_assign (60 users, 15 subchannels)": lambda: mod.greedy_assign(cnr, 4),
    }


def _check(py, cy, cc, wf_args, cnr):
    for h, r in cc[:20]:
        for a, b in zip(py.cluster_constants(h, r), cy.cluster_constants(h, r)):
            np.testing.assert_allclose(np.asarray(b), np.asarray(a), rtol=1e-13)
    np.testing.assert_allclose(np.asarray(cy.waterfill_bisect(*wf_args)[0]),
                               np.asarray(py.waterfill_bisect(*wf_args)[0]), rtol=1e-12)
    np.testing.assert_array_equal(cy.greedy_assign(cnr, 4), py.greedy_assign(cnr, 4))


def _sweep_seconds(pure: bool, trials: int) -> float:
    env = dict(os.environ)
    if pure:
        env["NOMA_WF_PURE_PYTHON"] = "1"
    code = (
        "import time; from noma_waterfill import harness, kernels;"
        f"cfg = harness.ExperimentConfig(sweep_values=(2e6,), trials={trials});"
        "t = time.perf_counter(); harness.run_sweep(cfg); print(kernels.BACKEND, time.perf_counter() - t)"
    )
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    backend, secs = out.stdout.split()
    return float(secs)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--sweep-trials", type=int, default=100)
    args = ap.parse_args(argv)

    cy = kernels.compiled()
    if cy is None:
        print("compiled kernels are not built; run `pip install -e . --no-build-isolation` first")
        return 1
    py = kernels.pure
    data = _inputs()
    _check(py, cy, *data)

    print(f"{'kernel':44s} {'python':>12s} {'cython':>12s} {'speedup':>9s}")
    for name in _cases(py, *data):
        times = []
        for mod in (py, cy):
            fn = _cases(mod, *data)[name]
            number = 10
            times.append(min(timeit.repeat(fn, number=number, repeat=args.repeat)) / number)
        print(f"{name:44s} {times[0] * 1e3:10.3f}ms {times[1] * 1e3:10.3f}ms {times[0] / times[1]:8.1f}x")

    tp = _sweep_seconds(True, args.sweep_trials)
    tc = _sweep_seconds(False, args.sweep_trials)
    label = f"sweep: 5 schemes x {args.sweep_trials} trials, K=30"
    print(f"{label:44s} {tp:11.3f}s {tc:11.3f}s {tp / tc:8.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
