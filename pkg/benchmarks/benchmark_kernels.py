#!/usr/bin/env python
"""Benchmark the compiled kernels against the pure-numpy fallback path.

Every hot loop is registered twice: KERNELS holds the active (numba when
available) implementation, PY_KERNELS the uncompiled source.  This script
times both on representative workloads:

1. orbit generation for each builtin system
2. fused objective averaging
3. tangent sweeps (basis QR push, inhomogeneous recursion, segmented solve)
4. optional end-to-end pipeline run in two subprocesses, one with
   SHADOWSENSE_NO_NUMBA=1, checking the reports agree bit-for-bit

Usage:
    python benchmarks/benchmark_kernels.py
    python benchmarks/benchmark_kernels.py --K 1000000 --reps 5
    python benchmarks/benchmark_kernels.py --pipeline --output results.json
"""

import argparse
import json
import os
import subprocess
import sys
import time
from datetime import datetime

import numpy as np

from shadowsense._kernels import KERNELS, NUMBA_ACTIVE, PY_KERNELS
from shadowsense.model import make_system
from shadowsense.orbit import generate_orbit
from shadowsense.tangent import jacobian_sequence

# python fallback loops get this many steps at most; timings are scaled
# back up so both columns report the same amount of work
PY_CAP = 50_000


def _time(fn, args, reps):
    best = float("inf")
    for _ in range(reps):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def _row(name, work, fast_t, slow_t):
    speedup = slow_t / fast_t if fast_t > 0 else float("inf")
    print(f"{name:>14} {work:>10} {fast_t:>12.4f} {slow_t:>12.4f} "
          f"{speedup:>9.1f}x")
    return {"kernel": name, "steps": work, "active_s": fast_t,
            "python_s": slow_t, "speedup": speedup}


def _scaled(name, build_args, K, reps):
    """Time KERNELS[name] at K steps and PY_KERNELS[name] at <= PY_CAP."""
    fast_t = _time(KERNELS[name], build_args(K), reps)
    K_py = min(K, PY_CAP)
    slow_t = _time(PY_KERNELS[name], build_args(K_py), 1) * (K / K_py)
    return _row(name, K, fast_t, slow_t)


def warmup_jit():
    if not NUMBA_ACTIVE:
        return
    print("Warming up JIT compilation...")
    KERNELS["ec_orbit"](np.array([1.0]), 0.0, 8, 8)
    KERNELS["ec_obj_mean"](np.array([1.0]), 0.0, 8, 8)
    KERNELS["cat_orbit"](np.array([1.0, 2.0]), 0.0, 8, 8)
    KERNELS["cat_obj_mean"](np.array([1.0, 2.0]), 0.0, 8, 8)
    KERNELS["sol_orbit"](np.array([1.0, 0.1, 0.1]), 0.0, 0.25, 0.3, 8, 8)
    KERNELS["sol_obj_mean"](np.array([1.0, 0.1, 0.1]), 0.0, 0.25, 0.3, 8, 8)
    L = np.diag([2.0, 0.5])
    X0 = np.array([0.3, 1.0])
    c = np.array([0.0, np.pi])
    w = np.array([1.0, 0.0])
    KERNELS["lin_orbit"](np.array([1.0, 3.0]), 0.0, L, X0, c, 8, 8)
    KERNELS["lin_obj_mean"](np.array([1.0, 3.0]), 0.0, L, X0, c, 0, w, 8, 8)
    jac = np.tile(np.diag([0.5, 0.8]), (8, 1, 1))
    X = np.zeros((9, 2))
    KERNELS["prop_basis"](jac, np.eye(2), 1)
    KERNELS["prop_inhom"](jac, X, np.zeros(2))
    KERNELS["nilss_sweep"](jac, X, np.eye(2, 1), np.array([0, 4, 8]))
    print("JIT warmup complete.\n")


def benchmark_orbits(K, reps):
    print(f"\n{'=' * 62}")
    print("ORBIT GENERATION")
    print(f"{'=' * 62}")
    print(f"{'kernel':>14} {'steps':>10} {'active (s)':>12} "
          f"{'python (s)':>12} {'speedup':>10}")
    print("-" * 62)
    L = np.diag([2.0, 0.5])
    X0 = np.array([0.3, 1.0])
    c = np.array([0.0, np.pi])
    out = [
        _scaled("ec_orbit",
                lambda n: (np.array([1.234]), 0.02, 100, n), K, reps),
        _scaled("cat_orbit",
                lambda n: (np.array([1.2, 2.3]), 0.05, 100, n), K, reps),
        _scaled("sol_orbit",
                lambda n: (np.array([1.2, 0.1, 0.1]), 0.03, 0.25, 0.3,
                           100, n), K, reps),
        _scaled("lin_orbit",
                lambda n: (np.array([1.0, 3.0]), 0.02, L, X0, c, 100, n),
                K, reps),
    ]
    return out


def benchmark_objectives(K, reps):
    print(f"\n{'=' * 62}")
    print("FUSED OBJECTIVE AVERAGING")
    print(f"{'=' * 62}")
    print(f"{'kernel':>14} {'steps':>10} {'active (s)':>12} "
          f"{'python (s)':>12} {'speedup':>10}")
    print("-" * 62)
    L = np.diag([2.0, 0.5])
    X0 = np.array([0.3, 1.0])
    c = np.array([0.0, np.pi])
    w = np.array([1.0, 0.0])
    out = [
        _scaled("ec_obj_mean",
                lambda n: (np.array([1.234]), 0.02, 100, n), K, reps),
        _scaled("cat_obj_mean",
                lambda n: (np.array([1.2, 2.3]), 0.05, 100, n), K, reps),
        _scaled("sol_obj_mean",
                lambda n: (np.array([1.2, 0.1, 0.1]), 0.03, 0.25, 0.3,
                           100, n), K, reps),
        _scaled("lin_obj_mean",
                lambda n: (np.array([1.0, 3.0]), 0.02, L, X0, c, 0, w,
                           100, n), K, reps),
    ]
    return out


def benchmark_tangent(K, reps):
    print(f"\n{'=' * 62}")
    print("TANGENT SWEEPS (cat-map Jacobians)")
    print(f"{'=' * 62}")
    print(f"{'kernel':>14} {'steps':>10} {'active (s)':>12} "
          f"{'python (s)':>12} {'speedup':>10}")
    print("-" * 62)
    cat = make_system("perturbed_cat_map")
    K_t = min(K, 100_000)
    orb = generate_orbit(cat, 0.05, K_t, spinup=100, seed=0)
    jac = jacobian_sequence(cat, orb.states, 0.05)
    rng = np.random.default_rng(0)

    def basis_args(n):
        return (jac[:n], np.eye(2), 1)

    # a contracting cocycle keeps the recursion bounded at any length
    jac_c = np.tile(np.diag([0.5, 0.8]), (K_t, 1, 1))
    X = rng.standard_normal((K_t + 1, 2))

    def inhom_args(n):
        return (jac_c[:n], X[:n + 1], np.zeros(2))

    seg = np.arange(0, K_t + 1, 12)
    if seg[-1] != K_t:
        seg = np.append(seg, K_t)

    def sweep_args(n):
        s = seg[seg <= n]
        if s[-1] != n:
            s = np.append(s, n)
        return (jac[:n], X[:n + 1], np.linalg.qr(rng.standard_normal(
            (2, 1)))[0], s)

    out = [
        _scaled("prop_basis", basis_args, K_t, reps),
        _scaled("prop_inhom", inhom_args, K_t, reps),
        _scaled("nilss_sweep", sweep_args, K_t, reps),
    ]
    return out


PIPELINE_SNIPPET = """
import json, time
import numpy as np
from shadowsense._kernels import NUMBA_ACTIVE
from shadowsense.response import assemble_report
start = time.perf_counter()
rep = assemble_report(__import__("shadowsense.model", fromlist=["x"])
                      .ExpandingCircle(), 0.0, K=50_000, seed=0,
                      N_back=3, N=2, include_fd=False)
print(json.dumps({"numba": NUMBA_ACTIVE,
                  "seconds": time.perf_counter() - start,
                  "shadowing": repr(rep.shadowing),
                  "corrected_total": repr(rep.corrected_total)}))
"""


def benchmark_pipeline():
    """Run the same report in two subprocesses and diff the numbers."""
    print(f"\n{'=' * 62}")
    print("END-TO-END PIPELINE (two subprocesses, K=50000)")
    print(f"{'=' * 62}")
    results = {}
    for label, extra_env in (("active", {}),
                             ("no_numba", {"SHADOWSENSE_NO_NUMBA": "1"})):
        env = dict(os.environ, **extra_env)
        proc = subprocess.run([sys.executable, "-c", PIPELINE_SNIPPET],
                              capture_output=True, text=True, env=env,
                              check=True)
        results[label] = json.loads(proc.stdout.strip().splitlines()[-1])
        r = results[label]
        print(f"{label:>10}: numba={r['numba']} {r['seconds']:.2f} s "
              f"shadowing={r['shadowing']}")
    same = (results["active"]["shadowing"] == results["no_numba"]["shadowing"]
            and results["active"]["corrected_total"]
            == results["no_numba"]["corrected_total"])
    print(f"reports identical across paths: {same}")
    results["identical"] = same
    return results


def main():
    parser = argparse.ArgumentParser(
        description="Benchmark compiled kernels vs the numpy fallback")
    parser.add_argument("--K", type=int, default=1_000_000,
                        help="steps per orbit/objective benchmark")
    parser.add_argument("--reps", type=int, default=3,
                        help="repetitions (best time is kept)")
    parser.add_argument("--pipeline", action="store_true",
                        help="also compare full pipeline subprocess runs")
    parser.add_argument("--output", type=str, default=None,
                        help="write results to this JSON file")
    args = parser.parse_args()

    print("=" * 62)
    print("SHADOWSENSE KERNEL BENCHMARKS")
    print("=" * 62)
    print(f"Date: {datetime.now().isoformat()}")
    print(f"Numba active: {NUMBA_ACTIVE}")
    print(f"K: {args.K}, reps: {args.reps}")
    if not NUMBA_ACTIVE:
        print("\nNumba is unavailable or disabled; both columns run the "
              "same uncompiled source.")

    warmup_jit()

    all_results = {
        "metadata": {
            "date": datetime.now().isoformat(),
            "numba_active": NUMBA_ACTIVE,
            "K": args.K,
            "reps": args.reps,
        },
        "orbits": benchmark_orbits(args.K, args.reps),
        "objectives": benchmark_objectives(args.K, args.reps),
        "tangent": benchmark_tangent(args.K, args.reps),
    }
    if args.pipeline:
        all_results["pipeline"] = benchmark_pipeline()

    flat = (all_results["orbits"] + all_results["objectives"]
            + all_results["tangent"])
    print(f"\n{'=' * 62}")
    print("SUMMARY")
    print(f"{'=' * 62}")
    print(f"median speedup: {np.median([r['speedup'] for r in flat]):.1f}x, "
          f"max: {max(r['speedup'] for r in flat):.1f}x "
          f"({max(flat, key=lambda r: r['speedup'])['kernel']})")

    if args.output:
        with open(args.output, "w") as f:
            json.dump(all_results, f, indent=2)
        print(f"\nResults saved to {args.output}")


if __name__ == "__main__":
    main()
