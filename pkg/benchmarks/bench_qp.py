"""Timing comparison of the compiled and pure-numpy QP kernels.

Two views of the same question:

  * per-solve timings on batches of random strictly convex QPs in three
    size classes, run through ``solve_qp`` with the backend forced, and
  * end-to-end wall time of the SQP drivers (academic grid, ten-bar
    truss) in subprocesses with ``MPVC_PURE_PYTHON`` toggled, so the
    whole solve path uses one kernel.

Usage:
    python benchmarks/bench_qp.py [--n-random 200] [--repeats 3] [--seed 0]
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from mpvc.qp import DEFAULT_BACKEND, QuadProgram, solve_qp

SIZE_CLASSES = [
    ("small  (n=3,  m=6)", 3, 1, 6),
    ("medium (n=8,  m=12)", 8, 2, 12),
    ("large  (n=20, m=30)", 20, 3, 30),
]

END_TO_END = [
    (
        "academic grid (289 starts)",
        "import numpy as np, time\n"
        "from mpvc.problems import load_problem\n"
        "from mpvc.sqp import run_basic_sqp\n"
        "prob, _, _ = load_problem('academic')\n"
        "vals = list(range(-5, 11)) + [20]\n"
        "t0 = time.perf_counter()\n"
        "for a in vals:\n"
        "    for b in vals:\n"
        "        run_basic_sqp(prob, np.array([float(a), float(b)]))\n"
        "print(time.perf_counter() - t0)\n",
    ),
    (
        "ten-bar truss solve",
        "import time\n"
        "from mpvc.problems import load_problem\n"
        "from mpvc.sqp import run_basic_sqp\n"
        "prob, x0, _ = load_problem('tenbar')\n"
        "t0 = time.perf_counter()\n"
        "run_basic_sqp(prob, x0)\n"
        "print(time.perf_counter() - t0)\n",
    ),
]


def random_qp(rng: np.random.Generator, n: int, me: int, mi: int) -> QuadProgram:
    """Strictly convex instance with a known interior feasible point."""
    m = rng.standard_normal((n, n))
    H = m.T @ m + (0.3 + rng.random()) * np.eye(n)
    c = rng.standard_normal(n)
    x0 = rng.standard_normal(n)
    A_eq = rng.standard_normal((me, n)) if me else None
    b_eq = A_eq @ x0 if me else None
    A_in = rng.standard_normal((mi, n))
    b_in = A_in @ x0 + rng.random(mi) + 0.1
    return QuadProgram(H, c, A_eq, b_eq, A_in, b_in)


def time_batch(qps, backend: str, repeats: int) -> float:
    """Best-of-`repeats` seconds for solving the whole batch."""
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        for qp in qps:
            solve_qp(qp, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best


def run_child(body: str, pure_python: bool) -> float:
    """Elapsed seconds reported by a fresh interpreter running `body`."""
    env = dict(os.environ)
    env.pop("MPVC_PURE_PYTHON", None)
    if pure_python:
        env["MPVC_PURE_PYTHON"] = "1"
    out = subprocess.run([sys.executable, "-c", body], env=env,
                         capture_output=True, text=True, check=True)
    return float(out.stdout.strip().splitlines()[-1])


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-random", type=int, default=200,
                    help="random QPs per size class")
    ap.add_argument("--repeats", type=int, default=3,
                    help="best-of repeats for the kernel batches")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--skip-end-to-end", action="store_true")
    args = ap.parse_args(argv)

    if DEFAULT_BACKEND != "cython":
        print("compiled kernel not available; nothing to compare")
        return 1

    rng = np.random.default_rng(args.seed)
    print(f"kernel batches ({args.n_random} QPs per class, "
          f"best of {args.repeats}):")
    print(f"  {'class':<22} {'python':>10} {'cython':>10} {'speedup':>8}")
    for label, n, me, mi in SIZE_CLASSES:
        qps = [random_qp(rng, n, me, mi) for _ in range(args.n_random)]
        t_py = time_batch(qps, "python", args.repeats)
        t_cy = time_batch(qps, "cython", args.repeats)
        per_py = t_py / args.n_random * 1e6
        per_cy = t_cy / args.n_random * 1e6
        print(f"  {label:<22} {per_py:>8.0f}us {per_cy:>8.0f}us "
              f"{t_py / t_cy:>7.2f}x")

    if not args.skip_end_to_end:
        print("\nend-to-end driver runs (fresh interpreter per backend):")
        print(f"  {'workload':<28} {'python':>10} {'cython':>10} {'speedup':>8}")
        for label, body in END_TO_END:
            t_py = run_child(body, pure_python=True)
            t_cy = run_child(body, pure_python=False)
            print(f"  {label:<28} {t_py:>9.2f}s {t_cy:>9.2f}s "
                  f"{t_py / t_cy:>7.2f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
