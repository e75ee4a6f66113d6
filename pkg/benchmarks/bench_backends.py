"""Time the numba kernels against their pure-numpy fallbacks.

Imports both implementations directly (the SCUSUM_DISABLE_NUMBA flag only
picks the default for library calls), warms up JIT compilation, and reports
best-of-repeats wall times for chain generation and the detect-and-reset
run-length scan.

    python benchmarks/bench_backends.py [--steps 1000000] [--dim 10] [--repeats 3]
"""

import argparse
import time

import numpy as np

from scusum import _kernels
from scusum.detector import score_increments
from scusum.markov import GaussianKernelSpec, TrajectoryConfig, closed_form_score, simulate_path


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--steps", type=int, default=1_000_000)
    parser.add_argument("--dim", type=int, default=10)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    if not _kernels.HAVE_NUMBA:
        raise SystemExit("numba unavailable (or disabled); nothing to compare")

    rng = np.random.default_rng(0)
    x0 = np.zeros(args.dim)
    noise = rng.standard_normal((args.steps, args.dim))

    print(f"chain stepping: {args.steps} steps, dim {args.dim}")
    _kernels._chain_steps_numba(x0, noise[:10], 0.3, 0.2, 0.3)  # warm-up/compile
    t_numba = best_of(lambda: _kernels._chain_steps_numba(x0, noise, 0.3, 0.2, 0.3), args.repeats)
    t_numpy = best_of(lambda: _kernels._chain_steps_numpy(x0, noise, 0.3, 0.2, 0.3), args.repeats)
    print(f"  numba {t_numba:.3f}s | numpy {t_numpy:.3f}s | speedup {t_numpy / t_numba:.1f}x")

    # realistic increment stream: pre-change law scored against both kernels
    pre = GaussianKernelSpec(dim=args.dim, alpha=0.3, sigma=0.3, shift=0.2)
    post = GaussianKernelSpec(dim=args.dim, alpha=0.6, sigma=0.5, shift=0.9)
    states = simulate_path(TrajectoryConfig(pre=pre, length=args.steps, seed=1))
    increments = score_increments(closed_form_score(pre), closed_form_score(post), states)

    print(f"run-length scan: {len(increments)} increments, threshold sweep feel (b=60, M=600)")
    _kernels._run_lengths_numba(increments[:10], 60.0, 600.0)  # warm-up/compile
    t_numba = best_of(lambda: _kernels._run_lengths_numba(increments, 60.0, 600.0), args.repeats)
    t_numpy = best_of(lambda: _kernels._run_lengths_numpy(increments, 60.0, 600.0), args.repeats)
    print(f"  numba {t_numba:.3f}s | numpy {t_numpy:.3f}s | speedup {t_numpy / t_numba:.1f}x")

    print(f"cusum trace: {len(increments)} increments")
    _kernels._cusum_trace_numba(increments[:10], 600.0)
    t_numba = best_of(lambda: _kernels._cusum_trace_numba(increments, 600.0), args.repeats)
    t_numpy = best_of(lambda: _kernels._cusum_trace_numpy(increments, 600.0), args.repeats)
    print(f"  numba {t_numba:.3f}s | numpy {t_numpy:.3f}s | speedup {t_numpy / t_numba:.1f}x")


if __name__ == "__main__":
    main()
