"""Benchmark the numba-compiled kernels against the pure-numpy fallback.

The implementation is chosen at import time by ``RISEROP_NO_NUMBA``, so the
comparison has to span two interpreter processes: the script re-runs itself
as a ``--worker`` under each setting of the flag and prints a side-by-side
table of best-of-N timings.

Usage::

    python3 benchmarks/bench_kernels.py            # compare both paths
    python3 benchmarks/bench_kernels.py --repeats 9
"""

import argparse
import json
import math
import os
import subprocess
import sys
import time


def _workloads():
    """Build (name, callable) pairs sized like the real hot paths."""
    import numpy as np

    from riserop import kernels

    rng = np.random.default_rng(42)

    # MLP batch passes at desk scale: 1200-row batch, 3 inputs, 6x50 tanh
    # hidden stack, 50 latent outputs (a reconstruction branch net).
    widths = [3] + [50] * 6 + [50]
    weights = tuple(np.ascontiguousarray(rng.normal(size=(widths[i + 1], widths[i])))
                    for i in range(len(widths) - 1))
    biases = tuple(np.zeros(widths[i + 1]) for i in range(len(widths) - 1))
    x = np.ascontiguousarray(rng.normal(size=(1200, 3)))
    hidden = tuple(np.empty((1200, w)) for w in widths[1:-1])
    dout = np.ascontiguousarray(rng.normal(size=(1200, 50)))
    dweights = tuple(np.empty_like(w) for w in weights)
    dbiases = tuple(np.empty_like(b) for b in biases)

    n_params = sum(w.size for w in weights) + sum(b.size for b in biases)
    p = rng.normal(size=n_params)
    g = rng.normal(size=n_params)
    m = np.zeros(n_params)
    v = np.zeros(n_params)

    # Row interpolation at simulator scale: 2400 snapshots on a 500-point
    # grid sampled at 100 off-grid locations.
    values = rng.normal(size=(2400, 500))
    grid = np.linspace(0.0, 38.0, 500)
    targets = np.sort(rng.uniform(0.0, 38.0, size=100))

    sym = rng.normal(size=(40, 40))
    sym = sym + sym.T

    # RK4 at simulator scale: 12 modes, 48 forcing columns (16 shedding
    # cells x 3 harmonics), 2 s of 120 Hz output with 20 substeps.
    omega2 = (2.0 * math.pi * np.linspace(1.0, 38.0, 12)) ** 2
    amp = rng.normal(size=(12, 48))
    omf = 2.0 * math.pi * rng.uniform(1.0, 30.0, size=48)
    phase = rng.uniform(0.0, 2.0 * math.pi, size=48)
    q0 = np.zeros(12)
    v0 = np.zeros(12)

    def forward():
        kernels.mlp_batch_forward(weights, biases, x, kernels.ACT_TANH)

    def forward_backward():
        out = kernels.mlp_batch_forward_cached(weights, biases, x,
                                               kernels.ACT_TANH, hidden)
        kernels.mlp_batch_backward(weights, x, kernels.ACT_TANH, hidden,
                                   out, dweights, dbiases)

    def adam():
        kernels.adam_update_flat(p, g, m, v, 1e-3, 0.9, 0.999, 1e-8, 7)

    def interp():
        kernels.interp_rows(values, grid, targets)

    def interp_slopes():
        kernels.interp_rows_slopes(values, grid, targets)

    def jacobi():
        kernels.jacobi_eigh(sym, 1e-14)

    def rk4():
        kernels.rk4_modal(omega2, 1.5, amp, omf, phase, q0, v0,
                          0.0, 1.0 / 120.0, 240, 20)

    return [
        ("mlp_forward (1200x3, 6x50)", forward),
        ("mlp_forward+backward", forward_backward),
        ("adam_update_flat (%dk params)" % (n_params // 1000), adam),
        ("interp_rows (2400x500 @ 100)", interp),
        ("interp_rows_slopes", interp_slopes),
        ("jacobi_eigh (40x40)", jacobi),
        ("rk4_modal (12 modes, 2 s)", rk4),
    ]


def run_worker(repeats):
    results = {}
    for name, fn in _workloads():
        fn()  # warm-up; triggers JIT compilation on the numba path
        fn()
        best = min(_timed(fn) for _ in range(repeats))
        results[name] = best
    json.dump(results, sys.stdout)


def _timed(fn):
    t0 = time.perf_counter()
    fn()
    return time.perf_counter() - t0


def _spawn(no_numba, repeats):
    env = dict(os.environ)
    env["RISEROP_NO_NUMBA"] = "1" if no_numba else "0"
    proc = subprocess.run(
        [sys.executable, os.path.abspath(__file__), "--worker",
         "--repeats", str(repeats)],
        env=env, capture_output=True, text=True, check=True)
    return json.loads(proc.stdout)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5,
                        help="timed repetitions per kernel (best is kept)")
    parser.add_argument("--worker", action="store_true",
                        help=argparse.SUPPRESS)
    args = parser.parse_args(argv)

    if args.worker:
        run_worker(args.repeats)
        return 0

    print("timing kernels (best of %d) ..." % args.repeats, flush=True)
    numba_times = _spawn(no_numba=False, repeats=args.repeats)
    numpy_times = _spawn(no_numba=True, repeats=args.repeats)

    width = max(len(name) for name in numba_times)
    header = f"{'kernel':<{width}}  {'numba':>10}  {'numpy':>10}  {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name, tn in numba_times.items():
        tp = numpy_times[name]
        print(f"{name:<{width}}  {tn * 1e3:>8.3f}ms  {tp * 1e3:>8.3f}ms  "
              f"{tp / tn:>7.2f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
