"""Time the compiled kernels against the numpy fallback, plus one full merge.

    python3 benchmarks/bench_kernels.py [--repeat N]

The merge timing shows where the end-to-end cost actually goes: the SVD and
QR calls inside numpy/LAPACK dominate, so the kernel speedups matter most for
closed-loop rollouts and simulation.
"""

import argparse
import time
import timeit

import numpy as np

from switchid import _pykernels
from switchid.detection import DetectionConfig, detect_switchings, segment_traces
from switchid.modeling import MergeConfig, merge_and_model
from switchid.simulator import DcDcParams, SimConfig, batch_simulate, dcdc_system, sample_initial_states

try:
    from switchid import _ckernels
except ImportError:
    _ckernels = None


def cases(rng):
    L, n, K = 200, 2, 1000
    W = rng.uniform(-1, 1, (L, n))
    b = rng.uniform(-1, 1, L)
    off, scale = np.zeros(n), np.ones(n)
    X = rng.normal(size=(20 * K, n))
    traj = np.cumsum(rng.normal(size=(K + 1, n)), axis=0)
    F = np.stack([np.eye(n) * 0.99, np.eye(n) * 0.95])
    g = rng.normal(size=(2, n))
    modes = (np.arange(K) // 10 % 2).astype(np.int64)
    betas = rng.normal(scale=0.01, size=(2, L, n))
    U = np.zeros((K, 0))
    x0 = np.array([0.5, 0.5])
    return {
        "hidden_matrix (20000x200)": lambda m: m.hidden_matrix(X, W, b, off, scale, 0),
        "switching_statistic (K=1000, p=2)": lambda m: m.switching_statistic(traj, 2, 1e-9),
        "affine_recurrence (K=1000)": lambda m: m.affine_recurrence(F, g, modes, x0),
        "elm_rollout (K=1000, L=200)": lambda m: m.elm_rollout(W, b, off, scale, 0, betas, modes, x0, U),
    }


def bench_merge():
    params = DcDcParams()
    system = dcdc_system(params, 1e-5)
    x0s = sample_initial_states(20, [0, 0], [1, 1], 0)
    traces = batch_simulate(system, SimConfig(dt=1e-5, horizon=1000, x0=(0, 0)), x0s)
    s = detect_switchings(traces, DetectionConfig(thresholds={1: 0.13}))
    segs = segment_traces(traces, s)
    t0 = time.perf_counter()
    lab = merge_and_model(segs, MergeConfig())
    return time.perf_counter() - t0, lab.model_count, len(segs)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':38s} {'python ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for name, fn in cases(rng).items():
        tp = min(timeit.repeat(lambda: fn(_pykernels), number=1, repeat=args.repeat)) * 1e3
        if _ckernels is None:
            print(f"{name:38s} {tp:10.3f} {'n/a':>10s} {'':>8s}")
            continue
        tc = min(timeit.repeat(lambda: fn(_ckernels), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:38s} {tp:10.3f} {tc:10.3f} {tp / tc:7.1f}x")
    secs, models, nseg = bench_merge()
    print(f"\nDC-DC merge ({nseg} segments -> {models} models): {secs:.2f} s, LAPACK-bound")


if __name__ == "__main__":
    main()
