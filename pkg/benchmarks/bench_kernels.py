#!/usr/bin/env python3
"""Benchmark the hot kernels: numba JIT vs the pure-numpy fallback.

Runs the LSTM batch-gradient kernel, the LSTM prediction kernel and the
SMO dual solver under the current mode, then re-executes itself in a
subprocess with CRYPTOBENCH_DISABLE_NUMBA=1 to time the fallback, and
prints both with speedups.

    python benchmarks/bench_kernels.py
"""

import json
import os
import subprocess
import sys
import time

import numpy as np

from cryptobench._accel import NUMBA_ENABLED
from cryptobench import lstm as lstm_mod
from cryptobench import svr as svr_mod
from cryptobench.lstm import LstmConfig, init_params
from cryptobench.svr import KernelSpec, gram_matrix


def bench_lstm_batch_gradients(repeats=8):
    rng = np.random.default_rng(0)
    params = init_params(1, 50, rng)
    xs = np.ascontiguousarray(rng.normal(size=(32, 30, 1)))
    targets = rng.normal(size=32)
    args = (xs, targets, *lstm_mod._param_arrays(params))
    lstm_mod._batch_grads_kernel(*args)  # warm-up / JIT compile
    start = time.perf_counter()
    for _ in range(repeats):
        lstm_mod._batch_grads_kernel(*args)
    return (time.perf_counter() - start) / repeats


def bench_lstm_predict(repeats=8):
    rng = np.random.default_rng(1)
    params = init_params(1, 50, rng)
    xs = np.ascontiguousarray(rng.normal(size=(64, 30, 1)))
    args = (xs, *lstm_mod._param_arrays(params))
    lstm_mod._predict_batch_kernel(*args)
    start = time.perf_counter()
    for _ in range(repeats):
        lstm_mod._predict_batch_kernel(*args)
    return (time.perf_counter() - start) / repeats


def bench_smo_solve(repeats=5):
    rng = np.random.default_rng(2)
    n = 150
    x = np.sort(rng.uniform(0, 1, size=n)).reshape(-1, 1)
    y = np.sin(6 * x[:, 0]) + 0.1 * rng.normal(size=n)
    K = np.ascontiguousarray(gram_matrix(KernelSpec("rbf", gamma=5.0), x))
    args = (K, y, 10.0, 0.05, 1e-4, 500_000)
    svr_mod._smo_solve(*args)
    start = time.perf_counter()
    for _ in range(repeats):
        beta, it, viol, conv = svr_mod._smo_solve(*args)
    return (time.perf_counter() - start) / repeats


BENCHMARKS = {
    "lstm_batch_gradients(32x30, H=50)": bench_lstm_batch_gradients,
    "lstm_predict(64x30, H=50)": bench_lstm_predict,
    "smo_solve(rbf, n=150)": bench_smo_solve,
}


def run_all():
    return {name: fn() for name, fn in BENCHMARKS.items()}


def main():
    if "--json" in sys.argv:
        print(json.dumps(run_all()))
        return

    mode = "numba JIT" if NUMBA_ENABLED else "numpy fallback"
    print(f"current mode: {mode}")
    results = run_all()
    for name, seconds in results.items():
        print(f"  {name:<38} {seconds * 1e3:10.3f} ms")

    if not NUMBA_ENABLED:
        print("\nset up numba (and unset CRYPTOBENCH_DISABLE_NUMBA) to compare")
        return

    print("\ntiming the pure-numpy fallback in a subprocess ...")
    env = dict(os.environ, CRYPTOBENCH_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, __file__, "--json"], env=env,
                         capture_output=True, text=True, check=True)
    fallback = json.loads(out.stdout.strip().splitlines()[-1])

    print(f"\n{'kernel':<38} {'numba':>12} {'numpy':>12} {'speedup':>9}")
    for name, jit_s in results.items():
        py_s = fallback[name]
        print(f"{name:<38} {jit_s * 1e3:>9.3f} ms {py_s * 1e3:>9.3f} ms "
              f"{py_s / jit_s:>8.1f}x")


if __name__ == "__main__":
    main()
