"""Compare the compiled and numpy kernel backends.

Times the per-sample kernels in isolation and a full closed-loop blind run
on the default configuration (K=10, p=30, R=10).

    python3 benchmarks/bench_kernels.py --samples 20000
"""
import argparse
import time

import numpy as np

from modadc import _kernels, harness


def micro(name, K, p, reps):
    k = _kernels.get_backend(name)
    rng = np.random.default_rng(0)
    H = rng.normal(size=(K, K * p)) * 0.01
    hist = rng.normal(size=K * p)
    A = np.eye(K)
    y = rng.uniform(0, 1024, size=K)
    e = rng.normal(size=K)
    S = np.eye(K)
    t0 = time.perf_counter()
    for _ in range(reps):
        _, err, _, vbar = k.unfold(H, hist, y, A, A, 1024.0, 800.0)
        k.lms_push(H, 1e-6, e, hist, vbar)
        k.ew_cov_update(S, e, 0.999)
    step = (time.perf_counter() - t0) / reps
    B = rng.normal(size=(K, K))
    G = B @ B.T + 1e-3 * np.eye(K)
    t0 = time.perf_counter()
    for _ in range(200):
        k.lll_gram(G, 0.99)
    lll = (time.perf_counter() - t0) / 200
    return step, lll


def end_to_end(name, N):
    _kernels.set_backend(name)
    cfg = harness.ExperimentConfig(N=N)
    t0 = time.perf_counter()
    res = harness.run_experiment(cfg)
    return time.perf_counter() - t0, res.summary


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=20000)
    ap.add_argument("--reps", type=int, default=20000)
    args = ap.parse_args()
    try:
        _kernels.get_backend("cython")
        names = ["python", "cython"]
    except ImportError:
        names = ["python"]
        print("compiled extension not built; timing the numpy fallback only")
    rows = {}
    for name in names:
        step, lll = micro(name, 10, 30, args.reps)
        wall, summary = end_to_end(name, args.samples)
        rows[name] = (step, lll, wall, summary)
    print(f"{'backend':<8}{'kernel step us':>16}{'LLL K=10 us':>14}{'blind run s':>13}{'samples/s':>11}"
          f"{'MSE dB':>9}")
    for name, (step, lll, wall, s) in rows.items():
        print(f"{name:<8}{step * 1e6:>16.2f}{lll * 1e6:>14.1f}{wall:>13.2f}{args.samples / wall:>11.0f}"
              f"{s.mse_db:>9.2f}")
    if len(rows) == 2:
        p, c = rows["python"], rows["cython"]
        print(f"speedup: kernels x{p[0] / c[0]:.1f}, LLL x{p[1] / c[1]:.1f}, end-to-end x{p[2] / c[2]:.2f}")


if __name__ == "__main__":
    main()
