"""Time the compiled and numpy LiLAW kernels, and one training epoch per arm.

Usage: python benchmarks/bench_kernels.py [--rows N] [--repeats R]
"""

import argparse
import dataclasses
import time

import numpy as np

from lilaw_lab import kernels
from lilaw_lab.data import SplitSpec, gen_blobs, split_train_val
from lilaw_lab.noise import inject_uniform
from lilaw_lab.trainer import TrainConfig, train


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_terms(rows, repeats):
    rng = np.random.default_rng(0)
    probs = rng.dirichlet(np.ones(10), size=rows)
    labels = rng.integers(0, 10, rows)
    logits = np.log(probs)
    s = probs[np.arange(rows), labels]
    m = probs.max(axis=1)
    loss = -np.log(s)
    print(f"{'backend':<8} {'lilaw_terms':>12} {'softmax_confidence':>19}   ({rows} rows, best of {repeats})")
    for name in ("python", "cython"):
        try:
            mod = kernels.get_backend(name)
        except ImportError:
            print(f"{name:<8} {'unavailable':>12}")
            continue
        t_terms = best_of(lambda: mod.lilaw_terms(s, m, loss, 9.0, 3.0, 7.0, True, True, True), repeats)
        t_soft = best_of(lambda: mod.softmax_confidence(logits, labels, -1.0), repeats)
        print(f"{name:<8} {t_terms * 1e3:>10.1f}ms {t_soft * 1e3:>17.1f}ms")


def bench_epoch(repeats):
    pool = gen_blobs(0, 3, 600, 10, 3.0)
    tr, va = split_train_val(pool, SplitSpec(0.15, 1))
    tr, _ = inject_uniform(tr, 0.4, 2)
    va, _ = inject_uniform(va, 0.4, 3)
    cfg = TrainConfig(epochs=5, warmup_epochs=0, early_stop_patience=0, batch_size=32)
    per_epoch = {}
    for arm in (False, True):
        runs = []
        for _ in range(repeats):
            _, log = train(dataclasses.replace(cfg, lilaw_enabled=arm), tr, va)
            runs.append(sum(log.epoch_seconds) / len(log.epoch_seconds))
        per_epoch[arm] = min(runs)
    print(f"epoch (batch 32, {len(tr)} samples, backend {kernels.BACKEND}): baseline "
          f"{per_epoch[False] * 1e3:.1f}ms, LiLAW {per_epoch[True] * 1e3:.1f}ms, "
          f"ratio {per_epoch[True] / per_epoch[False]:.2f}")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--rows", type=int, default=1_000_000)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()
    bench_terms(args.rows, args.repeats)
    bench_epoch(args.repeats)


if __name__ == "__main__":
    main()
