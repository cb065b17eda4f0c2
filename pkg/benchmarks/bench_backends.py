#!/usr/bin/env python3
"""Benchmark the compiled kernel backend against the NumPy fallback.

Times the full adversarial train step (clean forward/backward, FGM
perturbation, adversarial forward/backward, Adam update) at several model
shapes, then a short end-to-end training run. Usage:

    python benchmarks/bench_backends.py [--steps N]
"""

import argparse
import time

import numpy as np

from abexrat import backends
from abexrat.mlp import init_params
from abexrat.objective import FocalConfig
from abexrat.rat import RatConfig, rat_batch_loss
from abexrat.trainer import AdamState, TrainConfig, adam_step, train_run

SHAPES = [
    # (batch, input dim, hidden, classes)
    (16, 32, 64, 7),
    (16, 64, 256, 7),
    (16, 384, 256, 7),
    (64, 64, 256, 7),
]


def time_train_step(be_name, B, d, h, C, steps):
    with backends.use(be_name):
        params = init_params(0, d, h, C)
        state = AdamState(params)
        rng = np.random.default_rng(0)
        X = np.ascontiguousarray(rng.normal(size=(B, d)))
        y = rng.integers(0, C, size=B).astype(np.int64)
        focal = FocalConfig(gamma=3.0, alpha_mode="explicit", alpha=np.ones(C))
        rat = RatConfig(p_rat=0.5, epsilon=0.1)
        for _ in range(20):  # warm-up
            rat_batch_loss(params, X, y, focal, rat, k=1)
        t0 = time.perf_counter()
        for t in range(1, steps + 1):
            _, grads = rat_batch_loss(params, X, y, focal, rat, k=1)
            adam_step(params, grads, state, 1e-4, (0.9, 0.999), 1e-8, t)
        return (time.perf_counter() - t0) / steps


def time_training_run(be_name):
    from abexrat.dataset import stratified_split
    from abexrat.synthbench import SynthSpec, generate_synthetic

    ds = generate_synthetic(SynthSpec(class_counts=(400, 200, 100, 50), dim=64, seed=0))
    train, val, _ = stratified_split(ds, (8, 1, 1), seed=0)
    cfg = TrainConfig(
        epochs=10,
        focal=FocalConfig(gamma=3.0, alpha_mode="inverse_frequency"),
        rat=RatConfig(),
        enable_rat=True,
        seed=0,
    )
    with backends.use(be_name):
        t0 = time.perf_counter()
        train_run(train, val, cfg)
        return time.perf_counter() - t0


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--steps", type=int, default=2000, help="timed steps per shape")
    args = parser.parse_args()

    names = backends.available()
    if "cython" not in names:
        print("compiled backend not built; timing the NumPy fallback only")

    print(f"\nadversarial train step, mean of {args.steps} steps (microseconds):\n")
    header = f"{'B':>4} {'d':>5} {'h':>5} {'C':>3}" + "".join(f"{n:>12}" for n in names)
    print(header + ("     speedup" if len(names) > 1 else ""))
    for B, d, h, C in SHAPES:
        per = {n: time_train_step(n, B, d, h, C, args.steps) * 1e6 for n in names}
        row = f"{B:>4} {d:>5} {h:>5} {C:>3}" + "".join(f"{per[n]:>11.1f}u" for n in names)
        if len(names) > 1:
            row += f"{per['numpy'] / per['cython']:>11.2f}x"
        print(row)

    print("\nend-to-end training run (10 epochs, 600 samples, d=64, h=256):")
    for n in names:
        print(f"  {n:>7}: {time_training_run(n):.2f}s")


if __name__ == "__main__":
    main()
