"""Benchmark the compiled kernels against the pure-Python fallback.

Runs each kernel on episode-realistic shapes, then times full expert
rollouts with each backend patched into the kernel dispatch table.

    python3 benchmarks/bench_kernels.py [--episodes 30]
"""

import argparse
import time
from dataclasses import replace

import numpy as np

from sagdp import _kernels_py
from sagdp import kernels
from sagdp.agents import ExpertPolicy, rollout_return
from sagdp.env import SagdpEnv
from sagdp.scenario_gen import GenConfig, gen_scenario

try:
    from sagdp import _kernels_cy
except ImportError:
    _kernels_cy = None

KERNEL_NAMES = ("assign_slots", "count_held", "fold_queue", "count_by_quarter", "enroute_matrix")


def micro_inputs(rng):
    n, m = 220, 320
    return {
        "assign_slots": lambda: (
            rng.integers(0, m - 40, size=n).astype(np.int64),
            rng.integers(0, 3, size=m).astype(np.int64),
            0,
        ),
        "count_held": lambda: (
            rng.integers(0, 80, size=n).astype(np.int64),
            rng.integers(0, 100, size=n).astype(np.int64),
            80,
        ),
        "fold_queue": lambda: (
            2,
            rng.integers(0, 8, size=80).astype(np.int64),
            rng.integers(1, 9, size=80).astype(np.int64),
        ),
        "count_by_quarter": lambda: (rng.integers(0, 90, size=n).astype(np.int64), 0, 80),
        "enroute_matrix": lambda: (
            dep := rng.integers(-5, 75, size=n).astype(np.int64),
            dep + rng.integers(1, 13, size=n).astype(np.int64),
            30,
            8,
            79,
        ),
    }


def time_call(fn, args_factory, repeats=2000):
    args = args_factory()
    start = time.perf_counter()
    for _ in range(repeats):
        a = args_factory() if fn.__name__ == "assign_slots" else args  # capacity is consumed
        fn(*a)
    return (time.perf_counter() - start) / repeats * 1e6  # microseconds


def patch_backend(impl):
    for name in KERNEL_NAMES:
        setattr(kernels, name, getattr(impl, name))


def episode_rate(episodes):
    policy = ExpertPolicy()
    cfg = GenConfig(seed=0, n_flights=220, peak_demand_per_quarter=10)
    scenarios = [gen_scenario(replace(cfg, seed=i)) for i in range(episodes)]
    env = SagdpEnv(scenarios[0])
    start = time.perf_counter()
    for sc in scenarios:
        rollout_return(env, policy, sc)
    elapsed = time.perf_counter() - start
    return episodes / elapsed


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--episodes", type=int, default=30)
    args = parser.parse_args()

    backends = [("python", _kernels_py)]
    if _kernels_cy is not None:
        backends.append(("cython", _kernels_cy))
    else:
        print("compiled kernels unavailable; benchmarking the fallback only")

    rng = np.random.default_rng(0)
    rows = {}
    for name, impl in backends:
        inputs = micro_inputs(rng)
        rows[name] = {k: time_call(getattr(impl, k), inputs[k]) for k in KERNEL_NAMES}

    print(f"{'kernel':<18}" + "".join(f"{name + ' (us)':>14}" for name, _ in backends))
    for k in KERNEL_NAMES:
        print(f"{k:<18}" + "".join(f"{rows[name][k]:>14.2f}" for name, _ in backends))

    print()
    original = {name: getattr(kernels, name) for name in KERNEL_NAMES}
    try:
        for name, impl in backends:
            patch_backend(impl)
            rate = episode_rate(args.episodes)
            print(f"full episode rollout [{name:>7}]: {rate:7.1f} episodes/s")
    finally:
        for name, fn in original.items():
            setattr(kernels, name, fn)


if __name__ == "__main__":
    main()
