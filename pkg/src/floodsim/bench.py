"""Benchmark the compiled kernel against the pure-Python engine.

Runs the same seeded realizations on both backends, checks that the
results agree exactly, and reports throughput in agent-steps per second.
"""

from __future__ import annotations

import time

import numpy as np

from . import _backend
from ._backend import POLICY_RW, POLICY_WAYPOINT
from . import _engine_py


def _time_backend(runner, n, m, policy, reps, seed):
    floods = []
    steps = 0
    t0 = time.perf_counter()
    for rep in range(reps):
        flood, _, _, steps_run = runner(
            n, m, policy, 0.0, 0, 10_000_000, seed + rep
        )
        floods.append(int(flood))
        steps += steps_run
    elapsed = time.perf_counter() - t0
    return floods, steps * m, elapsed


def run_benchmark(n: int = 50, m: int = 50, reps: int = 5, seed: int = 0) -> dict:
    kern = _backend.kernel_module()
    workloads = [("mrwp", POLICY_WAYPOINT), ("rw", POLICY_RW)]
    rows = []
    table = [
        f"benchmark: n={n} m={m} reps={reps} seed={seed}",
        f"{'workload':<10} {'engine':<10} {'agent-steps/s':>14} {'seconds':>9}",
    ]
    for name, policy in workloads:
        py_floods, py_steps, py_t = _time_backend(
            _engine_py.run_grid_realization, n, m, policy, reps, seed
        )
        row = {
            "workload": name,
            "python_seconds": py_t,
            "python_agent_steps_per_s": py_steps / py_t,
            "flood_times": py_floods,
        }
        table.append(
            f"{name:<10} {'python':<10} {py_steps / py_t:>14.3e} {py_t:>9.3f}"
        )
        if kern is not None:
            c_floods, c_steps, c_t = _time_backend(
                kern.run_grid_realization, n, m, policy, reps, seed
            )
            if c_floods != py_floods:
                raise AssertionError(
                    f"engines disagree on {name}: {c_floods} vs {py_floods}"
                )
            row.update(
                compiled_seconds=c_t,
                compiled_agent_steps_per_s=c_steps / c_t,
                speedup=py_t / c_t,
                results_equal=True,
            )
            table.append(
                f"{name:<10} {'compiled':<10} {c_steps / c_t:>14.3e} {c_t:>9.3f}"
                f"   ({py_t / c_t:.1f}x)"
            )
        rows.append(row)
    return {
        "n": n,
        "m": m,
        "reps": reps,
        "seed": seed,
        "compiled_available": kern is not None,
        "workloads": rows,
        "table": table,
    }
