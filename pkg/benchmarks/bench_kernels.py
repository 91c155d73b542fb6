"""Benchmark the simulation kernel: numba JIT vs pure-Python path.

Usage: python benchmarks/bench_kernels.py [--repeats N] [--vehicles V]
"""

import argparse
import time

import numpy as np

from surropt._kernels import compiled_step_loop, step_loop_python
from surropt.traffic import GridSpec, build_scenario, random_plan


def run_kernel(kernel, scenario, plan):
    durations = np.ascontiguousarray(
        plan.reshape(scenario.n_intersections, scenario.n_phases))
    out = np.zeros(4, np.int64)
    kernel(scenario.horizon_s, scenario.departures, scenario.legs_offsets,
           scenario.legs_queue, scenario.link_travel_time_s,
           scenario.saturation_flow, scenario.green_phase, durations,
           scenario.n_phases, out)
    return tuple(out)


def bench(kernel, scenario, plans, repeats):
    best = float("inf")
    result = None
    for _ in range(repeats):
        start = time.perf_counter()
        for plan in plans:
            result = run_kernel(kernel, scenario, plan)
        best = min(best, (time.perf_counter() - start) / len(plans))
    return best, result


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--vehicles", type=int, default=100)
    parser.add_argument("--horizon", type=int, default=500)
    parser.add_argument("--plans", type=int, default=10)
    args = parser.parse_args()

    scenario = build_scenario(GridSpec(vehicles=args.vehicles,
                                       horizon_s=args.horizon))
    rng = np.random.default_rng(0)
    plans = [random_plan(scenario, rng) for _ in range(args.plans)]

    jit = compiled_step_loop()
    run_kernel(jit, scenario, plans[0])  # compile before timing

    t_py, r_py = bench(step_loop_python, scenario, plans, args.repeats)
    t_jit, r_jit = bench(jit, scenario, plans, args.repeats)
    assert r_py == r_jit, "kernel paths disagree"

    units = scenario.step_units
    print(f"scenario: dim={scenario.dimension} vehicles={args.vehicles} "
          f"horizon={args.horizon}s ({units} step units)")
    print(f"pure python : {t_py * 1e3:8.3f} ms/evaluation")
    print(f"numba jit   : {t_jit * 1e3:8.3f} ms/evaluation")
    print(f"speedup     : {t_py / t_jit:8.1f}x")


if __name__ == "__main__":
    main()
