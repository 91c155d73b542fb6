import numpy as np

from surropt import _kernels
from surropt.traffic import random_plan, simulate


def _run_kernel(kernel, scenario, plan):
    durations = np.ascontiguousarray(
        np.asarray(plan, np.int64).reshape(scenario.n_intersections,
                                           scenario.n_phases))
    out = np.zeros(4, np.int64)
    kernel(scenario.horizon_s, scenario.departures, scenario.legs_offsets,
           scenario.legs_queue, scenario.link_travel_time_s,
           scenario.saturation_flow, scenario.green_phase, durations,
           scenario.n_phases, out)
    return tuple(out)


def test_python_and_jit_paths_agree(desk_scenario, rng):
    jit = _kernels.compiled_step_loop()
    for _ in range(5):
        plan = random_plan(desk_scenario, rng)
        assert (_run_kernel(_kernels.step_loop_python, desk_scenario, plan)
                == _run_kernel(jit, desk_scenario, plan))


def test_active_kernel_matches_python_path(tiny_scenario, rng):
    plan = random_plan(tiny_scenario, rng)
    m = simulate(tiny_scenario, plan)
    assert (_run_kernel(_kernels.step_loop_python, tiny_scenario, plan)
            == (m.arrived, m.not_arrived, m.total_travel_time,
                m.total_stopped_time))


def test_env_flag_disables_jit_with_identical_metrics(tiny_scenario, rng):
    import os
    import subprocess
    import sys

    plan = random_plan(tiny_scenario, rng)
    expected = simulate(tiny_scenario, plan)
    script = (
        "from surropt import _kernels\n"
        "assert not _kernels.USE_NUMBA\n"
        "assert _kernels.step_loop is _kernels.step_loop_python\n"
        "from surropt.traffic import GridSpec, build_scenario, simulate\n"
        "import numpy as np\n"
        "sc = build_scenario(GridSpec(rows=2, cols=2, phases=2, vehicles=20,"
        " horizon_s=120, seed=3))\n"
        f"m = simulate(sc, np.array({plan.tolist()}, np.int64))\n"
        f"assert m.arrived == {expected.arrived}\n"
        f"assert m.total_stopped_time == {expected.total_stopped_time}\n"
        f"assert m.total_travel_time == {expected.total_travel_time}\n"
    )
    env = dict(os.environ, SURROPT_NUMBA="0")
    subprocess.run([sys.executable, "-c", script], check=True, env=env)


def test_fractional_saturation_flow_slows_discharge(tiny_scenario, rng):
    slow = type(tiny_scenario)(**{**tiny_scenario.__dict__, "saturation_flow": 0.5})
    plan = random_plan(tiny_scenario, rng)
    fast = simulate(tiny_scenario, plan)
    half = simulate(slow, plan)
    assert half.total_stopped_time >= fast.total_stopped_time
