"""Hot inner loop of the traffic microsimulator.

The step loop below is written in plain Python over numpy arrays and gets
JIT-compiled with numba when available.  Set ``SURROPT_NUMBA=0`` to force the
interpreted path (same code, no compilation); both paths produce bit-identical
metrics because they execute the exact same statements.
"""

import os

import numpy as np


def _step_loop(horizon, departures, legs_off, legs_queue, link_tt, sat_flow,
               green_phase, durations, n_phases, out):
    """Advance the network one second at a time and accumulate the metrics.

    Vehicle states: 0 = not departed, 1 = on a link, 2 = queued, 3 = arrived.
    ``legs_queue[legs_off[v] + l]`` is the approach-queue id vehicle v joins
    after traversing leg l, or -1 when that leg ends at its destination.
    ``out`` receives (arrived, not_arrived, travel_time_s, stopped_time_s).
    """
    n_vehicles = departures.shape[0]
    n_inter = durations.shape[0]
    n_queues = n_inter * 4

    phase = np.zeros(n_inter, np.int64)
    time_in_phase = np.zeros(n_inter, np.int64)

    # Ring buffers; at most n_vehicles ids can ever sit in one queue.
    queue_buf = np.empty((n_queues, n_vehicles), np.int64)
    queue_head = np.zeros(n_queues, np.int64)
    queue_len = np.zeros(n_queues, np.int64)
    credit = np.zeros(n_queues, np.float64)

    state = np.zeros(n_vehicles, np.int64)
    arrival_t = np.full(n_vehicles, -1, np.int64)
    leg = np.zeros(n_vehicles, np.int64)

    arrived = 0
    travel_time = 0
    stopped_time = 0

    for t in range(horizon):
        if t > 0:
            for i in range(n_inter):
                time_in_phase[i] += 1
                if time_in_phase[i] >= durations[i, phase[i]]:
                    phase[i] = (phase[i] + 1) % n_phases
                    time_in_phase[i] = 0

        for v in range(n_vehicles):
            if state[v] == 0 and departures[v] == t:
                if legs_off[v + 1] == legs_off[v]:
                    # Origin equals destination: arrives on the spot.
                    state[v] = 3
                    arrived += 1
                else:
                    state[v] = 1
                    leg[v] = 0
                    arrival_t[v] = t + link_tt

        for v in range(n_vehicles):
            if state[v] == 1 and arrival_t[v] == t:
                q = legs_queue[legs_off[v] + leg[v]]
                if q < 0:
                    state[v] = 3
                    arrived += 1
                    travel_time += t - departures[v]
                else:
                    state[v] = 2
                    tail = (queue_head[q] + queue_len[q]) % n_vehicles
                    queue_buf[q, tail] = v
                    queue_len[q] += 1

        for q in range(n_queues):
            i = q // 4
            if green_phase[i, q % 4] == phase[i]:
                credit[q] += sat_flow
                while credit[q] >= 1.0 and queue_len[q] > 0:
                    v = queue_buf[q, queue_head[q]]
                    queue_head[q] = (queue_head[q] + 1) % n_vehicles
                    queue_len[q] -= 1
                    credit[q] -= 1.0
                    leg[v] += 1
                    state[v] = 1
                    arrival_t[v] = t + link_tt
                if queue_len[q] == 0:
                    credit[q] = 0.0
            else:
                credit[q] = 0.0

        for q in range(n_queues):
            stopped_time += queue_len[q]

    out[0] = arrived
    out[1] = n_vehicles - arrived
    out[2] = travel_time
    out[3] = stopped_time


step_loop_python = _step_loop

USE_NUMBA = os.environ.get("SURROPT_NUMBA", "1") != "0"
if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:
        USE_NUMBA = False

if USE_NUMBA:
    step_loop = njit(cache=True)(_step_loop)
else:
    step_loop = _step_loop


def compiled_step_loop():
    """JIT-compiled loop regardless of the env flag (for benchmarks/tests)."""
    from numba import njit as _njit
    return _njit(cache=True)(_step_loop)
