"""Deterministic queue-based traffic microsimulator and the scalar objective.

A scenario is a rows x cols grid of signalized intersections.  Every
intersection has four approaches (from north, east, south, west); each
approach is green in exactly one phase of the cycle, so green + red signal
counts per phase always sum to 4.  A phase plan assigns an integer duration
in seconds to every (intersection, phase) pair, flattened row-major to a
vector of dimension ``intersections * phases``.

Vehicles follow fixed shortest grid routes.  Traversing a link takes a
constant ``link_travel_time_s``; at every intermediate intersection the
vehicle waits in a FIFO approach queue until its approach turns green, and
queued vehicles discharge at ``saturation_flow`` per second.  Each second a
vehicle sits in a queue adds one second of stopped time.
"""

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from ._kernels import step_loop

GRID_SPEC_KEYS = ("rows", "cols", "phases", "vehicles", "horizon_s", "seed",
                  "d_min", "d_max", "saturation_flow", "link_travel_time_s")


@dataclass(frozen=True)
class GridSpec:
    """Parameters that fully determine a grid scenario."""
    rows: int = 3
    cols: int = 3
    phases: int = 4
    vehicles: int = 100
    horizon_s: int = 500
    seed: int = 1
    d_min: int = 5
    d_max: int = 60
    saturation_flow: float = 1.0
    link_travel_time_s: int = 10


@dataclass(frozen=True)
class TrafficMetrics:
    """Per-simulation aggregates feeding the combined objective."""
    arrived: int
    not_arrived: int
    total_travel_time: int
    total_stopped_time: int


@dataclass
class TrafficScenario:
    """Immutable network description; safe to share across threads."""
    n_intersections: int
    n_phases: int
    green_counts: np.ndarray      # (inter, phases) int64, green signals per phase
    red_counts: np.ndarray        # (inter, phases) int64
    green_phase: np.ndarray       # (inter, 4) int64, phase in which approach is green
    departures: np.ndarray        # (vehicles,) int64
    routes: list = field(repr=False, default_factory=list)
    legs_offsets: np.ndarray = None   # (vehicles + 1,) int64 into legs_queue
    legs_queue: np.ndarray = None     # flat int64, -1 marks the destination leg
    horizon_s: int = 500
    saturation_flow: float = 1.0
    link_travel_time_s: int = 10
    d_min: int = 5
    d_max: int = 60

    @property
    def dimension(self):
        return self.n_intersections * self.n_phases

    @property
    def n_vehicles(self):
        return self.departures.shape[0]

    @property
    def step_units(self):
        """Work units of one simulation: seconds x (vehicles + queues)."""
        return self.horizon_s * (self.n_vehicles + 4 * self.n_intersections)


def grid_spec_from_json(path):
    """Load a GridSpec from a JSON document with exactly the documented keys."""
    with open(path) as fh:
        doc = json.load(fh)
    return grid_spec_from_dict(doc)


def grid_spec_from_dict(doc):
    unknown = set(doc) - set(GRID_SPEC_KEYS)
    if unknown:
        raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
    return GridSpec(**{k: doc[k] for k in GRID_SPEC_KEYS if k in doc})


def build_scenario(spec: GridSpec) -> TrafficScenario:
    """Construct the deterministic scenario for a grid spec and seed.

    Routes are shortest grid paths (rows first, then columns) between
    uniformly drawn origin/destination intersections.  Raises ValueError for
    specs that cannot yield a well-formed scenario.
    """
    if spec.rows < 1 or spec.cols < 1:
        raise ValueError("grid must have at least one intersection")
    if spec.vehicles < 1:
        raise ValueError("scenario needs at least one vehicle")
    if spec.horizon_s < 1:
        raise ValueError("horizon_s must be >= 1")
    if spec.phases < 2:
        # With one phase all four approaches would be green at once and the
        # red count would be zero, making the green/red ratio undefined.
        raise ValueError("phases must be >= 2 so every phase keeps a red signal")
    if not 1 <= spec.d_min <= spec.d_max:
        raise ValueError("duration bounds must satisfy 1 <= d_min <= d_max")
    if spec.saturation_flow <= 0:
        raise ValueError("saturation_flow must be positive")
    if spec.link_travel_time_s < 1:
        raise ValueError("link_travel_time_s must be >= 1")

    inter = spec.rows * spec.cols
    fs = spec.phases

    # Approach a (0=N, 1=E, 2=S, 3=W) is green in phase a mod fs.
    green_phase = np.empty((inter, 4), np.int64)
    for a in range(4):
        green_phase[:, a] = a % fs
    green_counts = np.zeros((inter, fs), np.int64)
    for a in range(4):
        green_counts[:, a % fs] += 1
    red_counts = 4 - green_counts

    rng = np.random.default_rng(spec.seed)
    departures = np.empty(spec.vehicles, np.int64)
    routes = []
    legs_queue = []
    legs_offsets = np.zeros(spec.vehicles + 1, np.int64)

    depart_window = max(1, spec.horizon_s // 2)
    for v in range(spec.vehicles):
        origin = int(rng.integers(inter))
        if inter > 1:
            dest = int(rng.integers(inter - 1))
            if dest >= origin:
                dest += 1
        else:
            dest = origin
        departures[v] = int(rng.integers(depart_window))

        route = _grid_route(origin, dest, spec.cols)
        routes.append(route)
        for step in range(len(route) - 1):
            node = route[step + 1]
            if step + 1 == len(route) - 1:
                legs_queue.append(-1)
            else:
                legs_queue.append(node * 4 + _approach_from(route[step], node, spec.cols))
        legs_offsets[v + 1] = len(legs_queue)

    return TrafficScenario(
        n_intersections=inter,
        n_phases=fs,
        green_counts=green_counts,
        red_counts=red_counts,
        green_phase=green_phase,
        departures=departures,
        routes=routes,
        legs_offsets=legs_offsets,
        legs_queue=np.array(legs_queue, np.int64) if legs_queue else np.zeros(0, np.int64),
        horizon_s=spec.horizon_s,
        saturation_flow=float(spec.saturation_flow),
        link_travel_time_s=spec.link_travel_time_s,
        d_min=spec.d_min,
        d_max=spec.d_max,
    )


def _grid_route(origin, dest, cols):
    """Shortest L-shaped path: adjust row first, then column."""
    r0, c0 = divmod(origin, cols)
    r1, c1 = divmod(dest, cols)
    route = [origin]
    r, c = r0, c0
    while r != r1:
        r += 1 if r1 > r else -1
        route.append(r * cols + c)
    while c != c1:
        c += 1 if c1 > c else -1
        route.append(r * cols + c)
    return route


def _approach_from(prev_node, node, cols):
    """Approach index at `node` for traffic coming from `prev_node`."""
    pr, pc = divmod(prev_node, cols)
    nr, nc = divmod(node, cols)
    if pr == nr - 1:
        return 0  # from the north
    if pc == nc + 1:
        return 1  # from the east
    if pr == nr + 1:
        return 2  # from the south
    return 3      # from the west


def check_plan(scenario: TrafficScenario, plan) -> np.ndarray:
    """Validate dimension and bounds; returns the plan as an int64 array."""
    arr = np.asarray(plan, np.int64)
    if arr.shape != (scenario.dimension,):
        raise ValueError(
            f"plan dimension {arr.shape} does not match scenario dimension "
            f"({scenario.dimension},)")
    if arr.min() < scenario.d_min or arr.max() > scenario.d_max:
        raise ValueError(
            f"plan durations must lie in [{scenario.d_min}, {scenario.d_max}]")
    return arr


def random_plan(scenario: TrafficScenario, rng) -> np.ndarray:
    return rng.integers(scenario.d_min, scenario.d_max + 1,
                        size=scenario.dimension).astype(np.int64)


def simulate(scenario: TrafficScenario, plan) -> TrafficMetrics:
    """Run the horizon second by second; pure function of its inputs."""
    arr = check_plan(scenario, plan)
    durations = np.ascontiguousarray(
        arr.reshape(scenario.n_intersections, scenario.n_phases))
    out = np.zeros(4, np.int64)
    step_loop(scenario.horizon_s, scenario.departures, scenario.legs_offsets,
              scenario.legs_queue, scenario.link_travel_time_s,
              scenario.saturation_flow, scenario.green_phase, durations,
              scenario.n_phases, out)
    return TrafficMetrics(arrived=int(out[0]), not_arrived=int(out[1]),
                          total_travel_time=int(out[2]),
                          total_stopped_time=int(out[3]))


def phase_ratio(scenario: TrafficScenario, plan) -> float:
    """Duration-weighted sum of green/red signal ratios over all phases."""
    arr = check_plan(scenario, plan)
    if np.any(scenario.red_counts == 0):
        raise ZeroDivisionError("a phase state has no red signals")
    d = arr.reshape(scenario.n_intersections, scenario.n_phases)
    return float(np.sum(d * scenario.green_counts / scenario.red_counts))


def combined_fitness(metrics: TrafficMetrics, ratio: float, horizon_s: int) -> float:
    """Scalar objective; lower is better.

    Penalizes travel time, stopped time, and non-arrivals (charged a full
    horizon each); rewards arrivals quadratically and green-heavy plans.
    """
    denominator = metrics.arrived ** 2 + ratio
    if denominator <= 0:
        raise ZeroDivisionError(
            "degenerate objective: no arrivals and zero green/red ratio")
    numerator = (metrics.total_travel_time + metrics.total_stopped_time
                 + metrics.not_arrived * horizon_s)
    return numerator / denominator


def evaluate_plan(scenario: TrafficScenario, plan) -> float:
    """Simulate, form the green/red ratio, combine: one objective value."""
    metrics = simulate(scenario, plan)
    ratio = phase_ratio(scenario, plan)
    return combined_fitness(metrics, ratio, scenario.horizon_s)


class Evaluator:
    """Binds a scenario and counts actual fitness evaluations.

    ``simulate`` is pure, so one Evaluator may be shared across threads only
    if callers serialize calls (the counter is a plain int and profiling is
    process-global anyway).
    """

    def __init__(self, scenario: TrafficScenario):
        self.scenario = scenario
        self.evaluations = 0

    @property
    def dimension(self):
        return self.scenario.dimension

    @property
    def d_min(self):
        return self.scenario.d_min

    @property
    def d_max(self):
        return self.scenario.d_max

    @property
    def modeled_cost_s(self):
        """Deterministic stand-in cost of one evaluation (see energy module)."""
        from .energy import SIM_UNIT_S
        return self.scenario.step_units * SIM_UNIT_S

    def __call__(self, plan) -> float:
        fitness = evaluate_plan(self.scenario, plan)
        self.evaluations += 1
        return fitness


def plan_hash(plan) -> str:
    """Stable content hash used to key golden-metric fixtures."""
    text = ",".join(str(int(d)) for d in np.asarray(plan).ravel())
    return hashlib.sha256(text.encode()).hexdigest()


GOLDEN_CSV_HEADER = "plan_hash,NV_D,NV_ND,TT_v,TT_EP,P,F"


def golden_row(scenario: TrafficScenario, plan) -> str:
    """One golden-fixture CSV row for a plan evaluated on a scenario.

    Fixture values themselves should come from an independent reference
    implementation; this helper only formats the row.
    """
    metrics = simulate(scenario, plan)
    ratio = phase_ratio(scenario, plan)
    fitness = combined_fitness(metrics, ratio, scenario.horizon_s)
    return (f"{plan_hash(plan)},{metrics.arrived},{metrics.not_arrived},"
            f"{metrics.total_travel_time},{metrics.total_stopped_time},"
            f"{ratio!r},{fitness!r}")
