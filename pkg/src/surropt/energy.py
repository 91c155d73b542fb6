"""Per-component CPU/DRAM energy and wall-time profiling.

Two backends sit behind one interface:

* ``RaplBackend`` reads the Linux powercap counters
  (``/sys/class/powercap/intel-rapl:<n>/energy_uj`` plus the matching
  ``max_energy_range_uj``, and the ``dram`` subdomain when present).
* ``FallbackBackend`` synthesizes counters from a power model
  (configurable watts x elapsed seconds) so the suite runs anywhere.

The fallback clock comes in two flavors.  The default ``work`` clock is a
virtual clock advanced only by explicit, deterministic cost charges, which
makes every profile (and therefore every emitted CSV) reproducible bit for
bit across invocations.  The ``wall`` clock uses the real monotonic clock
and models power draw over actual elapsed time.

Exactly one measurement scope may be active per process: the counters are
process-global, so concurrent scopes cannot be attributed.
"""

import math
import os
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

UJ_PER_J = 1e6

BACKEND_ENV = "SURROPT_ENERGY_BACKEND"
CPU_WATTS_ENV = "SURROPT_FALLBACK_CPU_W"
DRAM_WATTS_ENV = "SURROPT_FALLBACK_DRAM_W"
CLOCK_ENV = "SURROPT_FALLBACK_CLOCK"

DEFAULT_CPU_W = 50.0
DEFAULT_DRAM_W = 5.0

# Deterministic cost model for the work clock: stand-in per-unit durations
# that keep one simulated evaluation far more expensive than one network
# prediction, as in the full-scale setting the desk experiments echo.
SIM_UNIT_S = 4.0e-7        # per (vehicle + queue) simulation step
FLOP_S = 2.5e-10           # batched multiply-add
PREDICT_CALL_S = 3.5e-5    # per-call overhead of a single prediction
BATCH_STEP_S = 4.0e-5      # per-mini-batch overhead during training
ARRAY_UNIT_S = 1.0e-7      # per element of a vectorized swarm update


def predict_cost_s(forward_madds):
    return PREDICT_CALL_S + 2.0 * forward_madds * FLOP_S


def train_cost_s(n_samples, epochs, batch_size, forward_madds):
    batches = math.ceil(n_samples / batch_size)
    # Forward plus backward is charged as three forward-equivalent passes.
    return epochs * (batches * BATCH_STEP_S + n_samples * 3.0 * forward_madds * FLOP_S)


def update_cost_s(n_elements):
    return n_elements * ARRAY_UNIT_S


class ComponentTag(Enum):
    """The five algorithm components a measurement can be attributed to."""
    INITIALIZATION = "initialization"
    UPDATE = "update"
    EVALUATION = "evaluation"
    TRAINING = "training"
    PREDICTION = "prediction"


class BackendUnavailableError(RuntimeError):
    pass


class ScopeError(RuntimeError):
    pass


@dataclass(frozen=True)
class EnergySample:
    """Snapshot of the monotone energy counters, in microjoules."""
    cpu_uj: float
    dram_uj: float
    timestamp_ns: int
    cpu_max_uj: float
    dram_max_uj: float
    dram_available: bool = True


@dataclass
class ComponentProfile:
    tag: ComponentTag
    cpu_j: float = 0.0
    dram_j: float = 0.0
    seconds: float = 0.0
    call_count: int = 0


def counter_delta(before: EnergySample, after: EnergySample):
    """Energy consumed between two samples, in joules, handling one wrap."""
    if (before.cpu_max_uj != after.cpu_max_uj
            or before.dram_max_uj != after.dram_max_uj):
        raise ValueError("samples come from backends with different counter ranges")
    cpu = (after.cpu_uj - before.cpu_uj) % before.cpu_max_uj
    if before.dram_max_uj > 0:
        dram = (after.dram_uj - before.dram_uj) % before.dram_max_uj
    else:
        dram = 0.0
    return cpu / UJ_PER_J, dram / UJ_PER_J


class WorkClock:
    """Virtual monotone clock advanced only by explicit charges."""

    def __init__(self):
        self._ns = 0

    def now_ns(self):
        return self._ns

    def advance(self, seconds):
        self._ns += int(round(seconds * 1e9))


class WallClock:
    def now_ns(self):
        return time.perf_counter_ns()

    def advance(self, seconds):
        pass  # real time passes on its own


class FallbackBackend:
    """Power-model counters: energy = watts x elapsed clock time."""

    COUNTER_MAX_UJ = float(2 ** 40)

    def __init__(self, cpu_w=DEFAULT_CPU_W, dram_w=DEFAULT_DRAM_W, clock="work"):
        self.cpu_w = float(cpu_w)
        self.dram_w = float(dram_w)
        if clock == "work":
            clock = WorkClock()
        elif clock == "wall":
            clock = WallClock()
        self.clock = clock

    @property
    def deterministic(self):
        return isinstance(self.clock, WorkClock)

    @property
    def cpu_max_uj(self):
        return self.COUNTER_MAX_UJ

    @property
    def dram_max_uj(self):
        return self.COUNTER_MAX_UJ

    def read_raw(self):
        """(cpu_uj, dram_uj, timestamp_ns) without the sample wrapper."""
        ns = self.clock.now_ns()
        return ((ns * self.cpu_w / 1e3) % self.COUNTER_MAX_UJ,
                (ns * self.dram_w / 1e3) % self.COUNTER_MAX_UJ,
                ns)

    def read(self) -> EnergySample:
        cpu_uj, dram_uj, ns = self.read_raw()
        return EnergySample(
            cpu_uj=cpu_uj,
            dram_uj=dram_uj,
            timestamp_ns=ns,
            cpu_max_uj=self.COUNTER_MAX_UJ,
            dram_max_uj=self.COUNTER_MAX_UJ,
        )

    def charge(self, seconds):
        self.clock.advance(seconds)


class RaplBackend:
    """Reads package 0 (and its dram subdomain, when exposed) via powercap."""

    ROOT = Path("/sys/class/powercap")

    def __init__(self, root=None):
        root = Path(root) if root is not None else self.ROOT
        self.pkg_dir = root / "intel-rapl:0"
        if not (self.pkg_dir / "energy_uj").exists():
            raise BackendUnavailableError(
                f"no readable RAPL package domain under {root}")
        self.cpu_max_uj = float(self._read_int(self.pkg_dir / "max_energy_range_uj"))
        self.dram_dir = None
        self.dram_max_uj = 0.0
        for sub in sorted(self.pkg_dir.glob("intel-rapl:0:*")):
            name_file = sub / "name"
            if name_file.exists() and name_file.read_text().strip() == "dram":
                self.dram_dir = sub
                self.dram_max_uj = float(self._read_int(sub / "max_energy_range_uj"))
                break

    @staticmethod
    def _read_int(path):
        return int(path.read_text().strip())

    @property
    def deterministic(self):
        return False

    def read_raw(self):
        cpu = float(self._read_int(self.pkg_dir / "energy_uj"))
        dram = (float(self._read_int(self.dram_dir / "energy_uj"))
                if self.dram_dir else 0.0)
        return cpu, dram, time.monotonic_ns()

    def read(self) -> EnergySample:
        cpu, dram, ns = self.read_raw()
        return EnergySample(
            cpu_uj=cpu,
            dram_uj=dram,
            timestamp_ns=ns,
            cpu_max_uj=self.cpu_max_uj,
            dram_max_uj=self.dram_max_uj,
            dram_available=self.dram_dir is not None,
        )

    def charge(self, seconds):
        pass  # hardware counters advance on their own


def get_backend(name=None, cpu_w=None, dram_w=None, clock=None):
    """Build the backend selected by argument or environment.

    With no explicit selection, RAPL is used when readable and the fallback
    otherwise.  Asking for ``rapl`` on a machine without powercap raises
    BackendUnavailableError (the fallback is considered disabled then).
    """
    name = name or os.environ.get(BACKEND_ENV)
    if name not in (None, "rapl", "fallback"):
        raise ValueError(f"unknown energy backend {name!r}")
    if name == "rapl":
        return RaplBackend()
    if name is None:
        try:
            return RaplBackend()
        except BackendUnavailableError:
            pass
    cpu_w = float(os.environ.get(CPU_WATTS_ENV, DEFAULT_CPU_W)) if cpu_w is None else cpu_w
    dram_w = float(os.environ.get(DRAM_WATTS_ENV, DEFAULT_DRAM_W)) if dram_w is None else dram_w
    clock = clock or os.environ.get(CLOCK_ENV, "work")
    if clock not in ("work", "wall"):
        raise ValueError(f"unknown fallback clock {clock!r}")
    return FallbackBackend(cpu_w=cpu_w, dram_w=dram_w, clock=clock)


def read_counters(backend) -> EnergySample:
    if backend is None:
        raise BackendUnavailableError("no energy backend configured")
    return backend.read()


_ACTIVE_SCOPE = None


class _Scope:
    """Plain context manager; cheaper per entry than a generator-based one."""

    __slots__ = ("profiler", "tag", "modeled_s", "before")

    def __init__(self, profiler, tag, modeled_s):
        self.profiler = profiler
        self.tag = tag
        self.modeled_s = modeled_s

    def __enter__(self):
        global _ACTIVE_SCOPE
        profiler = self.profiler
        if not profiler.enabled:
            self.before = None
            return self
        if _ACTIVE_SCOPE is not None:
            raise ScopeError(
                f"measurement scope {self.tag.value!r} opened while "
                f"{_ACTIVE_SCOPE!r} is active; counters are process-global")
        _ACTIVE_SCOPE = self.tag.value
        try:
            self.before = profiler.backend.read_raw()
        except BaseException:
            _ACTIVE_SCOPE = None
            raise
        return self

    def __exit__(self, exc_type, exc, tb):
        global _ACTIVE_SCOPE
        profiler = self.profiler
        if not profiler.enabled:
            if profiler.backend is not None and self.modeled_s is not None:
                profiler.backend.charge(self.modeled_s)
            return False
        try:
            if self.modeled_s is not None:
                profiler.backend.charge(self.modeled_s)
            after = profiler.backend.read_raw()
        finally:
            _ACTIVE_SCOPE = None
        profiler._attribute(self.tag, self.before, after)
        return False


class Profiler:
    """Accumulates per-tag profiles; one instance per run.

    A disabled profiler skips counter reads and attribution but still applies
    deterministic cost charges to the backend clock, so a run wrapped in a
    single outer scope sees the same timeline as a fully profiled run.
    """

    def __init__(self, backend=None, enabled=True):
        self.backend = backend
        self.enabled = enabled and backend is not None
        self._profiles = {}
        if self.enabled:
            self._cpu_max = backend.cpu_max_uj
            self._dram_max = backend.dram_max_uj

    def measure(self, tag: ComponentTag, modeled_s=None):
        return _Scope(self, tag, modeled_s)

    def run(self, tag: ComponentTag, action, modeled_s=None):
        """Measure a callable; returns (result, profile delta for this scope)."""
        prior = self._profiles.get(tag)
        prior_state = ((prior.cpu_j, prior.dram_j, prior.seconds, prior.call_count)
                       if prior else (0.0, 0.0, 0.0, 0))
        with self.measure(tag, modeled_s=modeled_s):
            result = action()
        now = self._profiles.get(tag) or ComponentProfile(tag)
        delta = ComponentProfile(
            tag,
            cpu_j=now.cpu_j - prior_state[0],
            dram_j=now.dram_j - prior_state[1],
            seconds=now.seconds - prior_state[2],
            call_count=now.call_count - prior_state[3],
        )
        return result, delta

    def _attribute(self, tag, before, after):
        profile = self._profiles.get(tag)
        if profile is None:
            profile = self._profiles[tag] = ComponentProfile(tag)
        profile.cpu_j += ((after[0] - before[0]) % self._cpu_max) / UJ_PER_J
        if self._dram_max > 0:
            profile.dram_j += ((after[1] - before[1]) % self._dram_max) / UJ_PER_J
        profile.seconds += (after[2] - before[2]) / 1e9
        profile.call_count += 1

    def profiles(self):
        return dict(self._profiles)

    def snapshot(self):
        """Cumulative (cpu_j, dram_j, seconds) per tag, all five tags present."""
        snap = {}
        for tag in ComponentTag:
            p = self._profiles.get(tag)
            snap[tag] = (p.cpu_j, p.dram_j, p.seconds) if p else (0.0, 0.0, 0.0)
        return snap


@dataclass
class ReportRow:
    component: str
    cpu_j_mean: float
    cpu_j_std: float
    dram_j_mean: float
    dram_j_std: float
    time_s_mean: float
    time_s_std: float


def _mean_std(values):
    n = len(values)
    mean = sum(values) / n
    if n < 2:
        return mean, 0.0
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var)


def aggregate(per_run_profiles) -> list:
    """Mean and sample standard deviation per tag across runs, plus a Total row.

    ``per_run_profiles`` is a list with one {tag: ComponentProfile} dict per
    run; tags missing from a run count as zero.  The Total row sums the
    component means and spreads the per-run totals.
    """
    if not per_run_profiles:
        raise ValueError("need at least one run to aggregate")
    rows = []
    totals = {"cpu": [0.0] * len(per_run_profiles),
              "dram": [0.0] * len(per_run_profiles),
              "sec": [0.0] * len(per_run_profiles)}
    for tag in ComponentTag:
        cpu = [run.get(tag).cpu_j if run.get(tag) else 0.0 for run in per_run_profiles]
        dram = [run.get(tag).dram_j if run.get(tag) else 0.0 for run in per_run_profiles]
        sec = [run.get(tag).seconds if run.get(tag) else 0.0 for run in per_run_profiles]
        for i in range(len(per_run_profiles)):
            totals["cpu"][i] += cpu[i]
            totals["dram"][i] += dram[i]
            totals["sec"][i] += sec[i]
        rows.append(ReportRow(tag.value, *_mean_std(cpu), *_mean_std(dram), *_mean_std(sec)))
    rows.append(ReportRow("total", *_mean_std(totals["cpu"]),
                          *_mean_std(totals["dram"]), *_mean_std(totals["sec"])))
    return rows


REPORT_HEADER = ("component", "cpu_j_mean", "cpu_j_std", "dram_j_mean",
                 "dram_j_std", "time_s_mean", "time_s_std")


def write_report(path, rows):
    """Write aggregate rows with the documented column set."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(REPORT_HEADER) + "\n")
        for row in rows:
            fh.write(f"{row.component},{row.cpu_j_mean!r},{row.cpu_j_std!r},"
                     f"{row.dram_j_mean!r},{row.dram_j_std!r},"
                     f"{row.time_s_mean!r},{row.time_s_std!r}\n")
