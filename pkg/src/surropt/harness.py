"""Desk-scale experiment harness: evaluation cost, surrogate sweep, variant runs.

Every experiment is deterministic given the scenario seed, the run seeds and
the fallback energy backend with its default work clock.  Results land in a
small set of CSV artifacts (see ``emit_reports``) so downstream plotting and
analysis stay out of this package.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import surrogate, traffic
from .energy import (ComponentTag, Profiler, aggregate, get_backend,
                     train_cost_s)
from .swarm import PsoConfig, Variant, run

# Cost of one full-scale evaluation as reported for the microscopic-simulator
# setup this desk-scale harness mirrors.  Documented for comparison only;
# desk acceptance uses ratios and orderings, never these absolute values.
REFERENCE_FULL_SCALE_EVAL = {"cpu_j": 179.24, "dram_j": 9.26, "seconds": 3.54}
# Full-scale surrogate accuracy endpoints over the 128 -> 8192 dataset sweep.
REFERENCE_FULL_SCALE_MAPE = {128: 33.59, 8192: 21.55}
REFERENCE_FULL_SCALE_R2 = {128: -0.06, 8192: 0.50}

DESK_SWEEP_SIZES = (128, 512, 2048)
DESK_RUNS = 5
DESK_N_TRAIN_LARGE = 400


def _mean_std(values):
    n = len(values)
    mean = sum(values) / n
    if n < 2:
        return mean, 0.0
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var)


class MlpTrainer:
    """Trains a fresh surrogate from scratch on every call.

    Each retraining round re-initializes the weights and fits the whole
    current dataset, so successive models never warm-start.
    """

    def __init__(self, dimension, bounds, train_cfg: surrogate.TrainConfig, seed):
        self.dims = [dimension] + surrogate.hidden_dims_for(dimension) + [1]
        self.bounds = bounds
        self.train_cfg = train_cfg
        self.seed = seed
        self._madds = sum(a * b for a, b in zip(self.dims[:-1], self.dims[1:]))

    def round_seed(self, generation):
        return np.random.SeedSequence([int(self.seed), int(generation)])

    def __call__(self, plans, fitnesses, generation):
        seed = self.round_seed(generation)
        model = surrogate.init_model(self.dims, seed, self.bounds)
        cfg = replace(self.train_cfg, seed=seed)
        return surrogate.train(model, plans, fitnesses, cfg)

    def modeled_cost_s(self, n_samples):
        return train_cost_s(n_samples, self.train_cfg.epochs,
                            self.train_cfg.batch_size, self._madds)


def make_variant_configs(base: PsoConfig, n_train_small, n_train_large) -> dict:
    """One PsoConfig per variant, sharing everything but variant and n_train."""
    configs = {}
    for variant in Variant:
        n_train = n_train_small
        if variant in (Variant.PRETRAIN_LARGE, Variant.RETRAIN_LARGE):
            n_train = n_train_large
        configs[variant] = replace(base, variant=variant, n_train=n_train)
    return configs


def experiment_eval_cost(scenario, n_samples, seed=0, backend_factory=None):
    """Profile n_samples random-plan evaluations under the Evaluation tag.

    Returns {"cpu_j": (mean, std), "dram_j": ..., "seconds": ...}.
    """
    if n_samples < 2:
        raise ValueError("need at least two samples for a mean and deviation")
    backend = (backend_factory or get_backend)()
    profiler = Profiler(backend)
    evaluator = traffic.Evaluator(scenario)
    rng = np.random.default_rng(seed)
    cpu, dram, sec = [], [], []
    for _ in range(n_samples):
        plan = traffic.random_plan(scenario, rng)
        _, scope = profiler.run(ComponentTag.EVALUATION,
                                lambda p=plan: evaluator(p),
                                modeled_s=evaluator.modeled_cost_s)
        cpu.append(scope.cpu_j)
        dram.append(scope.dram_j)
        sec.append(scope.seconds)
    return {"cpu_j": _mean_std(cpu), "dram_j": _mean_std(dram),
            "seconds": _mean_std(sec)}


def build_archive(scenario, n_rows, seed=0):
    """Random in-bounds plans with their actual fitness, for surrogate studies."""
    evaluator = traffic.Evaluator(scenario)
    rng = np.random.default_rng(seed)
    plans = np.stack([traffic.random_plan(scenario, rng) for _ in range(n_rows)])
    fits = np.array([evaluator(p) for p in plans])
    return plans, fits


def experiment_surrogate_sweep(scenario, sizes, repeats, seed=0,
                               train_cfg=None, backend_factory=None,
                               archive=None):
    """Train/test the surrogate across dataset sizes; Table-style rows.

    For each size and repeat, a random subset of the archive trains a fresh
    model which is then tested on 100 disjoint rows.  Returns one dict per
    size with mean/std energy, time and accuracy columns.
    """
    sizes = list(sizes)
    train_cfg = train_cfg or surrogate.TrainConfig()
    need = max(sizes) + 100
    if archive is None:
        archive = build_archive(scenario, need, seed=seed)
    plans, fits = archive
    if plans.shape[0] < need:
        raise ValueError(
            f"archive has {plans.shape[0]} rows; need at least {need}")
    backend = (backend_factory or get_backend)()
    trainer = MlpTrainer(scenario.dimension, (scenario.d_min, scenario.d_max),
                         train_cfg, seed)
    rng = np.random.default_rng(seed)
    rows = []
    for size in sizes:
        train_cpu, train_sec, pred_cpu, pred_sec = [], [], [], []
        mapes, r2s = [], []
        for rep in range(repeats):
            profiler = Profiler(backend)
            order = rng.permutation(plans.shape[0])
            train_idx = order[:size]
            test_idx = order[size:size + 100]
            model, train_scope = profiler.run(
                ComponentTag.TRAINING,
                lambda i=train_idx: trainer(plans[i], fits[i], rep),
                modeled_s=trainer.modeled_cost_s(size))
            predictions = np.empty(test_idx.shape[0])

            def predict_all(idx=test_idx, out=predictions, m=model):
                for k, row in enumerate(idx):
                    out[k] = m.predict(plans[row])

            _, pred_scope = profiler.run(
                ComponentTag.PREDICTION, predict_all,
                modeled_s=model.modeled_predict_s * test_idx.shape[0])
            train_cpu.append(train_scope.cpu_j)
            train_sec.append(train_scope.seconds)
            pred_cpu.append(pred_scope.cpu_j)
            pred_sec.append(pred_scope.seconds)
            mapes.append(surrogate.mape(fits[test_idx], predictions))
            r2s.append(surrogate.r_squared(fits[test_idx], predictions))
        row = {"size": size}
        for name, values in (("train_cpu_j", train_cpu), ("train_s", train_sec),
                             ("pred_cpu_j", pred_cpu), ("pred_s", pred_sec),
                             ("mape", mapes), ("r2", r2s)):
            mean, std = _mean_std(values)
            row[f"{name}_mean"] = mean
            row[f"{name}_std"] = std
        rows.append(row)
    return rows


@dataclass
class VariantExperiment:
    results: dict                  # variant code -> [RunResult per run]
    component_rows: list           # (variant code, ReportRow)
    scatter: dict                  # (variant code, seed) -> [(fe, actual, predicted)]
    final_fitness: list = field(default_factory=list)  # (variant, seed, fitness)


def experiment_variants(scenario, configs, runs, base_seed=0, train_cfg=None,
                        backend_factory=None, scatter_max=200) -> VariantExperiment:
    """Run every configured variant with shared per-run seeds.

    For surrogate variants a bounded, evenly spaced sample of the predicted
    plans is re-evaluated with the actual objective afterwards, yielding
    (fe, actual, predicted) triples for scatter analysis.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    train_cfg = train_cfg or surrogate.TrainConfig()
    backend_factory = backend_factory or get_backend
    results = {}
    component_rows = []
    scatter = {}
    final_fitness = []
    for variant, cfg in configs.items():
        code = variant.value
        variant_results = []
        per_run_profiles = []
        for run_idx in range(runs):
            seed = base_seed + run_idx
            run_cfg = replace(cfg, seed=seed)
            evaluator = traffic.Evaluator(scenario)
            trainer = MlpTrainer(scenario.dimension,
                                 (scenario.d_min, scenario.d_max),
                                 train_cfg, seed) if variant.uses_surrogate else None
            profiler = Profiler(backend_factory())
            result = run(run_cfg, evaluator, surrogate_trainer=trainer,
                         profiler=profiler)
            variant_results.append(result)
            per_run_profiles.append(result.profiles)
            final_fitness.append((code, seed, result.best_fitness))
            if variant.uses_surrogate:
                scatter[(code, seed)] = _scatter_sample(scenario, result,
                                                        scatter_max)
        results[code] = variant_results
        for row in aggregate(per_run_profiles):
            component_rows.append((code, row))
    return VariantExperiment(results=results, component_rows=component_rows,
                             scatter=scatter, final_fitness=final_fitness)


def _scatter_sample(scenario, result, scatter_max):
    log = result.prediction_log
    if not log:
        return []
    if len(log) > scatter_max:
        idx = np.unique(np.linspace(0, len(log) - 1, scatter_max).astype(int))
    else:
        idx = range(len(log))
    triples = []
    for i in idx:
        fe, plan, predicted = log[i]
        triples.append((fe, traffic.evaluate_plan(scenario, plan), predicted))
    return triples


RUN_CSV_TAGS = [tag.value for tag in ComponentTag]
RUN_CSV_HEADER = (["generation", "fe", "best_actual_fitness", "actual_evals_cum"]
                  + [f"{tag}_{metric}" for tag in RUN_CSV_TAGS
                     for metric in ("cpu_j", "dram_j", "time_s")])


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def run_csv_rows(result):
    rows = []
    for record in result.history:
        row = [record.generation, record.fe, record.best_actual,
               record.actual_evals]
        for tag in ComponentTag:
            cpu, dram, sec = record.energy[tag]
            row.extend([cpu, dram, sec])
        rows.append(row)
    return rows


@dataclass
class ExperimentResults:
    """Everything emit_reports knows how to serialize; parts are optional."""
    eval_cost: dict = None
    sweep_rows: list = None
    variants: VariantExperiment = None


def emit_reports(results: ExperimentResults, out_dir) -> list:
    """Write every available artifact into out_dir; returns the file paths.

    Overwrites idempotently: identical inputs produce byte-identical files.
    """
    from pathlib import Path

    if results is None or (results.eval_cost is None
                           and results.sweep_rows is None
                           and results.variants is None):
        raise ValueError("nothing to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    if results.eval_cost is not None:
        path = out / "eval_cost.csv"
        _write_csv(path, ["metric", "mean", "std"],
                   [[metric, mean, std]
                    for metric, (mean, std) in results.eval_cost.items()])
        written.append(path)

    if results.sweep_rows is not None:
        path = out / "surrogate_sweep.csv"
        header = ["size"] + [f"{name}_{suffix}"
                             for name in ("train_cpu_j", "train_s", "pred_cpu_j",
                                          "pred_s", "mape", "r2")
                             for suffix in ("mean", "std")]
        _write_csv(path, header,
                   [[row[col] for col in header] for row in results.sweep_rows])
        written.append(path)

    if results.variants is not None:
        exp = results.variants
        for code in exp.results:
            for result in exp.results[code]:
                path = out / f"run_{code}_{result.seed}.csv"
                _write_csv(path, RUN_CSV_HEADER, run_csv_rows(result))
                written.append(path)
        for (code, seed), triples in exp.scatter.items():
            path = out / f"scatter_{code}_{seed}.csv"
            _write_csv(path, ["fe", "actual", "predicted"], triples)
            written.append(path)
        path = out / "components.csv"
        _write_csv(path, ["variant", "component", "cpu_j_mean", "cpu_j_std",
                          "dram_j_mean", "dram_j_std", "time_s_mean", "time_s_std"],
                   [[code, row.component, row.cpu_j_mean, row.cpu_j_std,
                     row.dram_j_mean, row.dram_j_std, row.time_s_mean,
                     row.time_s_std]
                    for code, row in exp.component_rows])
        written.append(path)
        path = out / "final_fitness.csv"
        _write_csv(path, ["variant", "seed", "fitness"],
                   [list(entry) for entry in exp.final_fitness])
        written.append(path)

    return written
