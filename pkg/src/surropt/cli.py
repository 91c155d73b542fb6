"""Command-line entry point binding JSON configuration to the experiments.

Exit codes: 0 success, 1 configuration/usage error, 2 runtime error.
"""

import argparse
import json
import sys
from dataclasses import dataclass, field

from . import harness, surrogate, traffic
from .energy import get_backend
from .swarm import PsoConfig, Variant

SWARM_DEFAULTS = {
    "swarm_size": 20,
    "max_fitness_evals": 2000,
    "phi1": 2.05,
    "phi2": 2.05,
    "lambda": 0.5,
    "w_max": 0.5,
    "w_min": 0.1,
    "n_train_small": None,   # defaults to swarm_size
    "n_train_large": harness.DESK_N_TRAIN_LARGE,
    "n_reeval": 5,
    "seed": 0,
}
SURROGATE_DEFAULTS = {"epochs": 100, "batch_size": 32, "learning_rate": 1e-4}
ENERGY_DEFAULTS = {"backend": None, "cpu_w": None, "dram_w": None, "clock": None}
HARNESS_DEFAULTS = {
    "runs": harness.DESK_RUNS,
    "eval_samples": 30,
    "sweep_sizes": list(harness.DESK_SWEEP_SIZES),
    "sweep_repeats": 3,
    "scatter_max": 200,
}


class ConfigError(ValueError):
    pass


@dataclass
class AppConfig:
    scenario: traffic.GridSpec
    swarm: dict
    train: surrogate.TrainConfig
    energy: dict
    harness: dict = field(default_factory=dict)

    def pso_config(self, variant: Variant, seed=None) -> PsoConfig:
        s = self.swarm
        n_train = s["n_train_small"]
        if variant in (Variant.PRETRAIN_LARGE, Variant.RETRAIN_LARGE):
            n_train = s["n_train_large"]
        return PsoConfig(
            swarm_size=s["swarm_size"],
            max_fitness_evals=s["max_fitness_evals"],
            phi1=s["phi1"], phi2=s["phi2"], lam=s["lambda"],
            w_max=s["w_max"], w_min=s["w_min"],
            n_train=n_train, n_reeval=s["n_reeval"],
            variant=variant,
            seed=s["seed"] if seed is None else seed,
        )

    def backend_factory(self):
        e = self.energy
        return lambda: get_backend(name=e["backend"], cpu_w=e["cpu_w"],
                                   dram_w=e["dram_w"], clock=e["clock"])


def _section(doc, name):
    section = doc.get(name, {})
    if not isinstance(section, dict):
        raise ConfigError(f"{name}: must be a JSON object")
    return section


def _merged(section, defaults, path):
    unknown = set(section) - set(defaults)
    if unknown:
        raise ConfigError(f"{path}.{sorted(unknown)[0]}: unknown key")
    merged = dict(defaults)
    merged.update(section)
    return merged


def _require(condition, key, message):
    if not condition:
        raise ConfigError(f"{key}: {message}")


def parse_config_dict(doc) -> AppConfig:
    if not isinstance(doc, dict):
        raise ConfigError("top level: config must be a JSON object")
    unknown = set(doc) - {"scenario", "swarm", "surrogate", "energy", "harness"}
    if unknown:
        raise ConfigError(f"{sorted(unknown)[0]}: unknown section")

    scenario_doc = _section(doc, "scenario")
    try:
        spec = traffic.grid_spec_from_dict(scenario_doc)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"scenario: {exc}") from exc
    _require(spec.rows >= 1 and spec.cols >= 1, "scenario.rows", "grid must be >= 1x1")
    _require(spec.phases >= 2, "scenario.phases", "must be >= 2")
    _require(spec.vehicles >= 1, "scenario.vehicles", "must be >= 1")
    _require(spec.horizon_s >= 1, "scenario.horizon_s", "must be >= 1")
    _require(1 <= spec.d_min <= spec.d_max, "scenario.d_min",
             "must satisfy 1 <= d_min <= d_max")
    _require(spec.saturation_flow > 0, "scenario.saturation_flow", "must be positive")
    _require(spec.link_travel_time_s >= 1, "scenario.link_travel_time_s", "must be >= 1")

    swarm = _merged(_section(doc, "swarm"), SWARM_DEFAULTS, "swarm")
    if swarm["n_train_small"] is None:
        swarm["n_train_small"] = swarm["swarm_size"]
    _require(swarm["swarm_size"] >= 1, "swarm.swarm_size", "must be >= 1")
    _require(swarm["max_fitness_evals"] >= swarm["swarm_size"],
             "swarm.max_fitness_evals", "must be >= swarm_size")
    _require(0.0 <= swarm["lambda"] <= 1.0, "swarm.lambda", "must lie in [0, 1]")
    _require(swarm["w_min"] <= swarm["w_max"], "swarm.w_min",
             "must not exceed w_max")
    _require(swarm["n_reeval"] >= 1, "swarm.n_reeval", "must be >= 1")
    _require(swarm["n_reeval"] <= swarm["swarm_size"], "swarm.n_reeval",
             "must not exceed swarm_size")
    for key in ("n_train_small", "n_train_large"):
        _require(swarm[key] >= swarm["swarm_size"], f"swarm.{key}",
                 "must be >= swarm_size")

    train_doc = _merged(_section(doc, "surrogate"), SURROGATE_DEFAULTS, "surrogate")
    _require(train_doc["epochs"] >= 1, "surrogate.epochs", "must be >= 1")
    _require(train_doc["batch_size"] >= 1, "surrogate.batch_size", "must be >= 1")
    _require(train_doc["learning_rate"] > 0, "surrogate.learning_rate",
             "must be positive")
    train = surrogate.TrainConfig(epochs=train_doc["epochs"],
                                  batch_size=train_doc["batch_size"],
                                  learning_rate=train_doc["learning_rate"])

    energy = _merged(_section(doc, "energy"), ENERGY_DEFAULTS, "energy")
    _require(energy["backend"] in (None, "rapl", "fallback"), "energy.backend",
             "must be 'rapl' or 'fallback'")
    _require(energy["clock"] in (None, "work", "wall"), "energy.clock",
             "must be 'work' or 'wall'")

    harness_doc = _merged(_section(doc, "harness"), HARNESS_DEFAULTS, "harness")
    _require(harness_doc["runs"] >= 1, "harness.runs", "must be >= 1")
    _require(harness_doc["eval_samples"] >= 2, "harness.eval_samples",
             "must be >= 2")
    _require(harness_doc["sweep_repeats"] >= 1, "harness.sweep_repeats",
             "must be >= 1")
    sizes = harness_doc["sweep_sizes"]
    _require(isinstance(sizes, (list, tuple)) and len(sizes) >= 1
             and all(int(s) >= 1 for s in sizes),
             "harness.sweep_sizes", "must be a nonempty list of sizes")

    return AppConfig(scenario=spec, swarm=swarm, train=train, energy=energy,
                     harness=harness_doc)


def parse_config(path) -> AppConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    return parse_config_dict(doc)


VARIANT_CODES = {v.value: v for v in Variant}


def _load(args) -> AppConfig:
    if args.config:
        cfg = parse_config(args.config)
    else:
        cfg = parse_config_dict({})
    if args.seed is not None:
        cfg.swarm["seed"] = args.seed
    if args.runs is not None:
        if args.runs < 1:
            raise ConfigError("runs: must be >= 1")
        cfg.harness["runs"] = args.runs
    return cfg


def _announce(paths):
    for path in paths:
        print(f"wrote {path}")


def cmd_profile_eval(args):
    cfg = _load(args)
    scenario = traffic.build_scenario(cfg.scenario)
    stats = harness.experiment_eval_cost(scenario, cfg.harness["eval_samples"],
                                         seed=cfg.swarm["seed"],
                                         backend_factory=cfg.backend_factory())
    paths = harness.emit_reports(harness.ExperimentResults(eval_cost=stats),
                                 args.out)
    _announce(paths)
    return 0


def cmd_sweep(args):
    cfg = _load(args)
    scenario = traffic.build_scenario(cfg.scenario)
    rows = harness.experiment_surrogate_sweep(
        scenario, cfg.harness["sweep_sizes"], cfg.harness["sweep_repeats"],
        seed=cfg.swarm["seed"], train_cfg=cfg.train,
        backend_factory=cfg.backend_factory())
    paths = harness.emit_reports(harness.ExperimentResults(sweep_rows=rows),
                                 args.out)
    _announce(paths)
    return 0


def cmd_run(args):
    cfg = _load(args)
    variant = VARIANT_CODES[args.variant]
    scenario = traffic.build_scenario(cfg.scenario)
    configs = {variant: cfg.pso_config(variant)}
    runs = cfg.harness["runs"] if args.runs is not None else 1
    experiment = harness.experiment_variants(
        scenario, configs, runs=runs, base_seed=cfg.swarm["seed"],
        train_cfg=cfg.train, backend_factory=cfg.backend_factory(),
        scatter_max=cfg.harness["scatter_max"])
    paths = harness.emit_reports(harness.ExperimentResults(variants=experiment),
                                 args.out)
    _announce(paths)
    for result in experiment.results[variant.value]:
        print(f"seed {result.seed}: best_actual_fitness {result.best_fitness!r} "
              f"(actual evals {result.actual_eval_count}, fe {result.fe})")
    return 0


def cmd_experiment_all(args):
    cfg = _load(args)
    scenario = traffic.build_scenario(cfg.scenario)
    backend_factory = cfg.backend_factory()
    stats = harness.experiment_eval_cost(scenario, cfg.harness["eval_samples"],
                                         seed=cfg.swarm["seed"],
                                         backend_factory=backend_factory)
    sweep_rows = harness.experiment_surrogate_sweep(
        scenario, cfg.harness["sweep_sizes"], cfg.harness["sweep_repeats"],
        seed=cfg.swarm["seed"], train_cfg=cfg.train,
        backend_factory=backend_factory)
    configs = harness.make_variant_configs(
        cfg.pso_config(Variant.PLAIN), cfg.swarm["n_train_small"],
        cfg.swarm["n_train_large"])
    experiment = harness.experiment_variants(
        scenario, configs, runs=cfg.harness["runs"], base_seed=cfg.swarm["seed"],
        train_cfg=cfg.train, backend_factory=backend_factory,
        scatter_max=cfg.harness["scatter_max"])
    paths = harness.emit_reports(
        harness.ExperimentResults(eval_cost=stats, sweep_rows=sweep_rows,
                                  variants=experiment), args.out)
    _announce(paths)
    return 0


def cmd_report(args):
    """Rebuild components.csv and final_fitness.csv from existing run CSVs."""
    import csv
    from pathlib import Path

    from .energy import ComponentProfile, ComponentTag, aggregate

    out = Path(args.out)
    run_files = sorted(out.glob("run_*.csv"))
    if not run_files:
        raise ConfigError(f"no run_*.csv files under {out}")
    per_variant = {}
    final_rows = []
    for path in run_files:
        variant, seed = path.stem.split("_")[1], path.stem.split("_")[2]
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        last = rows[-1]
        profiles = {}
        for tag in ComponentTag:
            profiles[tag] = ComponentProfile(
                tag,
                cpu_j=float(last[f"{tag.value}_cpu_j"]),
                dram_j=float(last[f"{tag.value}_dram_j"]),
                seconds=float(last[f"{tag.value}_time_s"]))
        per_variant.setdefault(variant, []).append(profiles)
        final_rows.append((variant, int(seed), float(last["best_actual_fitness"])))

    paths = []
    components = out / "components.csv"
    rows = []
    for variant in per_variant:
        for row in aggregate(per_variant[variant]):
            rows.append([variant, row.component, row.cpu_j_mean, row.cpu_j_std,
                         row.dram_j_mean, row.dram_j_std, row.time_s_mean,
                         row.time_s_std])
    harness._write_csv(components, ["variant", "component", "cpu_j_mean",
                                    "cpu_j_std", "dram_j_mean", "dram_j_std",
                                    "time_s_mean", "time_s_std"], rows)
    paths.append(components)
    final = out / "final_fitness.csv"
    harness._write_csv(final, ["variant", "seed", "fitness"],
                       [list(r) for r in final_rows])
    paths.append(final)
    _announce(paths)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="surropt",
        description="Surrogate-assisted PSO experiments on a grid traffic scenario")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--runs", type=int, default=None)

    common(sub.add_parser("profile-eval", help="profile single-evaluation cost"))
    common(sub.add_parser("sweep", help="surrogate accuracy/cost vs dataset size"))
    run_p = sub.add_parser("run", help="run one optimizer variant")
    run_p.add_argument("--variant", required=True, choices=sorted(VARIANT_CODES))
    common(run_p)
    common(sub.add_parser("experiment-all", help="run every experiment"))
    common(sub.add_parser("report", help="re-aggregate existing run CSVs"))
    return parser


COMMANDS = {
    "profile-eval": cmd_profile_eval,
    "sweep": cmd_sweep,
    "run": cmd_run,
    "experiment-all": cmd_experiment_all,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 2


def console_main():
    raise SystemExit(main())


if __name__ == "__main__":
    console_main()
