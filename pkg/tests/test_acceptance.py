"""Acceptance suite: one test per criterion, each printing a PASS line.

The heavyweight shared experiment (all five variants, five seeded runs on the
desk-scale scenario) backs both the energy-ordering and convergence checks.
"""

import json
import time

import numpy as np
import pytest

from surropt.cli import main
from surropt.energy import (ComponentTag, FallbackBackend, Profiler,
                            counter_delta, EnergySample)
from surropt.harness import (build_archive, experiment_surrogate_sweep,
                             experiment_variants, make_variant_configs)
from surropt.surrogate import (TrainConfig, init_model, mape,
                               mse_loss_and_grads, r_squared)
from surropt.swarm import (PsoConfig, Variant, inertia_weight, run,
                           truncate_velocity, update_position,
                           update_velocity)
from surropt.traffic import (GridSpec, TrafficMetrics, TrafficScenario,
                             build_scenario, combined_fitness, phase_ratio)

from test_swarm import PinnedRng, StubEvaluator, stub_trainer
from trace_oracle import interpret_counts

DESK_SPEC = GridSpec(rows=3, cols=3, phases=4, vehicles=100, horizon_s=500, seed=1)


def report(number, message):
    print(f"ACCEPTANCE {number} PASS: {message}")


def ratio_scenario(green, red):
    green = np.array(green, np.int64)
    return TrafficScenario(
        n_intersections=green.shape[0], n_phases=green.shape[1],
        green_counts=green, red_counts=np.array(red, np.int64),
        green_phase=np.zeros((green.shape[0], 4), np.int64),
        departures=np.zeros(1, np.int64), routes=[[0]],
        legs_offsets=np.zeros(2, np.int64), legs_queue=np.zeros(0, np.int64),
        horizon_s=100, d_min=1, d_max=60)


@pytest.fixture(scope="module")
def desk_experiment():
    """Five variants x five seeded runs on the desk-scale scenario."""
    scenario = build_scenario(DESK_SPEC)
    base = PsoConfig(swarm_size=20, max_fitness_evals=2000, n_reeval=5)
    configs = make_variant_configs(base, n_train_small=20, n_train_large=400)
    start = time.perf_counter()
    experiment = experiment_variants(
        scenario, configs, runs=5, base_seed=0, train_cfg=TrainConfig(),
        backend_factory=lambda: FallbackBackend())
    return experiment, time.perf_counter() - start


def test_acceptance_1_equation_unit_suite():
    start = time.perf_counter()
    tol = 1e-9

    # Green/red ratio
    sc = ratio_scenario([[1]], [[1]])
    assert phase_ratio(sc, np.array([30])) == pytest.approx(30.0, abs=tol)
    sc = ratio_scenario([[2], [1]], [[1], [2]])
    assert phase_ratio(sc, np.array([10, 20])) == pytest.approx(30.0, abs=tol)
    sc = ratio_scenario([[0], [0]], [[4], [4]])
    assert phase_ratio(sc, np.array([10, 20])) == 0.0

    # Combined objective
    assert combined_fitness(TrafficMetrics(1, 0, 0, 0), 0.0, 100) == 0.0
    assert combined_fitness(TrafficMetrics(2, 1, 10, 5), 1.0, 100) \
        == pytest.approx(23.0, abs=tol)
    with pytest.raises(ZeroDivisionError):
        combined_fitness(TrafficMetrics(0, 1, 0, 0), 0.0, 100)

    # Velocity update
    cfg = PsoConfig(phi1=2.05, phi2=2.05)
    x = np.array([10, 20])
    assert np.all(update_velocity(x, np.zeros(2), x, x, 0.5, cfg,
                                  PinnedRng(0.5), 55.0) == 0.0)
    v = update_velocity(np.array([0.0]), np.array([1.0]), np.array([2.0]),
                        np.array([4.0]), 0.5, cfg, PinnedRng(0.5), 100.0)
    assert v[0] == pytest.approx(6.65, abs=tol)
    v0 = np.array([3.0, -2.0])
    v = update_velocity(x, v0, x + 1, x - 1, 1.0, cfg, PinnedRng(0.0), 55.0)
    assert np.allclose(v, v0, atol=tol)

    # Position update
    assert np.array_equal(update_position(x, np.zeros(2, int), 5, 60), x)
    assert update_position(np.array([58]), np.array([10]), 5, 60)[0] == 60
    assert np.array_equal(
        update_position(np.array([10, 20]), np.array([2, -3]), 5, 60), [12, 17])

    # Velocity truncation
    assert truncate_velocity(np.array([2.7]), 0.5, PinnedRng(0.3))[0] == 2
    assert truncate_velocity(np.array([2.7]), 0.5, PinnedRng(0.9))[0] == 3
    for u in (0.0, 0.5, 1.0):
        assert truncate_velocity(np.array([3.0]), 0.5, PinnedRng(u))[0] == 3

    # Inertia schedule
    assert inertia_weight(0, 100, 0.5, 0.1) == pytest.approx(0.5, abs=tol)
    assert inertia_weight(100, 100, 0.5, 0.1) == pytest.approx(0.1, abs=tol)
    assert inertia_weight(50, 100, 0.5, 0.1) == pytest.approx(0.3, abs=tol)

    # MAPE
    assert mape([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert mape([1.0, 2.0], [1.1, 1.8]) == pytest.approx(10.0, abs=tol)
    with pytest.raises(ZeroDivisionError):
        mape([0.0, 1.0], [1.0, 1.0])

    # Coefficient of determination
    assert r_squared([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 1.0
    assert r_squared([1.0, 2.0, 3.0], [2.0, 2.0, 2.0]) == 0.0
    assert r_squared([1.0, 2.0, 3.0], [1.0, 2.0, 4.0]) \
        == pytest.approx(0.5, abs=tol)

    elapsed = time.perf_counter() - start
    assert elapsed < 1.0
    report(1, f"equation unit suite exact at 1e-9 in {elapsed:.3f}s")


def test_acceptance_2_algorithm_trace_oracle():
    start = time.perf_counter()
    rng = np.random.default_rng(99)
    variants = list(Variant)
    for case in range(50):
        n = int(rng.integers(4, 21))
        max_fe = int(rng.integers(n, 401))
        n_train = n * int(rng.integers(1, 6))
        n_reeval = int(rng.integers(1, n + 1))
        variant = variants[case % len(variants)]
        cfg = PsoConfig(swarm_size=n, max_fitness_evals=max_fe,
                        n_train=n_train, n_reeval=n_reeval, variant=variant,
                        seed=case)
        result = run(cfg, StubEvaluator(),
                     surrogate_trainer=stub_trainer if variant.uses_surrogate else None)
        oracle = interpret_counts(variant.value, n, max_fe, n_train, n_reeval)
        assert result.actual_eval_count == oracle["actual"], (case, cfg)
        assert result.predicted_eval_count == oracle["predicted"], (case, cfg)
        assert result.fe == oracle["fe"]
        assert result.generations == oracle["generations"]
    elapsed = time.perf_counter() - start
    assert elapsed < 30.0
    report(2, f"50 random configs match the step interpreter in {elapsed:.1f}s")


def test_acceptance_3_closed_form_counts_at_full_scale_parameters():
    def counts(variant, n_train, n_reeval=10):
        cfg = PsoConfig(swarm_size=100, max_fitness_evals=30_000,
                        n_train=n_train, n_reeval=n_reeval, variant=variant,
                        seed=0)
        result = run(cfg, StubEvaluator(dimension=6),
                     surrogate_trainer=stub_trainer)
        return result.actual_eval_count, result.predicted_eval_count

    assert counts(Variant.PRETRAIN_SMALL, 100) == (101, 29_900)
    assert counts(Variant.RETRAIN_SMALL, 100) == (3_090, 29_900)
    assert counts(Variant.PRETRAIN_LARGE, 8_200)[0] == 8_201
    report(3, "101/29900 pretrain-small, 3090 retrain-small, "
              "8201 pretrain-large actual evaluations")


def test_acceptance_4_gradient_check():
    start = time.perf_counter()
    worst = 0.0
    for seed in range(5):
        rng = np.random.default_rng(seed)
        model = init_model([4, 5, 3, 1], seed=seed, input_bounds=(0, 1))
        x = rng.random((8, 4))
        y = rng.standard_normal(8)
        _, w_grads, b_grads = mse_loss_and_grads(model, x, y)
        eps = 1e-6
        for _ in range(10):
            layer = int(rng.integers(len(model.weights)))
            use_bias = bool(rng.integers(2))
            param = model.biases[layer] if use_bias else model.weights[layer]
            grad = (b_grads if use_bias else w_grads)[layer]
            idx = np.unravel_index(int(rng.integers(param.size)), param.shape)
            keep = param[idx]
            param[idx] = keep + eps
            up, _, _ = mse_loss_and_grads(model, x, y)
            param[idx] = keep - eps
            down, _, _ = mse_loss_and_grads(model, x, y)
            param[idx] = keep
            numeric = (up - down) / (2 * eps)
            rel = abs(numeric - grad[idx]) / max(abs(numeric), abs(grad[idx]), 1e-8)
            worst = max(worst, rel)
    elapsed = time.perf_counter() - start
    assert worst < 1e-4
    assert elapsed < 10.0
    report(4, f"max relative gradient error {worst:.2e} over 5 seeds x 10 probes")


def test_acceptance_5_surrogate_accuracy_trend():
    start = time.perf_counter()
    scenario = build_scenario(DESK_SPEC)
    sizes = (128, 512, 2048)
    archive = build_archive(scenario, max(sizes) + 100, seed=0)
    medians = {}
    for size in sizes:
        mapes = []
        for seed in range(5):
            rows = experiment_surrogate_sweep(
                scenario, [size], repeats=1, seed=seed,
                train_cfg=TrainConfig(),
                backend_factory=lambda: FallbackBackend(), archive=archive)
            mapes.append(rows[0]["mape_mean"])
        medians[size] = float(np.median(mapes))
    elapsed = time.perf_counter() - start
    assert medians[128] >= medians[512] >= medians[2048], medians
    assert medians[2048] <= 0.85 * medians[128], medians
    assert elapsed < 600.0
    report(5, "median MAPE "
              + " -> ".join(f"{medians[s]:.2f}%" for s in sizes)
              + f" (ratio {medians[2048] / medians[128]:.2f} <= 0.85) "
              f"in {elapsed:.0f}s")


def test_acceptance_6_energy_ordering(desk_experiment):
    experiment, build_s = desk_experiment
    rows = {}
    for code, row in experiment.component_rows:
        rows.setdefault(code, {})[row.component] = row
    evaluation = {code: rows[code]["evaluation"].cpu_j_mean for code in rows}
    total = {code: rows[code]["total"].cpu_j_mean for code in rows}
    assert evaluation["ps"] < evaluation["rs"] < evaluation["plain"], evaluation
    for code in ("ps", "pl", "rs", "rl"):
        assert total[code] < total["plain"], total
    assert build_s < 600.0
    report(6, "evaluation energy ps < rs < plain and every surrogate total "
              f"below plain ({build_s:.0f}s shared experiment)")


def test_acceptance_7_convergence_sanity(desk_experiment):
    experiment, build_s = desk_experiment
    for result in experiment.results["ps"]:
        distinct = {record.best_actual for record in result.history}
        assert len(distinct) <= 2, (result.seed, distinct)
    wins = sum(rs.best_fitness <= ps.best_fitness
               for ps, rs in zip(experiment.results["ps"],
                                 experiment.results["rs"]))
    assert wins >= 4, wins
    assert build_s < 600.0
    report(7, f"pretrain-small history flat, retrain-small wins {wins}/5 runs")


def test_acceptance_8_profiler_correctness():
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    for _ in range(1000):
        max_uj = float(rng.integers(1, 10**9))
        before = float(rng.integers(0, int(max_uj)))
        used = float(rng.integers(0, int(max_uj)))
        after = (before + used) % max_uj
        sample = lambda v: EnergySample(v, 0.0, 0, max_uj, max_uj)
        cpu_j, _ = counter_delta(sample(before), sample(after))
        assert cpu_j == pytest.approx(used / 1e6, rel=1e-12, abs=1e-15)

    # Additivity: per-component profiles vs one outer scope around an
    # identical run whose inner profiler charges but does not attribute.
    scenario = build_scenario(GridSpec(rows=2, cols=2, phases=2, vehicles=20,
                                       horizon_s=120, seed=3))
    from surropt.traffic import Evaluator
    cfg = PsoConfig(swarm_size=6, max_fitness_evals=120, n_train=6,
                    n_reeval=3, variant=Variant.PLAIN, seed=0)

    backend_a = FallbackBackend()
    profiler_a = Profiler(backend_a)
    run(cfg, Evaluator(scenario), profiler=profiler_a)
    parts = profiler_a.profiles()
    component_sum = sum(p.seconds for p in parts.values())
    component_cpu = sum(p.cpu_j for p in parts.values())

    backend_b = FallbackBackend()
    outer = Profiler(backend_b)
    inner = Profiler(backend_b, enabled=False)
    with outer.measure(ComponentTag.EVALUATION):
        run(cfg, Evaluator(scenario), profiler=inner)
    whole = outer.profiles()[ComponentTag.EVALUATION]
    assert abs(whole.seconds - component_sum) <= 0.05 * whole.seconds
    assert abs(whole.cpu_j - component_cpu) <= 0.05 * whole.cpu_j

    elapsed = time.perf_counter() - start
    assert elapsed < 5.0
    report(8, f"1000 wraparound cases exact, additivity within 5% "
              f"({elapsed:.2f}s)")


def test_acceptance_9_determinism(tmp_path):
    config = {
        "scenario": {"rows": 2, "cols": 2, "phases": 2, "vehicles": 20,
                     "horizon_s": 120, "seed": 3},
        "swarm": {"swarm_size": 6, "max_fitness_evals": 120,
                  "n_train_small": 6, "n_train_large": 24, "n_reeval": 3},
        "surrogate": {"epochs": 10},
        "energy": {"backend": "fallback"},
        "harness": {"runs": 2, "eval_samples": 4, "sweep_sizes": [16, 32],
                    "sweep_repeats": 2, "scatter_max": 50},
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(["experiment-all", "--config", str(path),
                 "--out", str(out_a), "--seed", "11"]) == 0
    assert main(["experiment-all", "--config", str(path),
                 "--out", str(out_b), "--seed", "11"]) == 0
    names = sorted(p.name for p in out_a.iterdir())
    assert names == sorted(p.name for p in out_b.iterdir())
    for name in names:
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes(), name
    report(9, f"experiment-all byte-identical across invocations "
              f"({len(names)} files)")
