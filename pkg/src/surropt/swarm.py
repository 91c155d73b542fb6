"""Integer-encoded particle swarm optimizer with optional surrogate assistance.

Five variants share one loop:

* ``PLAIN`` evaluates every particle with the actual fitness function.
* ``PRETRAIN_*`` store actual evaluations in a dataset until it reaches the
  training threshold, train the surrogate once, predict everything after
  that, and finish with a single actual evaluation of the best solution in
  the final population.
* ``RETRAIN_*`` retrain every generation once the threshold is reached; after
  each generation's predictions, the top candidates by predicted fitness are
  re-evaluated with the actual function and appended to the dataset.  No
  final evaluation is performed.

The fitness-evaluation counter FE increases once per particle per generation
regardless of whether the fitness came from the simulator or the surrogate;
the dataset-feeding re-evaluations of the retraining variants do not touch
FE.  The global best is refreshed only at generation boundaries, so all
particles within a generation chase the previous generation's best.
"""

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .energy import ComponentTag, Profiler, update_cost_s


class Variant(Enum):
    PLAIN = "plain"
    PRETRAIN_SMALL = "ps"
    PRETRAIN_LARGE = "pl"
    RETRAIN_SMALL = "rs"
    RETRAIN_LARGE = "rl"

    @property
    def uses_surrogate(self):
        return self is not Variant.PLAIN

    @property
    def retrains(self):
        return self in (Variant.RETRAIN_SMALL, Variant.RETRAIN_LARGE)


@dataclass
class PsoConfig:
    swarm_size: int = 20
    max_fitness_evals: int = 2000
    phi1: float = 2.05
    phi2: float = 2.05
    lam: float = 0.5
    w_max: float = 0.5
    w_min: float = 0.1
    n_train: int = 20
    n_reeval: int = 5
    variant: Variant = Variant.PLAIN
    seed: int = 0

    def validate(self):
        if self.swarm_size < 1:
            raise ValueError("swarm_size must be >= 1")
        if self.max_fitness_evals < self.swarm_size:
            raise ValueError("max_fitness_evals must be >= swarm_size")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")
        if self.w_min > self.w_max:
            raise ValueError("w_min must not exceed w_max")
        if self.n_reeval > self.swarm_size:
            raise ValueError("n_reeval must not exceed swarm_size")
        if self.variant.uses_surrogate and self.n_train < self.swarm_size:
            raise ValueError(
                "n_train must be >= swarm_size: training cannot precede the "
                "first full swarm evaluation")

    def generations(self):
        """Generations the loop will execute: ceil((MaxFE - N) / N)."""
        return -((self.max_fitness_evals - self.swarm_size) // -self.swarm_size)


@dataclass
class Particle:
    """Snapshot of one swarm member (RunResult carries the final population)."""
    position: np.ndarray
    velocity: np.ndarray
    best_position: np.ndarray
    best_fitness: float
    fitness: float
    predicted: bool


@dataclass
class GenerationRecord:
    generation: int
    fe: int
    best_actual: float
    actual_evals: int
    energy: dict = field(repr=False, default_factory=dict)


@dataclass
class RunResult:
    variant: Variant
    seed: int
    best_plan: np.ndarray
    best_fitness: float
    history: list
    actual_eval_count: int
    predicted_eval_count: int
    fe: int
    generations: int
    profiles: dict
    prediction_log: list = field(repr=False, default_factory=list)
    final_population: list = field(repr=False, default_factory=list)
    dataset_size: int = 0


def inertia_weight(generation, total_generations, w_max, w_min) -> float:
    """Linear schedule from w_max at generation 0 down to w_min at the end."""
    if total_generations == 0:
        raise ValueError("total_generations must be >= 1")
    if not 0 <= generation <= total_generations:
        raise ValueError("generation must lie in [0, total_generations]")
    return w_max - (w_max - w_min) * generation / total_generations


def update_velocity(position, velocity, personal_best, global_best, w, cfg,
                    rng, v_max) -> np.ndarray:
    """Inertia plus cognitive and social pulls, clamped to [-v_max, v_max].

    The uniform draws are fresh per dimension.  Works on a single particle
    (dim,) or a whole swarm (n, dim) thanks to broadcasting.
    """
    position = np.asarray(position)
    if (np.shape(velocity) != position.shape
            or np.shape(personal_best) != position.shape):
        raise ValueError("position, velocity and personal best shapes differ")
    gb = np.asarray(global_best)
    if gb.shape != position.shape[-1:] and gb.shape != position.shape:
        raise ValueError("global best dimension does not match positions")
    u1 = rng.random(position.shape)
    u2 = rng.random(position.shape)
    v = (w * np.asarray(velocity, float)
         + cfg.phi1 * u1 * (personal_best - position)
         + cfg.phi2 * u2 * (gb - position))
    return np.clip(v, -v_max, v_max)


def truncate_velocity(velocity, lam, rng) -> np.ndarray:
    """Stochastic rounding: floor with probability lam, else ceil."""
    v = np.asarray(velocity, float)
    u = rng.random(v.shape)
    return np.where(u <= lam, np.floor(v), np.ceil(v)).astype(np.int64)


def update_position(position, velocity_int, d_min, d_max) -> np.ndarray:
    """Integer step, clipped back into the duration bounds."""
    position = np.asarray(position, np.int64)
    step = np.asarray(velocity_int, np.int64)
    if step.shape != position.shape:
        raise ValueError("position and velocity shapes differ")
    return np.clip(position + step, d_min, d_max)


def select_retrain_candidates(predictions, n_reeval) -> np.ndarray:
    """Indices of the n_reeval smallest predictions; ties keep the lowest index."""
    if predictions is None:
        raise ValueError("predictions are missing for this generation")
    preds = np.asarray(predictions, float)
    if preds.ndim != 1 or np.any(np.isnan(preds)):
        raise ValueError("every particle needs a predicted fitness")
    if n_reeval > preds.shape[0]:
        raise ValueError("cannot select more candidates than particles")
    return np.argsort(preds, kind="stable")[:n_reeval]


def run(cfg: PsoConfig, evaluator, surrogate_trainer=None, profiler=None) -> RunResult:
    """Execute the configured variant against an evaluator.

    ``evaluator`` must be callable on a plan and expose ``dimension``,
    ``d_min`` and ``d_max`` (plus optionally ``modeled_cost_s``).  For
    surrogate variants, ``surrogate_trainer(plans, fitnesses, generation)``
    must return a model with a ``predict(plan)`` method.
    """
    cfg.validate()
    if cfg.variant.uses_surrogate and surrogate_trainer is None:
        raise ValueError(f"variant {cfg.variant.value} needs a surrogate trainer")
    prof = profiler if profiler is not None else Profiler(None, enabled=False)

    rng = np.random.default_rng(cfg.seed)
    n = cfg.swarm_size
    dim = evaluator.dimension
    lo, hi = evaluator.d_min, evaluator.d_max
    v_max = float(hi - lo)
    eval_cost = getattr(evaluator, "modeled_cost_s", None)
    trainer_cost = getattr(surrogate_trainer, "modeled_cost_s", None)

    state = {"actual": 0, "best_f": math.inf, "best_x": None,
             "fe": 0, "generation": 0}

    def evaluate_actual(plan):
        try:
            with prof.measure(ComponentTag.EVALUATION, modeled_s=eval_cost):
                value = float(evaluator(plan))
                state["actual"] += 1
                if value < state["best_f"]:
                    state["best_f"] = value
                    state["best_x"] = plan.copy()
            return value
        except Exception as exc:
            raise RuntimeError(
                f"evaluator failed at fe={state['fe']}, "
                f"generation={state['generation']}: {exc}") from exc

    with prof.measure(ComponentTag.INITIALIZATION, modeled_s=update_cost_s(n * dim)):
        positions = rng.integers(lo, hi + 1, size=(n, dim)).astype(np.int64)
        velocities = np.zeros((n, dim))

    fits = np.empty(n)
    dataset_plans = []
    dataset_fits = []
    for i in range(n):
        fits[i] = evaluate_actual(positions[i])
        if cfg.variant.uses_surrogate:
            dataset_plans.append(positions[i].copy())
            dataset_fits.append(fits[i])

    with prof.measure(ComponentTag.INITIALIZATION, modeled_s=update_cost_s(n)):
        pbest = positions.copy()
        pbest_fits = fits.copy()
        gi = int(np.argmin(pbest_fits))
        gbest = positions[gi].copy()
        gbest_fit = float(pbest_fits[gi])
    predicted = np.zeros(n, bool)

    fe = n
    generation = 0
    trained = False
    model = None
    retraining = cfg.variant.retrains
    predicted_count = 0
    g_total = max(1, cfg.generations())
    prediction_log = []
    history = [GenerationRecord(0, fe, state["best_f"], state["actual"],
                                prof.snapshot())]

    while fe < cfg.max_fitness_evals:
        state["fe"] = fe
        state["generation"] = generation
        if (cfg.variant.uses_surrogate and len(dataset_fits) >= cfg.n_train
                and (not trained or retraining)):
            plans_arr = np.array(dataset_plans)
            fits_arr = np.array(dataset_fits)
            modeled = trainer_cost(len(dataset_fits)) if trainer_cost else None
            with prof.measure(ComponentTag.TRAINING, modeled_s=modeled):
                model = surrogate_trainer(plans_arr, fits_arr, generation)
            trained = True

        with prof.measure(ComponentTag.UPDATE, modeled_s=update_cost_s(3 * n * dim)):
            w = inertia_weight(generation, g_total, cfg.w_max, cfg.w_min)
            v_half = update_velocity(positions, velocities, pbest, gbest, w,
                                     cfg, rng, v_max)
            v_int = truncate_velocity(v_half, cfg.lam, rng)
            positions = update_position(positions, v_int, lo, hi)
            velocities = v_int.astype(float)

        if trained:
            predict_cost = getattr(model, "modeled_predict_s", None)
            for i in range(n):
                with prof.measure(ComponentTag.PREDICTION, modeled_s=predict_cost):
                    fits[i] = float(model.predict(positions[i]))
                predicted[i] = True
                predicted_count += 1
                prediction_log.append((fe + i + 1, positions[i].copy(), fits[i]))
        else:
            for i in range(n):
                fits[i] = evaluate_actual(positions[i])
                predicted[i] = False
                if cfg.variant.uses_surrogate:
                    dataset_plans.append(positions[i].copy())
                    dataset_fits.append(fits[i])
        fe += n

        with prof.measure(ComponentTag.UPDATE, modeled_s=update_cost_s(n)):
            improved = fits < pbest_fits
            pbest[improved] = positions[improved]
            pbest_fits[improved] = fits[improved]

        if retraining and trained:
            candidates = select_retrain_candidates(fits, cfg.n_reeval)
            for i in candidates:
                actual_fit = evaluate_actual(positions[i])
                dataset_plans.append(positions[i].copy())
                dataset_fits.append(actual_fit)

        with prof.measure(ComponentTag.UPDATE, modeled_s=update_cost_s(n)):
            gi = int(np.argmin(pbest_fits))
            if pbest_fits[gi] < gbest_fit:
                gbest_fit = float(pbest_fits[gi])
                gbest = pbest[gi].copy()
            generation += 1
        history.append(GenerationRecord(generation, fe, state["best_f"],
                                        state["actual"], prof.snapshot()))

    if cfg.variant.uses_surrogate and not retraining:
        # Single actual evaluation of the best solution in the final
        # population (best predicted once trained, best known otherwise).
        state["fe"] = fe
        state["generation"] = generation
        final_idx = int(np.argmin(fits))
        evaluate_actual(positions[final_idx])
        history.append(GenerationRecord(generation, fe, state["best_f"],
                                        state["actual"], prof.snapshot()))

    final_population = [
        Particle(position=positions[i].copy(), velocity=velocities[i].copy(),
                 best_position=pbest[i].copy(), best_fitness=float(pbest_fits[i]),
                 fitness=float(fits[i]), predicted=bool(predicted[i]))
        for i in range(n)
    ]
    return RunResult(
        variant=cfg.variant,
        seed=cfg.seed,
        best_plan=state["best_x"],
        best_fitness=state["best_f"],
        history=history,
        actual_eval_count=state["actual"],
        predicted_eval_count=predicted_count,
        fe=fe,
        generations=generation,
        profiles=prof.profiles(),
        prediction_log=prediction_log,
        final_population=final_population,
        dataset_size=len(dataset_fits),
    )


def expected_eval_counts(cfg: PsoConfig):
    """Closed-form (actual, predicted) evaluation counts for a config.

    Mirrors the loop's accounting without running it; used for documentation
    and as a cross-check in the experiment harness.
    """
    n = cfg.swarm_size
    gens = cfg.generations()
    if not cfg.variant.uses_surrogate:
        return n + gens * n, 0
    trained_at = max(0, -((cfg.n_train - n) // -n))  # ceil((n_train - n) / n)
    if cfg.variant.retrains:
        if trained_at >= gens:
            return n + gens * n, 0
        actual = n + trained_at * n + (gens - trained_at) * cfg.n_reeval
        return actual, (gens - trained_at) * n
    if trained_at >= gens:
        return n + gens * n + 1, 0
    return n + trained_at * n + 1, (gens - trained_at) * n
