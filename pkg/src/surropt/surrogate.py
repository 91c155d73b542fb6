"""Feed-forward neural network surrogate: training, prediction, accuracy.

The network maps a phase plan to a predicted fitness.  Inputs are min-max
normalized to [0, 1] using the duration bounds, targets are standardized to
zero mean / unit variance, and the loss is mean squared error on the
standardized targets.  Hidden layers use ReLU; training is plain Adam with
bias correction over shuffled mini-batches.
"""

import json
import math
from dataclasses import dataclass

import numpy as np


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0

    def validate(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


def hidden_dims_for(dimension):
    """Hidden widths scale with the problem: [1.5*dim, dim], rounded."""
    return [int(round(1.5 * dimension)), int(round(float(dimension)))]


class SurrogateModel:
    """Weights, biases and normalization constants; immutable after training."""

    def __init__(self, dims, weights, biases, in_min, in_max,
                 out_mean=0.0, out_std=1.0):
        self.dims = list(dims)
        self.weights = weights
        self.biases = biases
        self.in_min = np.asarray(in_min, float)
        self.in_max = np.asarray(in_max, float)
        self.out_mean = float(out_mean)
        self.out_std = float(out_std)

    @property
    def n_parameters(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    @property
    def forward_madds(self):
        """Multiply-adds of one forward pass (drives the modeled cost)."""
        return sum(a * b for a, b in zip(self.dims[:-1], self.dims[1:]))

    @property
    def modeled_predict_s(self):
        from .energy import predict_cost_s
        return predict_cost_s(self.forward_madds)

    def normalize_inputs(self, x):
        span = np.where(self.in_max > self.in_min, self.in_max - self.in_min, 1.0)
        return (np.asarray(x, float) - self.in_min) / span

    def predict(self, plan) -> float:
        return forward(self, plan)

    def predict_batch(self, plans) -> np.ndarray:
        out = self._forward_std(self.normalize_inputs(np.atleast_2d(plans)))
        return out[:, 0] * self.out_std + self.out_mean

    def _forward_std(self, x_norm):
        """Forward pass on normalized inputs, standardized output (B, 1)."""
        a = np.atleast_2d(x_norm)
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            a = np.maximum(a @ w + b, 0.0)
        return a @ self.weights[-1] + self.biases[-1]


def init_model(dims, seed, input_bounds=None) -> SurrogateModel:
    """He-uniform weights (scale sqrt(6/fan_in)), zero biases; deterministic."""
    if not dims or len(dims) < 2:
        raise ValueError("dims must list at least input and output sizes")
    if any(d < 1 for d in dims):
        raise ValueError("all layer dims must be >= 1")
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = math.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    if input_bounds is None:
        in_min = np.zeros(dims[0])
        in_max = np.ones(dims[0])
    else:
        lo, hi = input_bounds
        in_min = np.full(dims[0], float(lo))
        in_max = np.full(dims[0], float(hi))
    return SurrogateModel(dims, weights, biases, in_min, in_max)


def forward(model: SurrogateModel, plan) -> float:
    """Predict the fitness of a single plan."""
    x = np.asarray(plan, float)
    if x.shape != (model.dims[0],):
        raise ValueError(
            f"input dimension {x.shape} does not match model input ({model.dims[0]},)")
    out = model._forward_std(model.normalize_inputs(x)[None, :])
    return float(out[0, 0] * model.out_std + model.out_mean)


def mse_loss_and_grads(model: SurrogateModel, x_norm, y_std):
    """MSE loss on standardized targets plus analytic parameter gradients.

    Returns (loss, weight_grads, bias_grads); gradients are laid out like
    model.weights / model.biases.
    """
    x = np.atleast_2d(x_norm)
    y = np.asarray(y_std, float).reshape(-1, 1)
    batch = x.shape[0]

    activations = [x]
    pre = []
    a = x
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        z = a @ w + b
        pre.append(z)
        a = np.maximum(z, 0.0)
        activations.append(a)
    out = a @ model.weights[-1] + model.biases[-1]

    diff = out - y
    loss = float(np.mean(diff ** 2))

    w_grads = [None] * len(model.weights)
    b_grads = [None] * len(model.biases)
    delta = 2.0 * diff / batch
    w_grads[-1] = activations[-1].T @ delta
    b_grads[-1] = delta.sum(axis=0)
    for layer in range(len(model.weights) - 2, -1, -1):
        delta = (delta @ model.weights[layer + 1].T) * (pre[layer] > 0.0)
        w_grads[layer] = activations[layer].T @ delta
        b_grads[layer] = delta.sum(axis=0)
    return loss, w_grads, b_grads


def train(model: SurrogateModel, plans, targets, cfg: TrainConfig) -> SurrogateModel:
    """Fit the model to (plan, fitness) rows; refreshes the output norm.

    Shuffling is driven by cfg.seed, the short final batch is kept, and there
    is no early stopping: exactly cfg.epochs passes over the data.
    """
    cfg.validate()
    x = np.asarray(plans, float)
    y = np.asarray(targets, float)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValueError("plans and targets must have matching row counts")
    if x.shape[1] != model.dims[0]:
        raise ValueError("plan dimension does not match model input")
    if not np.all(np.isfinite(y)):
        raise ValueError("targets must be finite")

    model.out_mean = float(y.mean())
    model.out_std = float(y.std())
    if model.out_std == 0.0:
        raise ValueError("targets are constant; output normalization degenerates")
    y_std = (y - model.out_mean) / model.out_std
    x_norm = model.normalize_inputs(x)

    rng = np.random.default_rng(cfg.seed)
    m_w = [np.zeros_like(w) for w in model.weights]
    v_w = [np.zeros_like(w) for w in model.weights]
    m_b = [np.zeros_like(b) for b in model.biases]
    v_b = [np.zeros_like(b) for b in model.biases]
    step = 0
    n = x.shape[0]
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            _, w_grads, b_grads = mse_loss_and_grads(model, x_norm[idx], y_std[idx])
            step += 1
            bc1 = 1.0 - cfg.beta1 ** step
            bc2 = 1.0 - cfg.beta2 ** step
            for layer in range(len(model.weights)):
                _adam_update(model.weights[layer], w_grads[layer],
                             m_w[layer], v_w[layer], cfg, bc1, bc2)
                _adam_update(model.biases[layer], b_grads[layer],
                             m_b[layer], v_b[layer], cfg, bc1, bc2)
    return model


def _adam_update(param, grad, m, v, cfg, bias_corr1, bias_corr2):
    m *= cfg.beta1
    m += (1.0 - cfg.beta1) * grad
    v *= cfg.beta2
    v += (1.0 - cfg.beta2) * grad ** 2
    param -= cfg.learning_rate * (m / bias_corr1) / (np.sqrt(v / bias_corr2) + cfg.epsilon)


def training_mse(model: SurrogateModel, plans, targets) -> float:
    """MSE on standardized targets using the model's stored output norm."""
    y_std = (np.asarray(targets, float) - model.out_mean) / model.out_std
    out = model._forward_std(model.normalize_inputs(np.asarray(plans, float)))
    return float(np.mean((out[:, 0] - y_std) ** 2))


def mape(actual, predicted) -> float:
    """Mean absolute percentage error, in percent."""
    y = np.asarray(actual, float)
    y_hat = np.asarray(predicted, float)
    if y.shape != y_hat.shape or y.size == 0:
        raise ValueError("actual and predicted must be nonempty and equal length")
    if np.any(y == 0):
        raise ZeroDivisionError("MAPE is undefined when an actual value is zero")
    return float(np.mean(np.abs((y_hat - y) / y)) * 100.0)


def r_squared(actual, predicted) -> float:
    """Coefficient of determination: 1 - SS_res / SS_tot."""
    y = np.asarray(actual, float)
    y_hat = np.asarray(predicted, float)
    if y.shape != y_hat.shape or y.size < 2:
        raise ValueError("need at least two paired values")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        raise ValueError("R^2 is undefined for constant actual values")
    ss_res = float(np.sum((y - y_hat) ** 2))
    return 1.0 - ss_res / ss_tot


def save_model(model: SurrogateModel, path):
    """JSON manifest round-trips bit-exactly (repr-encoded float64)."""
    doc = {
        "dims": model.dims,
        "weights": [w.ravel().tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
        "in_min": model.in_min.tolist(),
        "in_max": model.in_max.tolist(),
        "out_mean": model.out_mean,
        "out_std": model.out_std,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_model(path) -> SurrogateModel:
    with open(path) as fh:
        doc = json.load(fh)
    dims = doc["dims"]
    weights = [np.array(flat, float).reshape(fan_in, fan_out)
               for flat, fan_in, fan_out in zip(doc["weights"], dims[:-1], dims[1:])]
    biases = [np.array(b, float) for b in doc["biases"]]
    return SurrogateModel(dims, weights, biases, doc["in_min"], doc["in_max"],
                          doc["out_mean"], doc["out_std"])
