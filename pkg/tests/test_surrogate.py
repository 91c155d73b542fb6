import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from surropt.surrogate import (SurrogateModel, TrainConfig, forward,
                               hidden_dims_for, init_model, load_model, mape,
                               mse_loss_and_grads, r_squared, save_model,
                               train, training_mse)


class TestInitModel:
    def test_deterministic_for_seed(self):
        a = init_model([2, 3, 1], seed=11)
        b = init_model([2, 3, 1], seed=11)
        for wa, wb in zip(a.weights, b.weights):
            assert np.array_equal(wa, wb)

    def test_biases_start_zero(self):
        model = init_model([4, 5, 1], seed=0)
        assert all(np.all(b == 0) for b in model.biases)

    def test_parameter_count(self):
        model = init_model([190, 285, 190, 1], seed=0)
        assert model.n_parameters == 108_966

    def test_he_uniform_scale(self):
        model = init_model([100, 50, 1], seed=3)
        limit = np.sqrt(6.0 / 100)
        assert np.all(np.abs(model.weights[0]) < limit)

    def test_rejects_bad_dims(self):
        with pytest.raises(ValueError):
            init_model([], seed=0)
        with pytest.raises(ValueError):
            init_model([3], seed=0)

    def test_hidden_dims_scale_with_problem(self):
        assert hidden_dims_for(190) == [285, 190]
        assert hidden_dims_for(36) == [54, 36]


class TestForward:
    def test_zero_network_predicts_output_mean(self):
        model = init_model([3, 4, 1], seed=0)
        for w in model.weights:
            w[:] = 0.0
        model.out_mean, model.out_std = 7.5, 2.0
        for x in ([0, 0, 0], [1, 2, 3], [60, 60, 60]):
            assert forward(model, x) == 7.5

    def test_hand_computed_2_2_1(self):
        # Identity input scaling, hand-set weights: relu(x @ W1) @ W2.
        model = SurrogateModel(
            [2, 2, 1],
            weights=[np.array([[1.0, -1.0], [2.0, 0.5]]),
                     np.array([[1.0], [3.0]])],
            biases=[np.array([0.5, -0.25]), np.array([0.25])],
            in_min=np.zeros(2), in_max=np.ones(2))
        x = np.array([0.2, 0.4])
        hidden = np.maximum(x @ model.weights[0] + model.biases[0], 0.0)
        expected = float((hidden @ model.weights[1] + model.biases[1])[0])
        assert forward(model, x) == pytest.approx(expected, abs=1e-12)
        assert forward(model, x) == pytest.approx(1.75, abs=1e-9)

    def test_deterministic(self):
        model = init_model([5, 6, 1], seed=2)
        x = np.arange(5)
        assert forward(model, x) == forward(model, x)

    def test_dimension_mismatch(self):
        model = init_model([3, 2, 1], seed=0)
        with pytest.raises(ValueError):
            forward(model, [1, 2])

    def test_piecewise_linear_between_close_points(self, rng):
        model = init_model([4, 6, 3, 1], seed=9, input_bounds=(0, 1))
        a = rng.random(4)
        b = a + 1e-6 * rng.random(4)  # same ReLU sign pattern
        for alpha in (0.25, 0.5, 0.75):
            mix = forward(model, alpha * a + (1 - alpha) * b)
            blend = alpha * forward(model, a) + (1 - alpha) * forward(model, b)
            assert mix == pytest.approx(blend, abs=1e-9)


class TestGradients:
    @pytest.mark.parametrize("seed", range(5))
    def test_matches_central_finite_differences(self, seed):
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
            grad = b_grads[layer] if use_bias else w_grads[layer]
            flat = int(rng.integers(param.size))
            idx = np.unravel_index(flat, param.shape)
            original = param[idx]
            param[idx] = original + eps
            up, _, _ = mse_loss_and_grads(model, x, y)
            param[idx] = original - eps
            down, _, _ = mse_loss_and_grads(model, x, y)
            param[idx] = original
            numeric = (up - down) / (2 * eps)
            denom = max(abs(numeric), abs(grad[idx]), 1e-8)
            assert abs(numeric - grad[idx]) / denom < 1e-4


class TestTrain:
    def test_fits_linear_function(self):
        rng = np.random.default_rng(0)
        x = rng.integers(5, 61, size=(64, 2)).astype(float)
        y = 3.0 * x[:, 0] - 2.0 * x[:, 1] + 10.0
        model = init_model([2, 3, 1], seed=0, input_bounds=(5, 60))
        cfg = TrainConfig(epochs=500, batch_size=16, learning_rate=1e-2, seed=0)
        train(model, x, y, cfg)
        # The network can realize any linear map, so it should approach the
        # least-squares floor (zero for noiseless data).
        xn = model.normalize_inputs(x)
        design = np.hstack([xn, np.ones((64, 1))])
        y_std = (y - model.out_mean) / model.out_std
        residual = np.linalg.lstsq(design, y_std, rcond=None)[1]
        floor = float(residual[0]) / 64 if residual.size else 0.0
        assert training_mse(model, x, y) < floor + 1e-2

    def test_loss_improves_over_first_epoch(self):
        wins = 0
        for seed in range(10):
            rng = np.random.default_rng(seed)
            x = rng.integers(5, 61, size=(48, 2)).astype(float)
            y = x[:, 0] + 0.5 * x[:, 1]
            one = init_model([2, 3, 1], seed=seed, input_bounds=(5, 60))
            train(one, x, y, TrainConfig(epochs=1, batch_size=16,
                                         learning_rate=1e-2, seed=seed))
            many = init_model([2, 3, 1], seed=seed, input_bounds=(5, 60))
            train(many, x, y, TrainConfig(epochs=50, batch_size=16,
                                          learning_rate=1e-2, seed=seed))
            if training_mse(many, x, y) <= training_mse(one, x, y):
                wins += 1
        assert wins >= 9

    def test_deterministic_for_seed(self):
        rng = np.random.default_rng(5)
        x = rng.integers(5, 61, size=(40, 3)).astype(float)
        y = rng.standard_normal(40)
        cfg = TrainConfig(epochs=5, batch_size=8, seed=42)
        a = train(init_model([3, 4, 1], seed=1, input_bounds=(5, 60)), x, y, cfg)
        b = train(init_model([3, 4, 1], seed=1, input_bounds=(5, 60)), x, y, cfg)
        for wa, wb in zip(a.weights, b.weights):
            assert np.array_equal(wa, wb)

    def test_constant_targets_rejected(self):
        x = np.ones((8, 2))
        with pytest.raises(ValueError, match="constant"):
            train(init_model([2, 2, 1], seed=0), x, np.ones(8), TrainConfig())

    def test_normalization_round_trip(self):
        model = init_model([2, 2, 1], seed=0)
        model.out_mean, model.out_std = 3.7, 1.9
        y = np.array([0.12345678901234, 7.5, -2.25])
        std = (y - model.out_mean) / model.out_std
        back = std * model.out_std + model.out_mean
        assert np.all(np.abs(back - y) < 1e-12)


class TestMetrics:
    def test_mape_perfect_fit(self):
        assert mape([1.0, 2.0], [1.0, 2.0]) == 0.0

    def test_mape_hand_computed(self):
        assert mape([1.0, 2.0], [1.1, 1.8]) == pytest.approx(10.0, abs=1e-9)

    def test_mape_zero_actual_rejected(self):
        with pytest.raises(ZeroDivisionError):
            mape([1.0, 0.0], [1.0, 1.0])

    @given(st.floats(min_value=0.1, max_value=100.0),
           st.booleans())
    @settings(max_examples=40, deadline=None)
    def test_mape_scale_free(self, k, negate):
        if negate:
            k = -k
        y = np.array([1.0, 2.0, -3.0, 4.5])
        y_hat = np.array([1.2, 1.9, -2.4, 5.0])
        assert mape(k * y, k * y_hat) == pytest.approx(mape(y, y_hat), rel=1e-9)

    def test_r_squared_perfect_fit(self):
        assert r_squared([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 1.0

    def test_r_squared_mean_predictor_is_zero(self):
        y = [1.0, 2.0, 3.0, 6.0]
        mean = sum(y) / len(y)
        assert r_squared(y, [mean] * 4) == 0.0

    def test_r_squared_hand_computed(self):
        assert r_squared([1.0, 2.0, 3.0], [1.0, 2.0, 4.0]) == pytest.approx(0.5, abs=1e-9)

    def test_r_squared_constant_actual_rejected(self):
        with pytest.raises(ValueError):
            r_squared([2.0, 2.0], [1.0, 3.0])

    @given(st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_r_squared_never_exceeds_one(self, seed):
        rng = np.random.default_rng(seed)
        y = rng.standard_normal(6)
        y_hat = rng.standard_normal(6)
        assert r_squared(y, y_hat) <= 1.0


class TestSaveLoad:
    def test_round_trip_is_bit_exact(self, tmp_path):
        rng = np.random.default_rng(3)
        model = init_model([3, 5, 1], seed=8, input_bounds=(5, 60))
        train(model, rng.integers(5, 61, size=(40, 3)).astype(float),
              rng.standard_normal(40), TrainConfig(epochs=2, seed=1))
        path = tmp_path / "model.json"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.dims == model.dims
        assert loaded.out_mean == model.out_mean
        assert loaded.out_std == model.out_std
        for wa, wb in zip(model.weights, loaded.weights):
            assert np.array_equal(wa, wb)
        for ba, bb in zip(model.biases, loaded.biases):
            assert np.array_equal(ba, bb)
        x = np.array([10, 20, 30])
        assert forward(model, x) == forward(loaded, x)
