import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from evosts.exceptions import CacheMismatch, DimensionMismatch, EmptyDataset, TooFewPairs, TrainingDiverged
from evosts.lstm_forecaster import (
    LstmDims,
    LstmWeights,
    SgdMomentum,
    TrainConfig,
    backward,
    backward_batch,
    count_parameters,
    dataset_loss,
    forward,
    forward_batch,
    init_weights,
    load_checkpoint,
    mse_loss,
    predict_batch,
    save_checkpoint,
    train,
    train_epoch,
)

from .utils import sine_dataset

TINY = LstmDims(input_dim=8, hidden_dim=4, output_dim=3)


def sigmoid(z):
    return 1.0 / (1.0 + math.exp(-z))


class ParameterCountTests(SimpleTestCase):
    def test_published_architecture(self):
        self.assertEqual(tuple(count_parameters(LstmDims(6400, 100, 128))), (2600400, 12928, 2613328))

    def test_smallest_network(self):
        self.assertEqual(tuple(count_parameters(LstmDims(1, 1, 1))), (12, 2, 14))

    def test_hidden_size_is_unique(self):
        matches = [
            h for h in range(1, 1000)
            if count_parameters(LstmDims(6400, h, 128))[:2] == (2600400, 12928)
        ]
        self.assertEqual(matches, [100])

    def test_flat_vector_length(self):
        self.assertEqual(LstmWeights(TINY).params.shape, (count_parameters(TINY).total,))


class InitTests(SimpleTestCase):
    def test_deterministic(self):
        self.assertTrue(init_weights(TINY, 3).equals(init_weights(TINY, 3)))

    def test_forget_bias_is_one(self):
        _, bias = init_weights(TINY, 3).gate('f')
        np.testing.assert_array_equal(bias, np.ones(TINY.hidden_dim))

    def test_seeds_differ(self):
        self.assertFalse(init_weights(TINY, 3).equals(init_weights(TINY, 4)))

    def test_views_share_storage(self):
        weights = LstmWeights(TINY)
        weights.dense_bias[:] = 7.0
        self.assertEqual(weights.params[-1], 7.0)


class ForwardTests(SimpleTestCase):
    def test_zero_weights_predict_zero(self):
        prediction, _ = forward(LstmWeights(TINY), np.ones(8))
        np.testing.assert_array_equal(prediction, np.zeros(3))

    def test_forget_gate_has_no_effect(self):
        weights = init_weights(TINY, 1)
        x = np.linspace(-1, 1, 8)
        before, _ = forward(weights, x)
        weights.gate_biases[1] += 5.0
        after, _ = forward(weights, x)
        np.testing.assert_array_equal(before, after)

    def test_hand_computed_network(self):
        weights = LstmWeights(LstmDims(2, 2, 1))
        w_i = [[0.1, -0.2], [0.5, 0.6]]
        w_g = [[0.2, 0.1], [-0.3, 0.4]]
        w_o = [[0.3, -0.1], [0.2, 0.2]]
        b_i, b_g, b_o = [0.1, -0.1], [0.05, 0.0], [0.0, 0.2]
        for gate, matrix, bias in (('i', w_i, b_i), ('g', w_g, b_g), ('o', w_o, b_o)):
            gate_weight, gate_bias = weights.gate(gate)
            gate_weight[:, :2] = matrix
            gate_weight[:, 2:] = 0.9  # recurrent weights see a zero state
            gate_bias[:] = bias
        weights.dense_weight[:] = [[0.7, -0.5]]
        weights.dense_bias[:] = [0.1]
        x = [1.0, -0.5]

        expected = 0.1
        for j, dense in enumerate((0.7, -0.5)):
            z_i = w_i[j][0] * x[0] + w_i[j][1] * x[1] + b_i[j]
            z_g = w_g[j][0] * x[0] + w_g[j][1] * x[1] + b_g[j]
            z_o = w_o[j][0] * x[0] + w_o[j][1] * x[1] + b_o[j]
            cell = sigmoid(z_i) * math.tanh(z_g)
            expected += dense * sigmoid(z_o) * math.tanh(cell)

        prediction, _ = forward(weights, x)
        self.assertAlmostEqual(prediction[0], expected, delta=1e-12)

    def test_batch_shape(self):
        prediction, _ = forward_batch(init_weights(TINY), np.zeros((5, 8)))
        self.assertEqual(prediction.shape, (5, 3))

    def test_wrong_feature_length(self):
        with self.assertRaises(DimensionMismatch):
            forward(init_weights(TINY), np.zeros(7))


class LossTests(SimpleTestCase):
    def test_identical(self):
        self.assertEqual(mse_loss([1.0, 2.0], [1.0, 2.0]), 0.0)

    def test_hand_values(self):
        self.assertEqual(mse_loss([0.0, 0.0], [1.0, 1.0]), 1.0)
        self.assertEqual(mse_loss([2.0], [0.0]), 4.0)


class BackwardTests(SimpleTestCase):
    def test_matches_finite_differences(self):
        h = 1e-5
        for seed in range(20):
            rng = np.random.default_rng(seed)
            weights = init_weights(TINY, seed)
            weights.params += rng.normal(scale=0.1, size=weights.params.shape)
            features = rng.standard_normal((5, 8))
            targets = rng.standard_normal((5, 3))

            _, cache = forward_batch(weights, features)
            analytic = backward_batch(weights, features, targets, cache).params

            numeric = np.empty_like(analytic)
            for index in range(len(numeric)):
                plus, minus = weights.copy(), weights.copy()
                plus.params[index] += h
                minus.params[index] -= h
                numeric[index] = (
                    mse_loss(forward_batch(plus, features)[0], targets)
                    - mse_loss(forward_batch(minus, features)[0], targets)
                ) / (2 * h)

            error = np.abs(analytic - numeric) / np.maximum(np.abs(analytic) + np.abs(numeric), 1e-6)
            self.assertLess(error.max(), 1e-4, f"seed {seed}")

    def test_zero_residual_gives_zero_bias_gradient(self):
        weights = init_weights(TINY, 2)
        x = np.linspace(0, 1, 8)
        prediction, cache = forward(weights, x)
        grads = backward(weights, x, prediction, cache)
        np.testing.assert_array_equal(grads.dense_bias, np.zeros(3))

    def test_cache_from_other_weights(self):
        weights = init_weights(TINY, 2)
        x = np.zeros(8)
        _, cache = forward(weights, x)
        with self.assertRaises(CacheMismatch):
            backward(weights.copy(), x, np.zeros(3), cache)

    def test_cache_from_other_input(self):
        weights = init_weights(TINY, 2)
        _, cache = forward(weights, np.zeros(8))
        with self.assertRaises(CacheMismatch):
            backward(weights, np.ones(8), np.zeros(3), cache)


class TrainEpochTests(SimpleTestCase):
    def setUp(self):
        self.dataset = sine_dataset(length=200, feature_len=8, target_len=3)
        self.weights = init_weights(TINY, 0)

    def test_full_batch_is_one_update(self):
        cfg = TrainConfig(batch_size=len(self.dataset), learning_rate=0.1)
        updated = train_epoch(self.weights, self.dataset, cfg, np.random.default_rng(0))
        _, cache = forward_batch(self.weights, self.dataset.features)
        grads = backward_batch(self.weights, self.dataset.features, self.dataset.targets, cache)
        np.testing.assert_allclose(updated.params, self.weights.params - 0.1 * grads.params, atol=1e-12)

    def test_zero_learning_rate(self):
        cfg = TrainConfig(learning_rate=0.0)
        updated = train_epoch(self.weights, self.dataset, cfg, np.random.default_rng(0))
        self.assertTrue(updated.equals(self.weights))

    def test_streams_diverge(self):
        cfg = TrainConfig(batch_size=8)
        first = train_epoch(self.weights, self.dataset, cfg, np.random.default_rng(1))
        second = train_epoch(self.weights, self.dataset, cfg, np.random.default_rng(2))
        self.assertFalse(first.equals(second))

    def test_input_weights_untouched(self):
        before = self.weights.copy()
        train_epoch(self.weights, self.dataset, TrainConfig(), np.random.default_rng(0))
        self.assertTrue(self.weights.equals(before))

    def test_single_pair_is_memorised(self):
        pair = self.dataset.subset([0])
        cfg = TrainConfig(batch_size=1, learning_rate=0.05)
        optimizer = SgdMomentum(cfg.learning_rate, cfg.momentum)
        rng = np.random.default_rng(0)
        weights = self.weights
        for _ in range(200):
            weights = train_epoch(weights, pair, cfg, rng, optimizer)
        self.assertLess(dataset_loss(weights, pair), dataset_loss(self.weights, pair))

    def test_divergence_is_reported(self):
        cfg = TrainConfig(learning_rate=float('inf'))
        with np.errstate(all='ignore'), self.assertRaises(TrainingDiverged):
            train_epoch(self.weights, self.dataset, cfg, np.random.default_rng(0))

    def test_empty_dataset(self):
        with self.assertRaises(EmptyDataset):
            train_epoch(self.weights, self.dataset.subset([]), TrainConfig(), np.random.default_rng(0))


class TrainTests(SimpleTestCase):
    def setUp(self):
        self.dataset = sine_dataset(length=200, feature_len=8, target_len=3)
        self.weights = init_weights(TINY, 0)

    def test_loss_falls(self):
        cfg = TrainConfig(epochs=10, batch_size=8, learning_rate=0.05)
        trained, history = train(self.weights, self.dataset, cfg)
        self.assertLessEqual(len(history), 10)
        self.assertLess(dataset_loss(trained, self.dataset), dataset_loss(self.weights, self.dataset))

    def test_early_stopping_returns_best_epoch(self):
        cfg = TrainConfig(epochs=30, learning_rate=0.0, early_stop_patience=3)
        trained, history = train(self.weights, self.dataset, cfg)
        self.assertTrue(history.stopped_early)
        self.assertEqual(len(history), 4)
        self.assertEqual(history.best_epoch, 0)
        self.assertTrue(trained.equals(self.weights))

    def test_two_pairs(self):
        _, history = train(self.weights, self.dataset.subset([0, 1]), TrainConfig(epochs=3))
        self.assertEqual(len(history.val_loss), len(history.train_loss))

    def test_one_pair_cannot_hold_out(self):
        with self.assertRaises(TooFewPairs):
            train(self.weights, self.dataset.subset([0]), TrainConfig())


class PredictTests(SimpleTestCase):
    def test_empty_input(self):
        self.assertEqual(predict_batch(init_weights(TINY), np.empty((0, 8))).shape, (0, 3))

    def test_one_output_per_row(self):
        self.assertEqual(predict_batch(init_weights(TINY), np.zeros((6, 8))).shape, (6, 3))


class CheckpointTests(SimpleTestCase):
    def test_round_trip_is_bit_exact(self):
        weights = init_weights(TINY, 5)
        with tempfile.TemporaryDirectory() as tmp:
            path = save_checkpoint(weights, Path(tmp) / 'gamma.bin', seed=5, epoch=2)
            loaded, meta = load_checkpoint(path)
        self.assertTrue(loaded.equals(weights))
        self.assertEqual(meta['dims'], {'input_dim': 8, 'hidden_dim': 4, 'output_dim': 3})
        self.assertEqual((meta['seed'], meta['epoch'], meta['checksum']), (5, 2, weights.checksum()))
