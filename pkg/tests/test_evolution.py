import logging
import math
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np
from django.test import SimpleTestCase

from evosts import serializers
from evosts.evolution import (
    child_stream,
    dictionary_for,
    evaluate_child,
    evosts,
    improvement_summary,
    read_manifest,
    run_generation,
    run_manifest,
    select_best,
    spawn_children,
    write_run,
)
from evosts.exceptions import DimensionMismatch, EmptyPartition, InvalidConfig, TooFewPairs
from evosts.lstm_forecaster import LstmDims, LstmWeights, TrainConfig, init_weights, predict_batch
from evosts.signal_io import partition_generations
from evosts.sparse_coding import Dictionary, SparseConfig, reconstruction_loss

from .utils import sine_dataset, small_evo_config

logger = logging.getLogger(__name__)

DIMS = LstmDims(input_dim=16, hidden_dim=3, output_dim=4)


class SpawnTests(SimpleTestCase):
    def test_single_child_is_exact_copy(self):
        gamma = init_weights(DIMS, 1)
        (child,) = spawn_children(gamma, 1)
        self.assertTrue(child.weights.equals(gamma))
        self.assertIsNot(child.weights, gamma)

    def test_children_start_equal_and_independent(self):
        gamma = init_weights(DIMS, 1)
        children = spawn_children(gamma, 3)
        self.assertTrue(all(child.weights.equals(gamma) for child in children))
        children[0].weights.params[0] += 1.0
        self.assertTrue(children[1].weights.equals(gamma))
        self.assertTrue(init_weights(DIMS, 1).equals(gamma))

    def test_streams_are_keyed_by_child(self):
        first = child_stream(0, 1, 0).random(4)
        again = child_stream(0, 1, 0).random(4)
        other = child_stream(0, 1, 1).random(4)
        np.testing.assert_array_equal(first, again)
        self.assertFalse(np.array_equal(first, other))

    def test_no_children(self):
        with self.assertRaises(InvalidConfig):
            spawn_children(init_weights(DIMS), 0)


class SelectTests(SimpleTestCase):
    def test_first_minimum_wins(self):
        self.assertEqual(select_best([0.5, 0.2, 0.2]), 1)

    def test_single_score(self):
        self.assertEqual(select_best([3.0]), 0)


class EvaluateChildTests(SimpleTestCase):
    def setUp(self):
        self.dictionary = Dictionary(atoms=np.eye(4))
        self.features = sine_dataset().features[:6]

    def test_prediction_equal_to_an_atom(self):
        weights = LstmWeights(DIMS)
        weights.dense_bias[:] = self.dictionary.atoms[:, 2]
        score = evaluate_child(weights, self.dictionary, self.features, SparseConfig(lam=1e-9))
        self.assertLessEqual(score, 1e-6)

    def test_identical_weights_score_identically(self):
        cfg = SparseConfig(lam=0.1)
        first = evaluate_child(init_weights(DIMS, 4), self.dictionary, self.features, cfg)
        second = evaluate_child(init_weights(DIMS, 4), self.dictionary, self.features, cfg)
        self.assertEqual(first, second)

    def test_score_is_mean_window_loss(self):
        atoms = np.random.default_rng(0).standard_normal((4, 2))
        dictionary = Dictionary(atoms=atoms / np.linalg.norm(atoms, axis=0))
        weights = init_weights(DIMS, 4)
        features = self.features[:2]
        cfg = SparseConfig(lam=0.1)
        a, b = (reconstruction_loss(dictionary, y, cfg) for y in predict_batch(weights, features))
        self.assertAlmostEqual(evaluate_child(weights, dictionary, features, cfg), (a + b) / 2, delta=1e-6)

    def test_random_start_score_is_mean_window_loss(self):
        atoms = np.random.default_rng(1).standard_normal((4, 3))
        dictionary = Dictionary(atoms=atoms / np.linalg.norm(atoms, axis=0))
        weights = init_weights(DIMS, 4)
        features = self.features[:3]
        cfg = SparseConfig(lam=0.1, random_init=True, seed=1, max_iter=2)
        losses = [reconstruction_loss(dictionary, y, cfg) for y in predict_batch(weights, features)]
        self.assertAlmostEqual(evaluate_child(weights, dictionary, features, cfg), np.mean(losses), delta=1e-9)

    def test_atom_length_must_match_targets(self):
        with self.assertRaises(DimensionMismatch):
            evaluate_child(init_weights(DIMS), Dictionary(atoms=np.eye(3)), self.features, SparseConfig())

    def test_no_windows(self):
        with self.assertRaises(EmptyPartition):
            evaluate_child(init_weights(DIMS), self.dictionary, self.features[:0], SparseConfig())


class RunGenerationTests(SimpleTestCase):
    def setUp(self):
        self.cfg = small_evo_config()
        self.partition = sine_dataset().subset(range(40))
        self.dictionary = dictionary_for(self.partition, self.cfg, seed_key=0)
        self.gamma = init_weights(DIMS, 0)

    def test_best_is_first_minimum(self):
        result = run_generation(self.gamma, self.partition, self.dictionary, self.cfg)
        self.assertEqual(len(result.children), 4)
        self.assertEqual(result.best.score, min(result.scores))
        self.assertEqual(result.best_index, result.scores.index(min(result.scores)))
        self.assertTrue(all(math.isfinite(score) for score in result.scores))

    def test_children_train_differently(self):
        result = run_generation(self.gamma, self.partition, self.dictionary, self.cfg)
        checksums = {child.weights.checksum() for child in result.children}
        self.assertEqual(len(checksums), 4)

    def test_executor_gives_identical_result(self):
        serial = run_generation(self.gamma, self.partition, self.dictionary, self.cfg, generation_index=1)
        with ThreadPoolExecutor(max_workers=4) as executor:
            parallel = run_generation(
                self.gamma, self.partition, self.dictionary, self.cfg,
                generation_index=1, executor=executor,
            )
        self.assertEqual(serial.scores, parallel.scores)
        self.assertEqual(serial.best_index, parallel.best_index)
        self.assertEqual(
            [child.weights.checksum() for child in serial.children],
            [child.weights.checksum() for child in parallel.children],
        )

    def test_single_child(self):
        cfg = replace(self.cfg, children=1)
        result = run_generation(self.gamma, self.partition, self.dictionary, cfg)
        self.assertEqual(result.best_index, 0)

    def test_scoring_on_holdout(self):
        cfg = replace(self.cfg, score_on_holdout=True)
        result = run_generation(self.gamma, self.partition, self.dictionary, cfg)
        self.assertTrue(all(math.isfinite(score) for score in result.scores))

    def test_empty_partition(self):
        with self.assertRaises(EmptyPartition):
            run_generation(self.gamma, self.partition.subset([]), self.dictionary, self.cfg)

    def train_with_early_stopping(self, **train_options):
        options = {'batch_size': 16, 'learning_rate': 0.05}
        options.update(train_options)
        cfg = replace(self.cfg, child_training='early_stopping', train=TrainConfig(**options))
        return run_generation(self.gamma, self.partition, self.dictionary, cfg)

    def test_early_stopping_follows_epoch_cap(self):
        short = self.train_with_early_stopping(epochs=1, early_stop_patience=5)
        longer = self.train_with_early_stopping(epochs=4, early_stop_patience=5)
        self.assertEqual([len(child.train_history) for child in short.children], [1] * 4)
        self.assertEqual([len(child.train_history) for child in longer.children], [4] * 4)

    def test_early_stopping_stops_on_patience(self):
        result = self.train_with_early_stopping(epochs=20, early_stop_patience=1, learning_rate=0.0)
        self.assertEqual([len(child.train_history) for child in result.children], [2] * 4)
        self.assertTrue(all(child.weights.equals(self.gamma) for child in result.children))

    def test_validation_fraction_changes_training(self):
        first = self.train_with_early_stopping(epochs=2, val_fraction=0.2)
        second = self.train_with_early_stopping(epochs=2, val_fraction=0.5)
        self.assertNotEqual(
            [child.weights.checksum() for child in first.children],
            [child.weights.checksum() for child in second.children],
        )

    def test_unknown_training_mode(self):
        with self.assertRaises(InvalidConfig):
            replace(self.cfg, child_training='forever')


class EvoStsTests(SimpleTestCase):
    def setUp(self):
        self.dataset = sine_dataset()
        self.cfg = small_evo_config()

    def test_runs_every_generation(self):
        run = evosts(self.dataset, self.cfg)
        self.assertEqual(len(run.generations), 3)
        self.assertTrue(all(len(record.children) == 4 for record in run.generations))
        self.assertIs(run.first_generation_best, run.generations[0].best.weights)
        self.assertIs(run.final_generation_best, run.generations[-1].best.weights)
        for record in run.generations:
            self.assertEqual(record.best.score, min(record.scores))

    def test_lineage_starts_from_previous_best(self):
        run = evosts(self.dataset, self.cfg)
        partitions = partition_generations(self.dataset, self.cfg.generations)
        for index in range(1, self.cfg.generations):
            replayed = run_generation(
                run.generations[index - 1].best.weights,
                partitions[index],
                dictionary_for(partitions[index], self.cfg, seed_key=index),
                self.cfg,
                generation_index=index,
            )
            self.assertEqual(
                [child.weights.checksum() for child in replayed.children],
                [child.weights.checksum() for child in run.generations[index].children],
            )

    def test_single_generation(self):
        run = evosts(self.dataset, replace(self.cfg, generations=1))
        self.assertEqual(len(run.generations), 1)
        self.assertTrue(run.first_generation_best.equals(run.final_generation_best))

    def test_deterministic(self):
        first = serializers.dumps(run_manifest(evosts(self.dataset, self.cfg)))
        second = serializers.dumps(run_manifest(evosts(self.dataset, self.cfg)))
        self.assertEqual(first, second)

    def test_thread_count_does_not_change_results(self):
        serial = serializers.dumps(run_manifest(evosts(self.dataset, self.cfg)))
        threaded = serializers.dumps(run_manifest(evosts(self.dataset, replace(self.cfg, threads=4))))
        self.assertEqual(serial, threaded)

    def test_shared_dictionary(self):
        run = evosts(self.dataset, replace(self.cfg, relearn_dictionary_per_partition=False))
        self.assertEqual(len({record.dictionary_checksum for record in run.generations}), 1)

    def test_given_dictionary_is_used_everywhere(self):
        dictionary = Dictionary(atoms=np.eye(4))
        run = evosts(self.dataset, self.cfg, dictionary=dictionary)
        self.assertEqual({record.dictionary_checksum for record in run.generations}, {dictionary.checksum()})

    def test_too_few_pairs(self):
        with self.assertRaises(TooFewPairs):
            evosts(self.dataset.subset([0, 1]), self.cfg)

    def test_improvement_trend(self):
        improved = 0
        for seed in range(10):
            run = evosts(self.dataset, replace(self.cfg, master_seed=seed))
            summary = improvement_summary(run)
            self.assertTrue(math.isfinite(summary['first_generation_best_score']))
            self.assertTrue(math.isfinite(summary['final_generation_best_score']))
            improved += summary['improved']
        logger.info(f"final generation no worse than first in {improved} of 10 runs")


class RunPersistenceTests(SimpleTestCase):
    def test_write_and_read(self):
        run = evosts(sine_dataset(), small_evo_config(generations=2, children=2))
        with tempfile.TemporaryDirectory() as tmp:
            write_run(run, tmp, extra={'inputs': ['sine.csv']})
            manifest, first, final = read_manifest(tmp)
        self.assertEqual(manifest['schema_version'], serializers.SCHEMA_VERSION)
        self.assertEqual(len(manifest['generations']), 2)
        self.assertEqual(manifest['inputs'], ['sine.csv'])
        self.assertNotIn('threads', manifest['config'])
        self.assertTrue(first.equals(run.first_generation_best))
        self.assertTrue(final.equals(run.final_generation_best))
        self.assertEqual(manifest['checkpoints']['final_generation_best']['checksum'], final.checksum())
