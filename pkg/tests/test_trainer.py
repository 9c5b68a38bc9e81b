import logging
import os
import unittest

import numpy as np
import torch

from adapt.trainer import evaluate, mmd_column, train_adaptive
from classifier.network import init_params
from data.capture import Dataset, augment, generate_dataset, split
from models.models import AdaptConfig, CaptureConfig, DomainSpec, ExperimentConfig, Light, Season, Terrain

SLOW = os.getenv("FTRAIL_SLOW_TESTS", "").lower() in ("1", "true", "yes")


def random_dataset(n: int, seed: int, low: int = 0) -> Dataset:
    rng = np.random.default_rng(seed)
    return Dataset(
        pixels=rng.integers(low, 256, (n, 16, 16, 3), dtype=np.uint8),
        labels=rng.integers(0, 3, n).astype(np.uint8),
        domain_ids=np.full(n, seed, dtype=np.uint16),
        pose_meta=np.zeros((n, 3), dtype=np.float32),
    )


TINY = AdaptConfig(
    lambda_=0.5,
    batch_per_domain=4,
    learning_rate=0.01,
    max_iterations=6,
    val_interval=3,
    log_interval=2,
)


class TestEvaluate(unittest.TestCase):
    def test_ties_predict_the_lowest_class(self):
        # Given: all logits equal
        net = init_params(0, image_size=16)
        with torch.no_grad():
            net.heads[0].weight.zero_()
        ds = random_dataset(30, 1)

        # When
        result = evaluate(net, ds)

        # Then
        tl, gs, tr = ds.class_counts()
        np.testing.assert_array_equal(result.confusion[:, 0], [tl, gs, tr])
        self.assertEqual(result.confusion[:, 1:].sum(), 0)
        self.assertAlmostEqual(result.accuracy, tl / 30)

    def test_accuracy_is_the_confusion_trace(self):
        net = init_params(0, image_size=16)
        with torch.no_grad():
            net.heads[0].weight.zero_()
            net.heads[0].bias.copy_(torch.tensor([0.0, 1.0, 0.0]))
        ds = random_dataset(20, 2)
        result = evaluate(net, ds)
        self.assertEqual(result.confusion.sum(), 20)
        self.assertAlmostEqual(result.accuracy, ds.class_counts()[1] / 20)

    def test_empty_dataset(self):
        with self.assertRaises(ValueError):
            evaluate(init_params(0, image_size=16), Dataset.empty(16, 16))


class TestTrainAdaptive(unittest.TestCase):
    def setUp(self):
        logging.getLogger("adapt.trainer").setLevel(logging.WARNING)
        self.sources = [random_dataset(12, 3), random_dataset(10, 4)]
        self.target = random_dataset(9, 5, low=80)
        self.val = random_dataset(15, 6)

    def test_same_seed_same_run(self):
        # When
        net_a, log_a = train_adaptive(TINY, self.sources, self.target, self.val, seed=7)
        net_b, log_b = train_adaptive(TINY, self.sources, self.target, self.val, seed=7)

        # Then
        self.assertEqual(log_a.rows, log_b.rows)
        for (name, a), (_, b) in zip(net_a.state_dict().items(), net_b.state_dict().items(), strict=True):
            self.assertTrue(torch.equal(a, b), name)

    def test_log_schedule_and_columns(self):
        _, log = train_adaptive(TINY, self.sources, self.target, self.val, seed=1)
        self.assertEqual([row["iteration"] for row in log.rows], [0, 2, 3, 4, 6])
        self.assertEqual([row["iteration"] for row in log.validation_rows()], [0, 3, 6])
        self.assertEqual(
            log.columns,
            ["iteration", "lr", "ce", mmd_column(0, "fc_feat"), mmd_column(1, "fc_feat"), "total", "val_accuracy"],
        )
        for row in log.rows:
            self.assertEqual(set(row), set(log.columns))

    def test_keeps_the_best_validating_network(self):
        # When
        net, log = train_adaptive(TINY, self.sources, self.target, self.val, seed=2)

        # Then
        accuracies = [row["val_accuracy"] for row in log.validation_rows()]
        self.assertEqual(log.best_accuracy, max(accuracies))
        self.assertEqual(log.best_iteration, log.validation_rows()[accuracies.index(max(accuracies))]["iteration"])
        self.assertEqual(evaluate(net, self.val).accuracy, log.best_accuracy)

    def test_fine_tunes_from_an_initial_network_without_touching_it(self):
        # Given
        init = init_params(11, image_size=16)
        before = {k: v.clone() for k, v in init.state_dict().items()}
        cfg = TINY.model_copy(update={"lambda_": 0.0, "per_source_heads": True})

        # When
        net, log = train_adaptive(cfg, self.sources, None, self.val, seed=3, init=init)

        # Then
        self.assertEqual(net.num_heads, 2)
        self.assertNotIn(mmd_column(0, "fc_feat"), log.columns)
        for name, value in init.state_dict().items():
            self.assertTrue(torch.equal(value, before[name]), name)

    def test_returns_the_starting_network_when_training_only_hurts(self):
        # Given: an init that predicts class 0 everywhere, validated on all-TL samples
        init = init_params(5, image_size=16)
        with torch.no_grad():
            init.heads[0].weight.zero_()
            init.heads[0].bias.zero_()
        val = random_dataset(15, 6)
        val = Dataset(val.pixels, np.zeros_like(val.labels), val.domain_ids, val.pose_meta)
        source = random_dataset(12, 3)
        source = Dataset(source.pixels, np.full_like(source.labels, 2), source.domain_ids, source.pose_meta)
        cfg = TINY.model_copy(update={"lambda_": 0.0, "learning_rate": 0.05})

        # When
        net, log = train_adaptive(cfg, [source], None, val, seed=4, init=init)

        # Then
        self.assertEqual(log.validation_rows()[0]["val_accuracy"], 1.0)
        self.assertEqual(log.best_iteration, 0)
        for name, value in init.state_dict().items():
            self.assertTrue(torch.equal(net.state_dict()[name], value), name)

    def test_clips_the_gradient_norm(self):
        cfg = TINY.model_copy(update={"lambda_": 0.0, "max_grad_norm": 1e-9})
        init = init_params(8, image_size=16)
        net, _ = train_adaptive(cfg, self.sources, None, self.val, seed=0, init=init)
        for name, value in init.state_dict().items():
            torch.testing.assert_close(net.state_dict()[name], value, atol=1e-6, rtol=0, msg=name)

    def test_rejects_missing_inputs(self):
        with self.assertRaises(ValueError):
            train_adaptive(TINY, self.sources, None, self.val, seed=0)
        with self.assertRaises(ValueError):
            train_adaptive(TINY, self.sources, self.target, Dataset.empty(16, 16), seed=0)
        with self.assertRaises(ValueError):
            train_adaptive(TINY, [], self.target, self.val, seed=0)


@unittest.skipUnless(SLOW, "set FTRAIL_SLOW_TESTS=1 to run")
class TestTrainingSanity(unittest.TestCase):
    def test_baseline_recipe_learns_its_own_domain(self):
        # Given: 2000 summer samples, mirrored for training like cmd_train does
        logging.getLogger("data.capture").setLevel(logging.CRITICAL)
        logging.getLogger("adapt.trainer").setLevel(logging.WARNING)
        spec = DomainSpec(domain_id=3, season=Season.SUMMER, light=Light.MORNING, terrain=Terrain.TRAIL1)
        ds = generate_dataset(spec, 2000, seed=0, capture=CaptureConfig())
        train, held_out = split(ds, 300, seed=1)
        train = augment(train)
        cfg = ExperimentConfig().baseline_config()
        self.assertEqual((cfg.learning_rate, cfg.momentum, cfg.max_iterations), (0.05, 0.9, 3000))

        for seed in (0, 1, 2):
            with self.subTest(seed=seed):
                # When
                net, log = train_adaptive(cfg, [train], None, held_out, seed=seed)

                # Then
                self.assertGreaterEqual(evaluate(net, held_out).accuracy, 0.9)
                self.assertTrue(all(np.isfinite(row["ce"]) for row in log.rows))
                self.assertLess(log.rows[-1]["ce"], 0.5 * log.rows[0]["ce"])


if __name__ == "__main__":
    unittest.main()
