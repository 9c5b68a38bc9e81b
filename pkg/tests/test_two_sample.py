import os
import unittest

import numpy as np

from adapt.mmd import bank_for, mmd2
from adapt.two_sample import permutation_test
from models.models import Estimator

SLOW = os.getenv("FTRAIL_SLOW_TESTS", "").lower() in ("1", "true", "yes")


class TestPermutationTest(unittest.TestCase):
    def test_observed_statistic_is_mmd2(self):
        rng = np.random.default_rng(0)
        X, Y = rng.normal(size=(15, 3)), rng.normal(size=(12, 3))
        bank = bank_for(X, Y)
        for estimator in Estimator:
            with self.subTest(estimator=estimator):
                result = permutation_test(bank, X, Y, n_permutations=20, estimator=estimator)
                self.assertAlmostEqual(result.statistic, mmd2(bank, X, Y, estimator).item(), places=10)
                self.assertEqual(len(result.null), 20)
                self.assertEqual(set(result.null_quantiles), {0.5, 0.95, 0.99})

    def test_null_statistics_are_mmd2_of_relabelled_pools(self):
        rng = np.random.default_rng(1)
        X, Y = rng.normal(size=(5, 2)), rng.normal(size=(4, 2))
        bank = bank_for(X, Y)
        result = permutation_test(bank, X, Y, n_permutations=200, seed=3)
        pooled = np.concatenate([X, Y])
        # every null value must be reachable by some split of the pool
        reachable = set()
        for mask in range(1 << 9):
            members = [i for i in range(9) if mask >> i & 1]
            if len(members) == 5:
                others = [i for i in range(9) if i not in members]
                reachable.add(round(mmd2(bank, pooled[members], pooled[others]).item(), 9))
        for value in result.null:
            self.assertIn(round(float(value), 9), reachable)

    def test_p_value_bounds_and_determinism(self):
        rng = np.random.default_rng(2)
        X, Y = rng.normal(size=(10, 2)), rng.normal(loc=3.0, size=(10, 2))
        bank = bank_for(X, Y)
        first = permutation_test(bank, X, Y, n_permutations=50, seed=9)
        second = permutation_test(bank, X, Y, n_permutations=50, seed=9)
        self.assertEqual(first.p_value, second.p_value)
        np.testing.assert_array_equal(first.null, second.null)
        self.assertEqual(first.p_value, 1 / 51)

    def test_needs_a_permutation(self):
        X = np.zeros((3, 2))
        with self.assertRaises(ValueError):
            permutation_test(bank_for(X, X + 1), X, X + 1, n_permutations=0)


@unittest.skipUnless(SLOW, "set FTRAIL_SLOW_TESTS=1 to run")
class TestPermutationTestCalibration(unittest.TestCase):
    def test_rejects_shifted_gaussians(self):
        rng = np.random.default_rng(10)
        rejections = 0
        for trial in range(100):
            X, Y = rng.normal(size=(50, 5)), rng.normal(size=(50, 5))
            Y[:, 0] += 1.0
            rejections += permutation_test(bank_for(X, Y), X, Y, n_permutations=200, seed=trial).p_value < 0.05
        self.assertGreaterEqual(rejections, 95)

    def test_accepts_samples_of_one_distribution(self):
        rng = np.random.default_rng(11)
        rejections = 0
        for trial in range(100):
            X, Y = rng.normal(size=(50, 5)), rng.normal(size=(50, 5))
            rejections += permutation_test(bank_for(X, Y), X, Y, n_permutations=200, seed=trial).p_value < 0.01
        self.assertLessEqual(rejections, 5)


if __name__ == "__main__":
    unittest.main()
