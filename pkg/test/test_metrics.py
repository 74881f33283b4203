# test_metrics.py

import unittest

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import expit
from scipy.stats import ortho_group

from plsm.metrics import (UndefinedRateError, average_pr_curves, constant_baseline_curve, error_metric_et,
                          precision_recall, procrustes_distance, relative_errors, support_rates)
from plsm.model import ModelParams, log_odds
from sample_networks import random_params


def brute_force_curve(probs, ys):
    """Precision and recall at each distinct score, thresholds ascending."""
    probs = np.asarray(probs)
    ys = np.asarray(ys)
    out = []
    for t in sorted(set(probs.tolist())):
        predicted = probs >= t
        tp = np.sum(predicted & (ys == 1))
        out.append((t, tp / predicted.sum(), tp / ys.sum()))
    return out


class TestProcrustes(unittest.TestCase):
    def test_rotation_has_zero_distance(self):
        rng = np.random.default_rng(0)
        U = rng.standard_normal((12, 3))
        Q = ortho_group.rvs(3, random_state=1)
        dist, R = procrustes_distance(U, U @ Q)
        self.assertLess(dist, 1e-10)
        np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-12)

    def test_distance_is_at_most_plain_difference(self):
        rng = np.random.default_rng(2)
        U1, U2 = rng.standard_normal((2, 10, 2))
        dist, _ = procrustes_distance(U1, U2)
        self.assertLessEqual(dist, np.linalg.norm(U1 - U2) + 1e-12)

    def test_shape_mismatch(self):
        with self.assertRaises(ValueError):
            procrustes_distance(np.ones((3, 2)), np.ones((3, 3)))


class TestRelativeErrors(unittest.TestCase):
    def setUp(self):
        self.truth = random_params(np.random.default_rng(5), 6, 3, 2, density=0.7)

    def test_identical(self):
        summary = relative_errors(self.truth, self.truth)
        for value in summary.as_dict().values():
            self.assertAlmostEqual(value, 0.0, places=12)

    def test_rotated_estimate(self):
        Q = ortho_group.rvs(2, random_state=3)
        rotated = ModelParams.raw(self.truth.a, self.truth.W, self.truth.U @ Q)
        summary = relative_errors(rotated, self.truth)
        self.assertAlmostEqual(summary.rel_U, 0.0, places=8)
        self.assertAlmostEqual(summary.rel_prob, 0.0, places=12)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(6)
        est = random_params(rng, 6, 3, 2, density=0.7)
        summary = relative_errors(est, self.truth)
        truth = self.truth
        self.assertAlmostEqual(summary.rel_a, np.sum((est.a - truth.a) ** 2) / np.sum(truth.a ** 2), places=12)
        self.assertAlmostEqual(summary.rel_W, np.sum((est.W - truth.W) ** 2) / np.sum(truth.W ** 2), places=12)
        ratios = []
        for k in range(3):
            num = den = 0.0
            for i in range(6):
                for j in range(i + 1, 6):
                    p_true = expit(log_odds(truth, i, j, k))
                    num += (expit(log_odds(est, i, j, k)) - p_true) ** 2
                    den += p_true ** 2
            ratios.append(num / den)
        self.assertAlmostEqual(summary.rel_prob, np.mean(ratios), places=12)
        dist, _ = procrustes_distance(est.U, truth.U)
        self.assertAlmostEqual(summary.rel_U, dist ** 2 / 6, places=12)

    def test_zero_reference(self):
        zero_a = ModelParams(np.zeros(6), self.truth.W, self.truth.U)
        with self.assertRaises(ValueError):
            relative_errors(self.truth, zero_a)


class TestErrorMetric(unittest.TestCase):
    def setUp(self):
        self.truth = random_params(np.random.default_rng(8), 5, 2, 2)

    def test_zero_at_truth(self):
        self.assertAlmostEqual(error_metric_et(self.truth, self.truth, 1.3, 2.0), 0.0, places=12)

    def test_baseline_shift(self):
        a = self.truth.a.copy()
        a[2] += 0.1
        shifted = ModelParams(a, self.truth.W, self.truth.U)
        self.assertAlmostEqual(error_metric_et(shifted, self.truth, 1.3, 2.0), 2 * 2 * 5 * 0.01, places=10)


class TestSupportRates(unittest.TestCase):
    def test_exact_support(self):
        W = np.array([[1.0, 0.0], [0.0, 2.0]])
        self.assertEqual(support_rates(W * 3, W), (1.0, 0.0))

    def test_dense_estimate(self):
        W = np.array([[1.0, 0.0], [0.0, 2.0]])
        self.assertEqual(support_rates(np.ones((2, 2)), W), (1.0, 1.0))

    def test_undefined(self):
        with self.assertRaises(UndefinedRateError):
            support_rates(np.ones((2, 2)), np.zeros((2, 2)))
        with self.assertRaises(UndefinedRateError):
            support_rates(np.ones((2, 2)), np.ones((2, 2)))


class TestPrecisionRecall(unittest.TestCase):
    def test_perfect_ranking(self):
        curve = precision_recall([0.9, 0.8, 0.3, 0.1], [1, 1, 0, 0])
        self.assertAlmostEqual(curve.auc, 1.0)

    def test_constant_score(self):
        curve = precision_recall([0.4] * 5, [1, 0, 0, 1, 0])
        self.assertEqual(len(curve.thresholds), 1)
        self.assertAlmostEqual(curve.precision[0], 0.4)
        self.assertAlmostEqual(curve.recall[0], 1.0)

    def test_baseline_curve(self):
        curve = constant_baseline_curve([1, 0, 0, 0])
        self.assertAlmostEqual(curve.precision[0], 0.25)
        self.assertAlmostEqual(curve.recall[0], 1.0)

    def test_no_positives(self):
        with self.assertRaises(UndefinedRateError):
            precision_recall([0.2, 0.4], [0, 0])

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.tuples(st.sampled_from([0.1, 0.2, 0.35, 0.5, 0.7, 0.9]), st.integers(0, 1)),
                    min_size=2, max_size=40).filter(lambda cells: any(y for _, y in cells)))
    def test_matches_brute_force(self, cells):
        probs, ys = zip(*cells)
        curve = precision_recall(probs, ys)
        expected = brute_force_curve(probs, ys)
        self.assertEqual(len(curve.points()), len(expected))
        for (t, p, r), (et, ep, er) in zip(curve.points(), expected):
            self.assertAlmostEqual(t, et)
            self.assertAlmostEqual(p, ep)
            self.assertAlmostEqual(r, er)
        self.assertTrue(0.0 <= curve.auc <= 1.0)

    def test_average_of_identical_curves(self):
        curve = precision_recall([0.9, 0.6, 0.4, 0.2], [1, 0, 1, 0])
        recall, precision = average_pr_curves([curve, curve])
        _, single = average_pr_curves([curve])
        np.testing.assert_allclose(precision, single)
        self.assertEqual(recall.shape, (101,))
        self.assertAlmostEqual(precision[0], 1.0)
        self.assertAlmostEqual(precision[-1], 2 / 3)


if __name__ == '__main__':
    unittest.main()
