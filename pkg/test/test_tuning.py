# test_tuning.py

import math
import unittest
from unittest import mock

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from plsm import tuning
from plsm.model import MultiEdgeNetwork, ObservationMask, edge_probability
from plsm.optimizer import DivergenceError, FitConfig
from plsm.simulate import SimConfig, simulate
from plsm.tuning import (binomial_deviance, cross_validate, make_folds, predict_cells, sparsity_from_proportion)
from plsm.utils import PlsmError
from sample_networks import toy_network, toy_params


class TestSparsity(unittest.TestCase):
    def test_proportions(self):
        self.assertEqual(sparsity_from_proportion(0.7, 100, 10), 700)
        self.assertEqual(sparsity_from_proportion(1.0, 5, 3), 15)
        self.assertEqual(sparsity_from_proportion(1e-6, 5, 3), 1)

    def test_out_of_range(self):
        for bad in (0.0, -0.1, 1.5):
            with self.assertRaises(ValueError):
                sparsity_from_proportion(bad, 5, 3)


class TestFolds(unittest.TestCase):
    def setUp(self):
        self.net = MultiEdgeNetwork(2, 2, [5], np.zeros((5, 2)))

    def test_balanced_partition(self):
        plan = make_folds(self.net, 2, seed=0)
        np.testing.assert_array_equal(plan.sizes(), [5, 5])

    def test_folds_partition_every_cell(self):
        net = toy_network()
        plan = make_folds(net, 3, seed=1)
        masks = [plan.validation_mask(f) for f in range(3)]
        self.assertEqual(sum(m.count for m in masks), net.n_cells)
        for f in range(3):
            for g in range(f + 1, 3):
                self.assertFalse(masks[f].intersects(masks[g]))
            self.assertFalse(plan.training_mask(f).intersects(masks[f]))
            self.assertEqual(plan.training_mask(f).count + masks[f].count, net.n_cells)

    def test_same_seed_same_assignment(self):
        net = toy_network()
        np.testing.assert_array_equal(make_folds(net, 4, 9).assignment, make_folds(net, 4, 9).assignment)

    def test_too_many_folds(self):
        with self.assertRaises(ValueError):
            make_folds(self.net, 11, seed=0)
        with self.assertRaises(ValueError):
            make_folds(self.net, 1, seed=0)

    def test_base_mask_restricts_folds(self):
        net = toy_network()
        base = ObservationMask(np.arange(net.n_cells).reshape(net.Y.shape) % 2 == 0)
        plan = make_folds(net, 2, seed=0, mask=base)
        self.assertEqual(int(plan.sizes().sum()), base.count)
        self.assertTrue(np.all(plan.assignment[~base.cells] == -1))


class TestDeviance(unittest.TestCase):
    def test_coin_flips(self):
        self.assertAlmostEqual(binomial_deviance([0.5] * 4, [1, 0, 1, 1]), 8 * math.log(2), places=12)
        self.assertAlmostEqual(binomial_deviance([0.5] * 4, [0, 0, 0, 0]), 5.5452, places=4)

    def test_confident_and_right(self):
        self.assertLess(binomial_deviance([1 - 1e-9, 1e-9], [1, 0]), 1e-7)

    def test_rejects_boundary_probabilities(self):
        with self.assertRaises(ValueError):
            binomial_deviance([0.0, 0.5], [0, 1])
        with self.assertRaises(ValueError):
            binomial_deviance([1.0], [1])
        with self.assertRaises(ValueError):
            binomial_deviance([0.5], [1, 0])

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.floats(0.01, 0.99), st.integers(0, 1)), min_size=1, max_size=30),
           st.randoms(use_true_random=False))
    def test_permutation_invariant(self, cells, random):
        shuffled = list(cells)
        random.shuffle(shuffled)
        probs, ys = zip(*cells)
        sprobs, sys_ = zip(*shuffled)
        self.assertAlmostEqual(binomial_deviance(probs, ys), binomial_deviance(sprobs, sys_), places=9)
        self.assertGreaterEqual(binomial_deviance(probs, ys), 0.0)


class TestPrediction(unittest.TestCase):
    def test_predictions_match_edge_probability(self):
        net = toy_network()
        params = toy_params()
        mask = ObservationMask.from_cells(net, [(0, 1, 1, 2), (2, 3, 0, 1), (0, 3, 0, 0)])
        (rows, ks), probs = predict_cells(params, net, mask)
        self.assertEqual(probs.shape, (3,))
        i, j, _ = net.row_coordinates()
        for r, k, p in zip(rows, ks, probs):
            self.assertAlmostEqual(p, edge_probability(params, i[r], j[r], k), places=14)


class TestCrossValidate(unittest.TestCase):
    def setUp(self):
        _, self.net = simulate(SimConfig(n=20, K=3, d=2, seed=2))
        self.config = FitConfig(d=1, s=1, max_iters=40, tol=1e-6)

    def test_single_candidate(self):
        result = cross_validate(self.net, [2], [0.7], L=3, config=self.config, seed=0)
        self.assertEqual(result.selected, (2, 42))
        self.assertEqual(result.n_predictions, self.net.n_cells)

    def test_grid_and_argmin(self):
        result = cross_validate(self.net, [1, 2], [0.55, 0.85], L=3, config=self.config, seed=1)
        frame = result.frame()
        self.assertEqual(len(frame), 4)
        self.assertEqual(list(frame.columns[:3]), ["d", "s", "s_prop"])
        best = frame.loc[frame["mean_deviance"].idxmin()]
        self.assertEqual((int(best["d"]), int(best["s"])), result.selected)
        self.assertEqual(int(frame["selected"].sum()), 1)
        self.assertTrue(np.all(result.fold_deviance > 0))

    def test_deterministic_across_workers(self):
        first = cross_validate(self.net, [1, 2], [0.7], L=2, config=self.config, seed=5, n_jobs=1)
        second = cross_validate(self.net, [1, 2], [0.7], L=2, config=self.config, seed=5, n_jobs=2)
        np.testing.assert_array_equal(first.fold_deviance, second.fold_deviance)

    def test_diverging_candidate_is_excluded(self):
        real_fit = tuning.fit

        def flaky_fit(net, mask, config, init, truth=None):
            if config.d == 2:
                raise DivergenceError(3, None)
            return real_fit(net, mask, config, init, truth)

        with mock.patch.object(tuning, "fit", side_effect=flaky_fit):
            with self.assertLogs("plsm", level="WARNING"):
                result = cross_validate(self.net, [1, 2], [0.7], L=2, config=self.config)
        self.assertEqual(result.failed, [(2, 42)])
        self.assertEqual(result.selected, (1, 42))
        self.assertTrue(result.frame()["failed"].iloc[1])

    def test_all_candidates_fail(self):
        with mock.patch.object(tuning, "fit", side_effect=DivergenceError(1, None)):
            with self.assertRaises(PlsmError):
                cross_validate(self.net, [1], [0.7], L=2, config=self.config)

    def test_empty_grid(self):
        with self.assertRaises(ValueError):
            cross_validate(self.net, [], [0.7])

    def test_weight_scale_reaches_every_fold_start(self):
        for scale in ("row-norm", "eigenvalue"):
            with mock.patch.object(tuning, "initialize_svt", wraps=tuning.initialize_svt) as start:
                cross_validate(self.net, [2], [0.7], L=2, config=self.config, weight_scale=scale)
            self.assertEqual(start.call_count, 2)
            self.assertEqual({call.kwargs["weight_scale"] for call in start.call_args_list}, {scale})

    def test_default_weight_scale_is_row_norm(self):
        with mock.patch.object(tuning, "initialize_svt", wraps=tuning.initialize_svt) as start:
            cross_validate(self.net, [2], [0.7], L=2, config=self.config)
        self.assertEqual(start.call_args.kwargs["weight_scale"], "row-norm")

    def test_unknown_weight_scale(self):
        with self.assertRaises(ValueError):
            cross_validate(self.net, [2], [0.7], L=2, config=self.config, weight_scale="other")


if __name__ == '__main__':
    unittest.main()
