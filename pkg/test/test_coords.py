# test_coords.py

import os
import tempfile
import unittest

import numpy as np
import pandas as pd
from scipy.stats import ortho_group

from plsm.coords import (align_positions, aligned, group_weight_summary, positions_frame, preferential_frame,
                         read_groups)
from plsm.fileio import FormatError
from plsm.model import ModelParams
from sample_networks import random_params, toy_params


class TestAlignment(unittest.TestCase):
    def test_rotation_is_undone(self):
        params = random_params(np.random.default_rng(0), 8, 2, 3)
        Q = ortho_group.rvs(3, random_state=2)
        U, dist = align_positions(params.U @ Q, params.U)
        self.assertLess(dist, 1e-10)
        np.testing.assert_allclose(U, params.U, atol=1e-10)

    def test_without_reference(self):
        params = toy_params()
        self.assertIs(aligned(params), params)

    def test_reference_must_match(self):
        with self.assertRaises(ValueError):
            aligned(random_params(np.random.default_rng(1), 5, 2, 2), random_params(np.random.default_rng(1), 5, 2, 3))


class TestFrames(unittest.TestCase):
    def test_positions(self):
        params = toy_params()
        frame = positions_frame(params)
        self.assertEqual(list(frame.columns), ["node", "a"] + [f"x{c + 1}" for c in range(params.d)])
        np.testing.assert_array_equal(frame["a"], params.a)

    def test_preferential_positions_scale_by_weight(self):
        params = toy_params()
        frame = preferential_frame(params, [1])
        coords = frame[[f"x{c + 1}" for c in range(params.d)]].to_numpy()
        np.testing.assert_allclose(coords, params.W[:, [1]] * params.U)
        zero = frame["weight"] == 0
        self.assertTrue(np.all(coords[zero.to_numpy()] == 0))

    def test_topics_are_stacked(self):
        params = toy_params()
        frame = preferential_frame(params, [0, 2])
        self.assertEqual(frame["topic"].tolist(), [0] * params.n + [2] * params.n)


class TestGroups(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def write(self, text):
        path = os.path.join(self.tmp.name, "groups.csv")
        with open(path, "w") as f:
            f.write(text)
        return path

    def test_summary(self):
        W = np.array([[1.0, 0.0], [3.0, 0.0], [0.0, 2.0], [0.0, 4.0]])
        params = ModelParams(np.zeros(4), W, np.tile([1.0, 0.0], (4, 1)))
        groups = read_groups(self.write("node,group\n0,left\n1,left\n2,right\n3,right\n"), 4)
        summary = group_weight_summary(params, groups).set_index(["group", "topic"])
        self.assertAlmostEqual(summary.loc[("left", 0), "mean"], 2.0)
        self.assertAlmostEqual(summary.loc[("left", 0), "q1"], 1.5)
        self.assertAlmostEqual(summary.loc[("right", 1), "q3"], 3.5)
        self.assertEqual(summary.loc[("right", 0), "size"], 2)

    def test_unlisted_nodes_are_left_out(self):
        params = toy_params()
        groups = read_groups(self.write("node,group\n1,a\n3,a\n"), params.n)
        summary = group_weight_summary(params, groups)
        self.assertEqual(summary["size"].tolist(), [2] * params.K)

    def test_bad_files(self):
        for text in ("id,group\n0,a\n", "node,group\n0,a\n0,b\n", "node,group\n9,a\n"):
            with self.assertRaises(FormatError):
                read_groups(self.write(text), 4)


if __name__ == '__main__':
    unittest.main()
