#!/usr/bin/env python3
"""
Schedules Tests - self-paced expert weights and curriculum instance weights
"""

import math
import os
import tempfile
import unittest

import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from factories import one_hot_dataset
from lfme_lab.errors import ScheduleError, SplitError
from lfme_lab.imbalance_metrics import split_by_thresholds
from lfme_lab.neuralcore import DenseNet
from lfme_lab.schedules import (ExpertWeightState, InstanceWeightState, ScheduleKind, compute_confidences,
                                expert_weight, initial_instance_weight, progress, read_trajectories_csv,
                                schedule_value, write_trajectories_csv)

unit = st.floats(min_value=0.0, max_value=1.0)
alphas = st.floats(min_value=0.05, max_value=0.95)


class TestExpertWeight(unittest.TestCase):

    def test_branches(self):
        self.assertEqual(expert_weight(0.3, 0.8, 0.6), 1.0)
        self.assertAlmostEqual(expert_weight(0.64, 0.8, 0.6), 0.5, delta=1e-12)
        self.assertEqual(expert_weight(0.8, 0.8, 0.6), 0.0)
        self.assertEqual(expert_weight(0.95, 0.8, 0.6), 0.0)

    def test_continuous_at_the_knee(self):
        for acc_e, alpha in ((0.8, 0.6), (0.5, 0.25), (1.0, 0.9)):
            knee = alpha * acc_e
            self.assertEqual(expert_weight(knee, acc_e, alpha), 1.0)
            self.assertAlmostEqual(expert_weight(knee + 1e-13, acc_e, alpha), 1.0, delta=1e-12)

    def test_knee_example(self):
        self.assertAlmostEqual(expert_weight(0.36, 0.60, 0.6), 1.0, delta=1e-12)

    def test_alpha_one_is_a_step(self):
        self.assertEqual(expert_weight(0.7, 0.7, 1.0), 1.0)
        self.assertEqual(expert_weight(0.71, 0.7, 1.0), 0.0)

    def test_zero_accuracy_expert(self):
        self.assertEqual(expert_weight(0.0, 0.0, 0.6), 0.0)

    def test_alpha_domain(self):
        for alpha in (0.0, -0.1, 1.5):
            with self.assertRaises(ScheduleError):
                expert_weight(0.5, 0.5, alpha)

    @given(unit, unit, st.floats(min_value=1e-3, max_value=1.0), alphas)
    def test_non_increasing_in_student_accuracy(self, a, b, acc_e, alpha):
        low, high = sorted((a, b))
        w_low, w_high = expert_weight(low, acc_e, alpha), expert_weight(high, acc_e, alpha)
        self.assertGreaterEqual(w_low + 1e-12, w_high)
        self.assertTrue(0.0 <= w_high <= 1.0)


class TestExpertWeightState(unittest.TestCase):

    def test_self_paced_history(self):
        state = ExpertWeightState([0.8, 0.5], alpha=0.6)
        self.assertEqual(state.weights, [1.0, 1.0])
        state.update([0.2, 0.2])
        state.update([0.64, 0.6])
        self.assertEqual(state.history[0], [1.0, 1.0])
        self.assertAlmostEqual(state.history[1][0], 0.5, delta=1e-12)
        self.assertEqual(state.history[1][1], 0.0)

    def test_fixed_modes(self):
        state = ExpertWeightState([0.8, 0.5], mode="fixed", fixed_value=0.0)
        self.assertEqual(state.weights, [0.0, 0.0])
        self.assertEqual(state.update([0.9, 0.9]), [0.0, 0.0])
        self.assertEqual(ExpertWeightState([0.8], mode="fixed").update([0.99]), [1.0])

    def test_errors(self):
        with self.assertRaises(ScheduleError):
            ExpertWeightState([0.5], mode="greedy")
        with self.assertRaises(ScheduleError):
            ExpertWeightState([0.5, 0.5]).update([0.1])


class TestScheduleValue(unittest.TestCase):

    def test_shapes(self):
        self.assertAlmostEqual(schedule_value("linear", 0.2, 2, 3), 0.6, delta=1e-12)
        self.assertAlmostEqual(schedule_value("convex", 0.2, 2, 3), 1.0 - 0.8 * math.cos(math.pi / 4), delta=1e-12)
        self.assertAlmostEqual(schedule_value("concave", 0.2, 2, 3), 0.8 * math.log(1.5) / math.log(2) + 0.2,
                               delta=1e-12)

    def test_convex_lags_and_concave_leads(self):
        for epoch in range(2, 10):
            self.assertLess(schedule_value("convex", 0.1, epoch, 10), schedule_value("linear", 0.1, epoch, 10))
            self.assertGreater(schedule_value("concave", 0.1, epoch, 10), schedule_value("linear", 0.1, epoch, 10))

    def test_single_epoch_is_one(self):
        self.assertEqual(schedule_value("linear", 0.3, 1, 1), 1.0)

    def test_domain(self):
        with self.assertRaises(ScheduleError):
            schedule_value("linear", 0.3, 0, 5)
        with self.assertRaises(ScheduleError):
            schedule_value("linear", 0.3, 6, 5)
        with self.assertRaises(ScheduleError):
            schedule_value("cubic", 0.3, 1, 5)
        with self.assertRaises(ScheduleError):
            progress(1, 0)

    def test_vectorized(self):
        v = schedule_value(ScheduleKind.LINEAR, np.array([0.0, 0.5, 1.0]), 2, 3)
        np.testing.assert_allclose(v, [0.5, 0.75, 1.0], rtol=1e-12)

    @given(unit, st.integers(min_value=1, max_value=60), st.sampled_from(list(ScheduleKind)))
    def test_boundaries_and_monotonicity(self, v1, total, kind):
        values = [schedule_value(kind, v1, e, total) for e in range(1, total + 1)]
        if total > 1:
            self.assertEqual(values[0], v1)
        self.assertEqual(values[-1], 1.0)
        self.assertTrue(all(0.0 <= v <= 1.0 for v in values))
        self.assertTrue(all(b >= a - 1e-15 for a, b in zip(values, values[1:])))


class TestInstanceWeights(unittest.TestCase):

    def test_initial_weight(self):
        """Test p = 0.8 with 5 minimum vs 50 average shots starts at 0.08"""
        self.assertAlmostEqual(initial_instance_weight(0.8, 5.0, 50.0), 0.08, delta=1e-12)
        self.assertAlmostEqual(initial_instance_weight(0.8, 5.0, 20.0), 0.2, delta=1e-12)
        self.assertEqual(initial_instance_weight(0.5, 5.0, 5.0), 0.5)
        with self.assertRaises(ScheduleError):
            initial_instance_weight(0.5, 50.0, 5.0)
        with self.assertRaises(ScheduleError):
            initial_instance_weight(1.5, 5.0, 5.0)

    def test_state_grows_to_one(self):
        state = InstanceWeightState.from_confidences(np.array([0.9, 0.4, 1.0]), np.array([0, 1, 1]),
                                                     avg_shots=[5.0, 20.0], kind="linear", total_epochs=4)
        np.testing.assert_allclose(state.initial_weights, [0.9, 0.1, 0.25], rtol=1e-12)
        previous = state.weights_at(1)
        for epoch in range(2, 5):
            current = state.weights_at(epoch)
            self.assertTrue(np.all(current >= previous))
            previous = current
        np.testing.assert_array_equal(previous, np.ones(3))
        self.assertEqual(state.subset_means(4, 2), [1.0, 1.0])
        self.assertAlmostEqual(state.subset_means(1, 3)[1], 0.175, delta=1e-12)
        self.assertEqual(state.subset_means(1, 3)[2], 0.0)

    def test_recompute_is_stateless(self):
        state = InstanceWeightState(np.array([0.2, 0.6]), np.array([0, 0]), "convex", total_epochs=5)
        np.testing.assert_array_equal(state.weights_at(3), state.weights_at(3))
        np.testing.assert_array_equal(state.weights_at(1), [0.2, 0.6])

    def test_disabled_curriculum(self):
        state = InstanceWeightState(np.array([0.2, 0.6]), np.array([0, 1]), total_epochs=5, enabled=False)
        np.testing.assert_array_equal(state.weights_at(1), [1.0, 1.0])
        with self.assertRaises(ScheduleError):
            state.weights_at(6)


class TestConfidences(unittest.TestCase):

    def setUp(self):
        self.dataset = one_hot_dataset()
        self.split = split_by_thresholds(self.dataset.distribution, [3])

    def test_zero_experts_are_uniform(self):
        """Test all-zero expert nets give confidence 1/|S_l| for every instance"""
        experts = [DenseNet.zeros((4, len(members))) for members in self.split.subsets]
        confidences = compute_confidences(experts, self.split, self.dataset)
        train = self.dataset.train
        membership = self.split.membership(4)[train.labels]
        expected = np.array([1.0 / len(self.split.subsets[s]) for s in membership])
        np.testing.assert_allclose(confidences, expected, rtol=1e-12)

    def test_confident_experts(self):
        experts = [DenseNet((4, len(members)), [50.0 * np.eye(4)[:, list(members)]], [np.zeros(len(members))])
                   for members in self.split.subsets]
        confidences = compute_confidences(experts, self.split, self.dataset)
        self.assertTrue(np.all(confidences > 0.999))

    def test_expert_count_mismatch(self):
        with self.assertRaises(SplitError):
            compute_confidences([DenseNet.zeros((4, 2))], self.split, self.dataset)

    def test_uncovered_labels(self):
        partial = split_by_thresholds(self.dataset.distribution.subset([0, 1]), [4])
        experts = [DenseNet.zeros((4, 1)), DenseNet.zeros((4, 1))]
        with self.assertRaises(SplitError):
            compute_confidences(experts, partial, self.dataset)


class TestTrajectories(unittest.TestCase):

    def test_csv_written_and_read(self):
        epochs = [{"epoch": 1, "expert_weights": [1.0, 1.0], "mean_v": [0.5, 0.25], "loss_total": 2.5,
                   "loss_ce": 1.5, "loss_kd": [0.6, 0.4]},
                  {"epoch": 2, "expert_weights": [0.3, 1.0], "mean_v": [1.0, 1.0], "loss_total": 1.25,
                   "loss_ce": 1.0, "loss_kd": [0.2, 0.1]}]
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "trajectories.csv")
            write_trajectories_csv(path, epochs, ["few", "many"])
            with open(path, encoding="utf-8") as f:
                header = f.readline().strip()
            rows = read_trajectories_csv(path)
        self.assertEqual(header, "epoch,w_few,w_many,mean_v_few,mean_v_many,loss_total,loss_ce,"
                                 "loss_kd_few,loss_kd_many")
        self.assertEqual(rows[1]["w_few"], 0.3)
        self.assertEqual(rows[0]["mean_v_many"], 0.25)


if __name__ == "__main__":
    unittest.main()
