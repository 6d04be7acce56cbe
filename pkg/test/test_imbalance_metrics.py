#!/usr/bin/env python3
"""
Imbalance Metrics Tests - metric oracles, threshold bands and quantile splits
"""

import math
import os
import unittest

import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from lfme_lab.distribution import ClassDistribution, GeneratorSpec, class_cardinalities, load_manifest
from lfme_lab.errors import SplitError, ValidationError
from lfme_lab.imbalance_metrics import (LogBase, comparison_to_json, format_comparison_table, gini, imbalance_abs,
                                        imbalance_kl, imbalance_ratio, longtailness_comparison, quantile_thresholds,
                                        report, split_by_quantiles, split_by_thresholds, subset_names)

counts_strategy = st.lists(st.integers(min_value=1, max_value=5000), min_size=1, max_size=60)


class TestMetricOracles(unittest.TestCase):

    def test_uniform_scores_zero(self):
        dist = ClassDistribution.from_counts([100] * 10)
        values = report(dist).as_tuple()
        for got, expected in zip(values, (1.0, 0.0, 0.0, 0.0)):
            self.assertAlmostEqual(got, expected, delta=1e-12)

    def test_hand_distribution(self):
        """Test {2, 2, 4} against values worked out by hand"""
        dist = ClassDistribution.from_counts([2, 2, 4])
        self.assertEqual(imbalance_ratio(dist), 2.0)
        self.assertAlmostEqual(imbalance_kl(dist), 0.5 * math.log(1.5) + 0.5 * math.log(0.75), delta=1e-12)
        self.assertAlmostEqual(imbalance_kl(dist), 0.058891, delta=1e-6)
        self.assertAlmostEqual(imbalance_abs(dist), 1 / 3, delta=1e-12)
        self.assertAlmostEqual(gini(dist), 1 / 6, delta=1e-12)

    def test_ratio_from_extremes(self):
        self.assertEqual(imbalance_ratio(ClassDistribution.from_counts([5, 1280])), 256.0)

    def test_single_class(self):
        values = report(ClassDistribution.from_counts([42])).as_tuple()
        self.assertEqual(values, (1.0, 0.0, 0.0, 0.0))

    def test_base2_divides_by_ln2(self):
        dist = ClassDistribution.from_counts([2, 2, 4])
        self.assertAlmostEqual(imbalance_kl(dist, "base2"), imbalance_kl(dist) / math.log(2.0), delta=1e-12)
        self.assertEqual(report(dist, "2").log_base, LogBase.BASE2.value)

    def test_unknown_log_base(self):
        with self.assertRaises(ValidationError):
            LogBase.parse("base10")

    def test_gini_is_mean_absolute_difference(self):
        """Test the sorted-rank Gini against sum |N_i - N_j| / (2 C sum N) on random counts"""
        rng = np.random.default_rng(11)
        for _ in range(200):
            counts = rng.integers(1, 5000, size=int(rng.integers(1, 51)))
            c, total = len(counts), int(counts.sum())
            pairs = sum(abs(int(a) - int(b)) for a in counts for b in counts)
            self.assertAlmostEqual(gini(ClassDistribution.from_counts(counts.tolist())), pairs / (2 * c * total),
                                   delta=1e-10)

    @given(counts_strategy)
    def test_metrics_are_bounded(self, counts):
        dist = ClassDistribution.from_counts(counts)
        c = len(counts)
        self.assertGreaterEqual(imbalance_ratio(dist), 1.0)
        self.assertGreaterEqual(imbalance_kl(dist), 0.0)
        self.assertLessEqual(imbalance_kl(dist), math.log(c) + 1e-9)
        self.assertGreaterEqual(imbalance_abs(dist), 0.0)
        self.assertLess(imbalance_abs(dist), 2.0)
        self.assertGreaterEqual(gini(dist), 0.0)
        self.assertLessEqual(gini(dist), (c - 1) / c + 1e-12)

    @given(counts_strategy, st.integers(min_value=1, max_value=7))
    def test_metrics_are_scale_free(self, counts, factor):
        """Multiplying every count by the same factor leaves the metrics unchanged"""
        base = report(ClassDistribution.from_counts(counts)).as_tuple()
        scaled = report(ClassDistribution.from_counts([n * factor for n in counts])).as_tuple()
        np.testing.assert_allclose(scaled, base, rtol=1e-9, atol=1e-12)

    @given(counts_strategy)
    def test_order_does_not_matter(self, counts):
        forward = report(ClassDistribution.from_counts(counts)).as_tuple()
        backward = report(ClassDistribution.from_counts(list(reversed(counts)))).as_tuple()
        np.testing.assert_allclose(backward, forward, rtol=1e-9, atol=1e-12)


class TestThresholdSplit(unittest.TestCase):

    def setUp(self):
        self.dist = ClassDistribution.from_counts([5, 20, 21, 100, 101])

    def test_threshold_counts_go_to_lower_band(self):
        split = split_by_thresholds(self.dist, [20, 100])
        self.assertEqual(split.subsets, ((0, 1), (2, 3), (4,)))
        self.assertEqual(split.names, ("few", "medium", "many"))
        self.assertEqual(split.avg_shots, (12.5, 60.5, 101.0))
        self.assertEqual(split.subset_of(3), 1)
        np.testing.assert_array_equal(split.membership(6), [0, 0, 1, 1, 2, -1])

    def test_no_thresholds_is_one_subset(self):
        split = split_by_thresholds(self.dist, [])
        self.assertEqual(split.names, ("whole",))
        self.assertEqual(split.subsets, ((0, 1, 2, 3, 4),))

    def test_empty_band_is_an_error(self):
        with self.assertRaisesRegex(SplitError, "band 2"):
            split_by_thresholds(self.dist, [50, 60])

    def test_bad_thresholds(self):
        for thresholds in ([0, 20], [100, 20], [20, 20]):
            with self.subTest(thresholds=thresholds):
                with self.assertRaises(SplitError):
                    split_by_thresholds(self.dist, thresholds)

    def test_unknown_class(self):
        with self.assertRaises(SplitError):
            split_by_thresholds(self.dist, [20]).subset_of(99)

    def test_split_dict_round_trip(self):
        split = split_by_thresholds(self.dist, [20, 100])
        self.assertEqual(type(split).from_dict(split.to_dict()), split)

    def test_subset_names(self):
        self.assertEqual(subset_names(2), ("few", "many"))
        self.assertEqual(subset_names(4), ("s1", "s2", "s3", "s4"))

    @given(counts_strategy, st.lists(st.integers(min_value=1, max_value=5000), max_size=4, unique=True))
    def test_bands_partition_the_classes(self, counts, thresholds):
        dist = ClassDistribution.from_counts(counts)
        try:
            split = split_by_thresholds(dist, sorted(thresholds))
        except SplitError:
            return
        self.assertEqual(split.class_ids, dist.class_ids)
        bounds = [0] + sorted(thresholds) + [math.inf]
        for index, members in enumerate(split.subsets):
            for class_id in members:
                self.assertTrue(bounds[index] < counts[class_id] <= bounds[index + 1])


class TestQuantileSplit(unittest.TestCase):

    def test_subsets_are_less_long_tailed(self):
        """Test every subset of a Pareto profile scores lower than the entire set on all four metrics"""
        spec = GeneratorSpec(num_classes=100, profile="pareto", max_cardinality=500, min_cardinality=5)
        dist = ClassDistribution.from_counts(class_cardinalities(spec))
        split = split_by_quantiles(dist, [1 / 3, 2 / 3])
        self.assertEqual(split.num_subsets, 3)
        rows = longtailness_comparison(dist, split)
        entire = rows[0].report.as_tuple()
        for row in rows[1:]:
            for got, whole in zip(row.report.as_tuple(), entire):
                self.assertLess(got, whole, row.name)

    def test_quantiles_on_tiny_counts(self):
        dist = ClassDistribution.from_counts([40, 25, 16, 10, 6, 4])
        self.assertEqual(quantile_thresholds(dist, [1 / 3, 2 / 3]), (6, 16))
        self.assertEqual(quantile_thresholds(dist, [0.5]), (10,))

    def test_tied_counts_collapse(self):
        dist = ClassDistribution.from_counts([10, 10, 10, 10, 50])
        self.assertEqual(quantile_thresholds(dist, [1 / 3, 2 / 3]), (10,))
        self.assertEqual(split_by_quantiles(dist, [1 / 3, 2 / 3]).num_subsets, 2)

    def test_uniform_counts_give_one_subset(self):
        split = split_by_quantiles(ClassDistribution.from_counts([7] * 9), [0.5])
        self.assertEqual(split.names, ("whole",))

    @given(counts_strategy, st.lists(st.floats(min_value=0.01, max_value=0.99), min_size=1, max_size=4))
    def test_quantile_bands_are_never_empty(self, counts, quantiles):
        split = split_by_quantiles(ClassDistribution.from_counts(counts), quantiles)
        self.assertTrue(all(members for members in split.subsets))
        self.assertEqual(sorted(c for members in split.subsets for c in members), list(range(len(counts))))

    def test_quantile_range(self):
        with self.assertRaises(SplitError):
            quantile_thresholds(ClassDistribution.from_counts([1, 2, 3]), [1.0])


class TestComparisonOutput(unittest.TestCase):

    def test_table_and_json(self):
        dist = ClassDistribution.from_counts([5, 20, 21, 100, 101])
        rows = longtailness_comparison(dist, split_by_thresholds(dist, [20, 100]))
        self.assertEqual([r.name for r in rows], ["entire", "few", "medium", "many"])
        table = format_comparison_table(rows)
        self.assertIn("I_Gini", table)
        self.assertIn("log base: natural", table)
        self.assertIn('"split": "entire"', comparison_to_json(rows))

    def test_without_split(self):
        rows = longtailness_comparison(ClassDistribution.from_counts([1, 2]), None)
        self.assertEqual(len(rows), 1)


@unittest.skipUnless(os.environ.get("LFME_IMAGENET_MANIFEST"), "set LFME_IMAGENET_MANIFEST to a class_id,count file")
class TestImageNetManifest(unittest.TestCase):
    """Entire-set longtailness of the ImageNet-LT training counts"""

    # (ratio, kl, abs, gini); ratios are published to one decimal
    TABLE = {
        "entire": (256.0, 0.707, 0.769, 0.524),
        "many": (12.8, 0.278, 0.481, 0.322),
        "medium": (4.7, 0.122, 0.356, 0.235),
        "few": (4.0, 0.099, 0.320, 0.209),
    }

    def test_table_rows(self):
        dist = load_manifest(os.environ["LFME_IMAGENET_MANIFEST"])
        split = split_by_thresholds(dist, [20, 100])
        self.assertEqual(split.num_subsets, 3)
        matching = []
        for base in LogBase:
            rows = {row.name: row.report for row in longtailness_comparison(dist, split, base)}
            self.assertEqual(set(rows), set(self.TABLE))
            for name, (ratio, kl, abs_dev, gini_value) in self.TABLE.items():
                with self.subTest(row=name, base=base.value):
                    self.assertAlmostEqual(rows[name].ratio, ratio, delta=0.05)
                    self.assertAlmostEqual(rows[name].abs_dev, abs_dev, delta=0.01)
                    self.assertAlmostEqual(rows[name].gini, gini_value, delta=0.01)
            if all(abs(rows[name].kl - values[1]) <= 0.01 for name, values in self.TABLE.items()):
                matching.append(base.value)
        print(f"I_KL column matches under log base: {matching or 'none'}")
        self.assertTrue(matching)


if __name__ == "__main__":
    unittest.main()
