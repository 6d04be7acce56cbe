#!/usr/bin/env python3
"""
Distribution Tests - class counts, generation, manifests and dataset files
"""

import os
import tempfile
import unittest

import numpy as np

from factories import one_hot_dataset, tiny_dataset, tiny_spec
from lfme_lab.distribution import (ClassDistribution, Dataset, GeneratorSpec, Partition, class_cardinalities,
                                   generate, load_dataset, load_manifest, save_dataset, save_manifest)
from lfme_lab.errors import DatasetFormatError, ManifestParseError, ShapeError, ValidationError
from lfme_lab.imbalance_metrics import report


class TestClassDistribution(unittest.TestCase):

    def test_rejects_empty_and_non_positive(self):
        """Test distribution validation"""
        with self.assertRaises(ValidationError):
            ClassDistribution(())
        with self.assertRaises(ValidationError):
            ClassDistribution.from_counts([3, 0, 2])
        with self.assertRaises(ValidationError):
            ClassDistribution(((1, 3), (1, 4)))

    def test_accessors(self):
        dist = ClassDistribution.from_mapping({7: 3, 2: 9})
        self.assertEqual(dist.class_ids, (7, 2))
        self.assertEqual(dist.total, 12)
        self.assertEqual(dist.num_classes, 2)
        self.assertEqual(dist.count_of(2), 9)
        np.testing.assert_array_equal(dist.cardinalities, [3, 9])
        self.assertEqual(dist.subset([2]).as_dict(), {2: 9})


class TestGenerator(unittest.TestCase):

    def test_exponential_profile_endpoints(self):
        counts = class_cardinalities(GeneratorSpec(num_classes=30, max_cardinality=500, min_cardinality=5))
        self.assertEqual(counts[0], 500)
        self.assertEqual(counts[-1], 5)
        self.assertTrue(np.all(np.diff(counts) <= 0))

    def test_small_exponential_profiles(self):
        two = GeneratorSpec(num_classes=2, max_cardinality=100, min_cardinality=1)
        three = GeneratorSpec(num_classes=3, max_cardinality=100, min_cardinality=1)
        self.assertEqual(class_cardinalities(two).tolist(), [100, 1])
        self.assertEqual(class_cardinalities(three).tolist(), [100, 10, 1])

    def test_pareto_profile_endpoints(self):
        spec = GeneratorSpec(num_classes=100, profile="pareto", max_cardinality=500, min_cardinality=5)
        counts = class_cardinalities(spec)
        self.assertEqual(counts[0], 500)
        self.assertEqual(counts[-1], 5)
        self.assertTrue(np.all(np.diff(counts) <= 0))

    def test_imbalance_one_is_uniform(self):
        """Test --imbalance 1 gives equal counts and the (1, 0, 0, 0) metrics"""
        spec = GeneratorSpec.from_imbalance(1.0, max_cardinality=50, num_classes=5, feature_dim=2)
        _, dist = generate(spec)
        self.assertEqual(set(dist.cardinalities.tolist()), {50})
        self.assertEqual(report(dist).as_tuple(), (1.0, 0.0, 0.0, 0.0))

    def test_partition_sizes(self):
        spec = tiny_spec()
        dataset, dist = generate(spec)
        self.assertEqual(len(dataset.val), spec.num_classes * spec.val_per_class)
        self.assertEqual(len(dataset.test), spec.num_classes * spec.test_per_class)
        self.assertEqual(dist.cardinalities.tolist(), [40, 25, 16, 10, 6, 4])
        self.assertEqual(dataset.feature_dim, spec.feature_dim)

    def test_generation_is_seeded(self):
        self.assertEqual(tiny_dataset(seed=5), tiny_dataset(seed=5))
        self.assertNotEqual(tiny_dataset(seed=5), tiny_dataset(seed=6))

    def test_invalid_specs(self):
        for spec in (tiny_spec(feature_dim=0), tiny_spec(num_classes=1), tiny_spec(min_cardinality=50),
                     tiny_spec(profile="pareto", power=0.0), tiny_spec(profile="zipf")):
            with self.subTest(spec=spec):
                with self.assertRaises(ValidationError):
                    generate(spec)


class TestDataset(unittest.TestCase):

    def setUp(self):
        self.dataset = one_hot_dataset()

    def test_arrays_are_read_only(self):
        with self.assertRaises(ValueError):
            self.dataset.features[0, 0] = 1.0

    def test_rejects_bad_inputs(self):
        with self.assertRaises(ShapeError):
            Dataset([0, 1], ["train", "train"], [0, 1], np.zeros(2))
        with self.assertRaises(ValidationError):
            Dataset([0, 0], ["train", "train"], [0, 1], np.zeros((2, 1)))
        with self.assertRaises(ValidationError):
            Dataset([0, 1], ["train", "val"], [0, 1], np.zeros((2, 1)))
        with self.assertRaises(ValidationError):
            Dataset([0, 1], ["train", "train"], [0, 3], np.zeros((2, 1)), num_classes=2)

    def test_positions_of(self):
        train = self.dataset.train
        ids = train.instance_ids[[3, 0, 5]]
        np.testing.assert_array_equal(train.positions_of(ids), [3, 0, 5])
        with self.assertRaises(ValidationError):
            train.positions_of([10_000])

    def test_restrict_remaps_labels(self):
        """Test expert label space: sorted class ids become 0..k-1"""
        sub = self.dataset.restrict([3, 1])
        self.assertEqual(sub.num_classes, 2)
        self.assertEqual(sub.distribution.as_dict(), {0: 4, 1: 2})
        original = self.dataset.labels[np.isin(self.dataset.instance_ids, sub.instance_ids)]
        np.testing.assert_array_equal(np.where(original == 1, 0, 1), sub.labels)


class TestFiles(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = self.tmp.name

    def tearDown(self):
        self.tmp.cleanup()

    def _write(self, name, text):
        path = os.path.join(self.dir, name)
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
        return path

    def test_manifest_header_is_optional(self):
        with_header = load_manifest(self._write("a.csv", "class_id,count\n0,5\n1,7\n"))
        without = load_manifest(self._write("b.csv", "\n0,5\n1,7\n"))
        self.assertEqual(with_header, without)

    def test_manifest_errors_carry_line_numbers(self):
        with self.assertRaises(ManifestParseError) as ctx:
            load_manifest(self._write("bad.csv", "class_id,count\n0,5\n1;7\n"))
        self.assertEqual(ctx.exception.line_no, 3)
        self.assertIn("line 3", str(ctx.exception))
        with self.assertRaisesRegex(ValidationError, "line 2"):
            load_manifest(self._write("zero.csv", "0,5\n1,0\n"))
        with self.assertRaisesRegex(ValidationError, "duplicate"):
            load_manifest(self._write("dup.csv", "0,5\n0,6\n"))

    def test_manifest_written_and_read(self):
        dist = ClassDistribution.from_counts([9, 4, 1])
        path = os.path.join(self.dir, "m.csv")
        save_manifest(dist, path)
        self.assertEqual(load_manifest(path), dist)

    def test_dataset_file_is_exact(self):
        """Test saved features reload bit-identically"""
        dataset = tiny_dataset()
        path = os.path.join(self.dir, "d.csv")
        save_dataset(dataset, path)
        self.assertEqual(load_dataset(path), dataset)

    def test_dataset_file_errors(self):
        dataset = tiny_dataset()
        path = os.path.join(self.dir, "d.csv")
        save_dataset(dataset, path)
        with open(path, encoding="utf-8") as f:
            lines = f.read().splitlines()

        with self.assertRaisesRegex(DatasetFormatError, "truncated"):
            load_dataset(self._write("t.csv", "\n".join(lines[:-3]) + "\n"))
        with self.assertRaises(DatasetFormatError):
            load_dataset(self._write("v.csv", "\n".join([lines[0].replace("/1", "/9")] + lines[1:]) + "\n"))
        with self.assertRaises(DatasetFormatError):
            load_dataset(self._write("e.csv", ""))
        short_row = ",".join(lines[1].split(",")[:-1])
        with self.assertRaises(ShapeError):
            load_dataset(self._write("s.csv", "\n".join([lines[0], short_row] + lines[2:]) + "\n"))

    def test_partition_tags(self):
        dataset = tiny_dataset()
        self.assertEqual(set(dataset.partitions.tolist()), {p.value for p in Partition})


if __name__ == "__main__":
    unittest.main()
