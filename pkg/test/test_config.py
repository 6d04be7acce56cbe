#!/usr/bin/env python3
"""
Config Tests - YAML loading, validation, hashing and run directory resolution
"""

import os
import tempfile
import unittest
from pathlib import Path
from unittest import mock

import yaml

from factories import tiny_config, tiny_config_dict
from lfme_lab.config import (DEFAULT_CONFIG_PATH, OUTPUT_ROOT_ENV, RunConfig, config_from_dict, dump_config,
                             load_config, output_root, resolve_run_dir)
from lfme_lab.errors import ConfigError
from lfme_lab.training import ARM_PRESETS


class TestDefaults(unittest.TestCase):

    def test_desk_scale_defaults(self):
        config = load_config()
        self.assertEqual(config.data.num_classes, 30)
        self.assertEqual(config.data.max_cardinality // config.data.min_cardinality, 100)
        self.assertEqual(config.student.epochs, 40)
        self.assertEqual(config.student.lr_milestones, (25, 35))
        self.assertEqual(config.student.sampler, "class_balanced")
        self.assertEqual(config.experts.sampler, "instance_random")
        self.assertIsNone(config.split.thresholds)
        self.assertEqual(config.arms, tuple(ARM_PRESETS))

    def test_packaged_yaml_matches_defaults(self):
        self.assertEqual(load_config(DEFAULT_CONFIG_PATH).config_hash(), RunConfig().config_hash())

    def test_seed_reaches_both_trainings(self):
        config = config_from_dict({"seed": 7})
        self.assertEqual((config.experts.seed, config.student.seed), (7, 7))
        self.assertEqual(config.with_seed(9).student.seed, 9)


class TestValidation(unittest.TestCase):

    def test_unknown_keys_name_their_path(self):
        with self.assertRaisesRegex(ConfigError, "student.learning_rate"):
            config_from_dict({"student": {"learning_rate": 0.1}})
        with self.assertRaisesRegex(ConfigError, "unknown config key verbose"):
            config_from_dict({"verbose": True})
        with self.assertRaisesRegex(ConfigError, "experts.alpha"):
            config_from_dict({"experts": {"alpha": 0.5}})

    def test_bad_values(self):
        for data in ({"student": {"epochs": "many"}}, {"student": {"epochs": 2.5}},
                     {"student": {"kd_t2_scaling": "yes"}}, {"student": {"hidden_dims": 32}},
                     {"data": "none"}, {"arms": ["lfme", "mixup"]}, {"arms": []}, {"arms": "lfme"},
                     {"log_base": "10"}, {"data": {"profile": "zipf"}}, {"seed": -1}):
            with self.subTest(data=data):
                with self.assertRaises(ConfigError):
                    config_from_dict(data)

    def test_optional_fields(self):
        config = config_from_dict({"split": {"thresholds": [20, 100]}, "student": {"epoch_len": None}})
        self.assertEqual(config.split.thresholds, (20, 100))
        self.assertIsNone(config.student.epoch_len)
        self.assertEqual(config_from_dict({"split": {"thresholds": []}}).split.thresholds, ())


class TestFiles(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_dump_and_reload_keep_the_hash(self):
        config = tiny_config()
        path = self.dir / "resolved.yaml"
        dump_config(config, path)
        self.assertEqual(load_config(path).config_hash(), config.config_hash())

    def test_hash_ignores_output_dir_only(self):
        base = tiny_config()
        moved = tiny_config(output_dir="elsewhere")
        self.assertEqual(base.config_hash(), moved.config_hash())
        self.assertNotEqual(base.config_hash(), tiny_config(seed=4).config_hash())

    def test_yaml_errors(self):
        with self.assertRaises(ConfigError):
            load_config(self.dir / "missing.yaml")
        bad = self.dir / "bad.yaml"
        bad.write_text("student: [unclosed\n", encoding="utf-8")
        with self.assertRaises(ConfigError):
            load_config(bad)
        scalar = self.dir / "scalar.yaml"
        scalar.write_text("42\n", encoding="utf-8")
        with self.assertRaisesRegex(ConfigError, "mapping"):
            load_config(scalar)

    def test_empty_file_is_defaults(self):
        empty = self.dir / "empty.yaml"
        empty.write_text("", encoding="utf-8")
        self.assertEqual(load_config(empty).config_hash(), RunConfig().config_hash())

    def test_tiny_yaml(self):
        path = self.dir / "tiny.yaml"
        path.write_text(yaml.safe_dump(tiny_config_dict()), encoding="utf-8")
        self.assertEqual(load_config(path).student.hidden_dims, (8,))


class TestRunDirectory(unittest.TestCase):

    def test_output_root_from_environment(self):
        with mock.patch.dict(os.environ, {OUTPUT_ROOT_ENV: "/tmp/lfme-runs"}):
            self.assertEqual(output_root(), Path("/tmp/lfme-runs"))
            self.assertEqual(resolve_run_dir(tiny_config(output_dir="a")), Path("/tmp/lfme-runs/a"))

    def test_default_root(self):
        with mock.patch.dict(os.environ, {}, clear=True):
            self.assertEqual(resolve_run_dir(tiny_config()), Path("runs/default"))

    def test_absolute_and_override(self):
        self.assertEqual(resolve_run_dir(tiny_config(output_dir="/srv/run")), Path("/srv/run"))
        self.assertEqual(resolve_run_dir(tiny_config(), "here"), Path("here"))


if __name__ == "__main__":
    unittest.main()
